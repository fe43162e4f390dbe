use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contour::ContourSpec;
use crate::error::{Error, Result};
use crate::linalg::{c64, op_norm, CMat, C64, I};
use crate::model::{stadium_boundary, HolomorphyDomain, KernelDerivative, KernelFn, KernelValue, NodeSum, TransferModel};
use crate::quadrature::gauss_legendre_on;

/// Closed-form profile on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `amplitude * exp(-rate |x|)`
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude / cosh(rate x)`
    Sech { amplitude: f64, rate: f64 },
    /// `base + height * exp(-x^2 / (4 width^2))`
    Bump { base: f64, height: f64, width: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Exponential { amplitude, rate } => amplitude * (-rate * x.abs()).exp(),
            Profile::Sech { amplitude, rate } => amplitude / (rate * x).cosh(),
            Profile::Bump { base, height, width } => base + height * (-x * x / (4.0 * width * width)).exp(),
        }
    }

    /// Whether `|f(x)| <= c exp(-alpha0 |x|)` for some c.
    pub fn decays_at(&self, alpha0: f64) -> bool {
        match *self {
            Profile::Zero => true,
            Profile::Constant { value } => value == 0.0,
            Profile::Exponential { amplitude, rate } | Profile::Sech { amplitude, rate } => {
                amplitude == 0.0 || rate.abs() >= alpha0
            }
            Profile::Bump { base, .. } => base == 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub lambda_c: f64,
    pub alpha0: f64,
    pub a: Profile,
    pub s: Profile,
    pub q: Profile,
    pub half_width: f64,
    pub points: usize,
}

/// Uniform grid on [-L, L] with trapezoid weights.
#[derive(Debug, Clone)]
pub struct Grid {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub dx: f64,
}

impl Grid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if points < 3 || points.is_multiple_of(2) {
            return Err(Error::Config(format!("grid point count must be odd and >= 3, got {points}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Config(format!("grid half-width must be positive, got {half_width}")));
        }
        let dx = 2.0 * half_width / (points - 1) as f64;
        let mid = (points / 2) as f64;
        let x = (0..points).map(|j| (j as f64 - mid) * dx).collect();
        let mut w = vec![dx; points];
        w[0] = 0.5 * dx;
        w[points - 1] = 0.5 * dx;
        Ok(Self { x, w, dx })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn l2_norm(&self, f: &[C64]) -> f64 {
        f.iter().zip(&self.w).map(|(v, w)| w * v.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<Grid> {
        if !(self.lambda_c > 0.0 && self.alpha0 > 0.0) {
            return Err(Error::Config("lambda_C and alpha0 must be positive".into()));
        }
        // the coupling s(x) q(x') decays at rate 2 alpha0, so the truncated
        // tail is below exp(-20) once 2 L alpha0 >= 20
        if 2.0 * self.half_width * self.alpha0 < 20.0 {
            return Err(Error::Config(format!(
                "2 L alpha0 = {} is below 20",
                2.0 * self.half_width * self.alpha0
            )));
        }
        for (name, p) in [("s", &self.s), ("q", &self.q)] {
            if !p.decays_at(self.alpha0) {
                return Err(Error::Config(format!("profile {name} does not decay like exp(-alpha0 |x|)")));
            }
        }
        let grid = Grid::new(self.half_width, self.points)?;
        for x in &grid.x {
            for p in [&self.a, &self.s, &self.q] {
                if !p.eval(*x).is_finite() {
                    return Err(Error::NonFinite("channel profile"));
                }
            }
        }
        Ok(grid)
    }
}

/// Rank-2 kernel `K'_ij = c(mu) [s+_i q-_j + s-_i q+_j] w_j` with
/// `s+-(x) = exp(+-i t x) s(x)`, `t = (mu - lambda_C)^{1/2}`.
#[derive(Debug, Clone)]
pub struct ChannelKernel {
    pub lambda_c: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub q: Vec<f64>,
    pub dx: f64,
}

impl ChannelKernel {
    pub fn prefactor(&self, mu: C64) -> (C64, C64) {
        let t = (mu - self.lambda_c).sqrt();
        (t, t / (2.0 * (2.0 * PI).sqrt() * mu))
    }

    pub fn phased(&self, mu: C64) -> [Vec<C64>; 4] {
        let (t, _) = self.prefactor(mu);
        let e = |x: f64, sign: f64| (I * t * (sign * x)).exp();
        let sp = self.x.iter().zip(&self.s).map(|(x, s)| e(*x, 1.0) * *s).collect();
        let sm = self.x.iter().zip(&self.s).map(|(x, s)| e(*x, -1.0) * *s).collect();
        let qp = self.x.iter().zip(&self.q).map(|(x, q)| e(*x, 1.0) * *q).collect();
        let qm = self.x.iter().zip(&self.q).map(|(x, q)| e(*x, -1.0) * *q).collect();
        [sp, sm, qp, qm]
    }
}

impl KernelFn for ChannelKernel {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn eval(&self, mu: C64) -> KernelValue {
        let n = self.x.len();
        let (_, c) = self.prefactor(mu);
        let [sp, sm, qp, qm] = self.phased(mu);
        let left = CMat::from_fn(n, 2, |i, k| c * if k == 0 { sp[i] } else { sm[i] });
        let right = CMat::from_fn(2, n, |k, j| self.w[j] * if k == 0 { qm[j] } else { qp[j] });
        KernelValue::LowRank { left, right }
    }

    fn endpoint_singular(&self) -> bool {
        true
    }

    fn is_zero(&self) -> bool {
        self.s.iter().all(|v| *v == 0.0) || self.q.iter().all(|v| *v == 0.0)
    }

    fn prepare_sum(&self, nodes: &[C64]) -> Box<dyn NodeSum> {
        let n = self.x.len();
        let mut table = Vec::with_capacity(nodes.len());
        for &mu in nodes {
            let (t, c) = self.prefactor(mu);
            let row: Vec<C64> = (0..n).map(|m| (t * (m as f64 * self.dx)).cos() * (2.0 * c)).collect();
            table.push(row);
        }
        Box::new(ToeplitzSum {
            table,
            s: self.s.clone(),
            qw: self.q.iter().zip(&self.w).map(|(q, w)| q * w).collect(),
        })
    }
}

/// On a uniform grid the node sum depends on `i - j` only through
/// `cos(t_k (i - j) dx)`, so it costs O(nodes * n) plus one n x n fill.
struct ToeplitzSum {
    table: Vec<Vec<C64>>,
    s: Vec<f64>,
    qw: Vec<f64>,
}

impl NodeSum for ToeplitzSum {
    fn sum(&self, coeffs: &[C64]) -> CMat {
        let n = self.s.len();
        let mut t = vec![C64::new(0.0, 0.0); n];
        for (row, c) in self.table.iter().zip(coeffs) {
            for (acc, v) in t.iter_mut().zip(row) {
                *acc += c * v;
            }
        }
        CMat::from_fn(n, n, |i, j| t[i.abs_diff(j)] * (self.s[i] * self.qw[j]))
    }
}

/// `C^{-1}(x, x') = exp(-sqrt(lambda_C) |x - x'|) / (2 sqrt(lambda_C))`.
pub fn c_inverse_kernel(lambda_c: f64, x: f64, xp: f64) -> f64 {
    let r = lambda_c.sqrt();
    (-r * (x - xp).abs()).exp() / (2.0 * r)
}

/// `A~ = A - SQ + lambda_C S C^{-1} Q` on the grid.
pub fn a_tilde(spec: &ChannelSpec, grid: &Grid) -> CMat {
    let n = grid.len();
    let s: Vec<f64> = grid.x.iter().map(|x| spec.s.eval(*x)).collect();
    let q: Vec<f64> = grid.x.iter().map(|x| spec.q.eval(*x)).collect();
    CMat::from_fn(n, n, |i, j| {
        let mut v = spec.lambda_c * s[i] * c_inverse_kernel(spec.lambda_c, grid.x[i], grid.x[j]) * q[j] * grid.w[j];
        if i == j {
            v += spec.a.eval(grid.x[i]) - s[i] * q[i];
        }
        c64(v, 0.0)
    })
}

pub fn channel_kernel(spec: &ChannelSpec, grid: &Grid) -> ChannelKernel {
    ChannelKernel {
        lambda_c: spec.lambda_c,
        x: grid.x.clone(),
        w: grid.w.clone(),
        s: grid.x.iter().map(|x| spec.s.eval(*x)).collect(),
        q: grid.x.iter().map(|x| spec.q.eval(*x)).collect(),
        dx: grid.dx,
    }
}

pub fn build_channel_model(spec: &ChannelSpec, alpha1: f64, alpha2: f64, eta: f64, beta: f64) -> Result<TransferModel> {
    let grid = spec.validate()?;
    let domain = HolomorphyDomain::Parabola {
        lambda_c: spec.lambda_c,
        alpha0: spec.alpha0,
    };
    if !stadium_boundary(alpha1, alpha2, eta, 512).iter().all(|z| domain.contains(*z)) {
        return Err(Error::ModelRejected(format!(
            "holomorphy parabola does not contain the {eta}-neighbourhood of [{alpha1}, {alpha2}]"
        )));
    }
    let kernel = KernelDerivative::new("rank2-channel", Arc::new(channel_kernel(spec, &grid)), domain, spec.lambda_c, beta)?;
    TransferModel::new(a_tilde(spec, &grid), kernel, alpha1, alpha2, eta)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsCheck {
    pub hs_lhs: f64,
    pub hs_rhs: f64,
    pub hs_pass: bool,
    pub samples: Vec<KernelBoundSample>,
    pub kernel_pass: bool,
    pub min_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelBoundSample {
    pub mu: C64,
    pub norm: f64,
    pub bound: f64,
}

/// Operator norm on the grid's weighted l2 space.
pub fn weighted_op_norm(m: &CMat, w: &[f64]) -> f64 {
    let n = m.nrows();
    let scaled = CMat::from_fn(n, n, |i, j| m[(i, j)] * (w[i] / w[j]).sqrt());
    op_norm(&scaled)
}

/// Sample points for the kernel bound: a mix of real points above lambda_C
/// and complex points inside the parabola.
pub fn bound_sample_points(spec: &ChannelSpec) -> Vec<C64> {
    let lam = spec.lambda_c;
    let a2 = spec.alpha0 * spec.alpha0;
    let mut pts = Vec::new();
    for k in 0..10 {
        pts.push(c64(lam + 0.05 + 0.6 * k as f64, 0.0));
    }
    for k in 0..10 {
        let im = if k % 2 == 0 { -1.0 } else { 1.0 } * (0.1 + 0.2 * k as f64);
        let re_min = lam - a2 + im * im / (4.0 * a2);
        pts.push(c64(re_min.max(lam) + 0.3 + 0.4 * k as f64, im));
    }
    pts
}

/// Discrete Hilbert-Schmidt bound for `S C^{-1} Q` and the rank-2 norm bound
/// for K'(mu), both in the grid's weighted l2.
pub fn bounds_check(spec: &ChannelSpec, model: &TransferModel) -> Result<BoundsCheck> {
    let grid = spec.validate()?;
    if model.dim() != grid.len() {
        return Err(Error::Dimension(format!(
            "model dimension {} does not match grid size {}",
            model.dim(),
            grid.len()
        )));
    }
    let k = channel_kernel(spec, &grid);
    let mut hs = 0.0;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let v = k.s[i] * c_inverse_kernel(spec.lambda_c, grid.x[i], grid.x[j]) * k.q[j];
            hs += grid.w[i] * grid.w[j] * v * v;
        }
    }
    let real = |f: &[f64]| f.iter().map(|v| c64(*v, 0.0)).collect::<Vec<_>>();
    let ns = grid.l2_norm(&real(&k.s));
    let nq = grid.l2_norm(&real(&k.q));
    let hs_rhs = ns * ns * nq * nq / (4.0 * spec.lambda_c);
    let mut samples = Vec::new();
    let mut min_slack = hs_rhs + 1e-10 - hs;
    for mu in bound_sample_points(spec) {
        let kv = model.kernel.eval_dense(mu)?;
        let norm = weighted_op_norm(&kv, &grid.w);
        let (_, c) = k.prefactor(mu);
        let [sp, sm, qp, qm] = k.phased(mu);
        let bound = c.norm() * (grid.l2_norm(&sm) * grid.l2_norm(&qm) + grid.l2_norm(&sp) * grid.l2_norm(&qp));
        min_slack = min_slack.min(bound + 1e-10 - norm);
        samples.push(KernelBoundSample { mu, norm, bound });
    }
    let kernel_pass = samples.iter().all(|s| s.norm <= s.bound + 1e-10);
    Ok(BoundsCheck {
        hs_lhs: hs,
        hs_rhs,
        hs_pass: hs <= hs_rhs + 1e-10,
        samples,
        kernel_pass,
        min_slack,
    })
}

/// K(mu) from the printed spectral-family kernel, with the multipliers of
/// the reduced coupling, integrated in `t = (mu' - lambda_C)^{1/2}`:
/// `K(mu)_ij = s_i q_j w_j (2/sqrt(2 pi)) int_0^T t^2/(lambda_C + t^2) cos(t (x_i - x_j)) dt`.
pub fn k_from_spectral_family(spec: &ChannelSpec, grid: &Grid, mu: f64, order: usize) -> CMat {
    let n = grid.len();
    if mu <= spec.lambda_c {
        return CMat::zeros(n, n);
    }
    let k = channel_kernel(spec, grid);
    let tmax = (mu - spec.lambda_c).sqrt();
    // panels of width <= 0.25 keep the oscillation at |x - x'| <= 2L resolved
    let panels = ((tmax / 0.25).ceil() as usize).max(1);
    let h = tmax / panels as f64;
    let mut nodes = Vec::new();
    for p in 0..panels {
        let (t, w) = gauss_legendre_on(order, p as f64 * h, (p + 1) as f64 * h);
        nodes.extend(t.into_iter().zip(w));
    }
    let norm = 2.0 / (2.0 * PI).sqrt();
    CMat::from_fn(n, n, |i, j| {
        let d = grid.x[i] - grid.x[j];
        let integral: f64 = nodes
            .iter()
            .map(|(t, w)| w * t * t / (spec.lambda_c + t * t) * (t * d).cos())
            .sum();
        c64(k.s[i] * k.q[j] * grid.w[j] * norm * integral, 0.0)
    })
}

/// Default demonstration: lambda_C = 0.5, alpha0 = 1, s = q = eps exp(-|x|),
/// a = 1.5 + exp(-x^2/4), box [1.5, 2.5], eta = 0.25, L = 12, N = 121,
/// contour on sheet -1 to depth 0.4 with beta = 6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub channel: ChannelSpec,
    pub alpha1: f64,
    pub alpha2: f64,
    pub eta: f64,
    pub contour: ContourSpec,
}

pub const DEFAULT_EPSILON: f64 = 0.015;
pub const DEFAULT_DEPTH: f64 = 0.4;
pub const DEFAULT_SEGMENTS: usize = 16;

pub fn default_scenario() -> Scenario {
    scenario_with(DEFAULT_EPSILON, 121, DEFAULT_DEPTH)
}

pub fn scenario_with(epsilon: f64, points: usize, depth: f64) -> Scenario {
    let coupling = Profile::Exponential {
        amplitude: epsilon,
        rate: 1.0,
    };
    Scenario {
        channel: ChannelSpec {
            lambda_c: 0.5,
            alpha0: 1.0,
            a: Profile::Bump {
                base: 1.5,
                height: 1.0,
                width: 1.0,
            },
            s: coupling.clone(),
            q: coupling,
            half_width: 12.0,
            points,
        },
        alpha1: 1.5,
        alpha2: 2.5,
        eta: 0.25,
        contour: ContourSpec::semi_ellipse(-1, 0.5, 6.0, depth, DEFAULT_SEGMENTS),
    }
}

impl Scenario {
    pub fn model(&self) -> Result<TransferModel> {
        build_channel_model(&self.channel, self.alpha1, self.alpha2, self.eta, self.contour.beta)
    }
}
