use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, check_finite, matmul, op_norm, CMat, CVec, C64, ZERO};
use crate::numrange::NumericalRangeHull;
use crate::quadrature::gauss_legendre_on;

/// Value of K'(mu): either a dense matrix or `left * right` with a small
/// inner dimension.
#[derive(Debug, Clone)]
pub enum KernelValue {
    Dense(CMat),
    LowRank { left: CMat, right: CMat },
}

impl KernelValue {
    pub fn zero(n: usize) -> Self {
        KernelValue::LowRank {
            left: CMat::zeros(n, 0),
            right: CMat::zeros(0, n),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelValue::Dense(m) => m.nrows(),
            KernelValue::LowRank { left, .. } => left.nrows(),
        }
    }

    pub fn dense(&self) -> CMat {
        match self {
            KernelValue::Dense(m) => m.clone(),
            KernelValue::LowRank { left, right } => {
                if left.ncols() == 0 {
                    CMat::zeros(left.nrows(), right.ncols())
                } else {
                    left * right
                }
            }
        }
    }

    /// Factors `(L, R)` with `K = L R`; dense values use `L = K`, `R = I`.
    pub fn factors(&self) -> (CMat, CMat) {
        match self {
            KernelValue::Dense(m) => (m.clone(), CMat::identity(m.nrows(), m.nrows())),
            KernelValue::LowRank { left, right } => (left.clone(), right.clone()),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            KernelValue::Dense(m) => op_norm(m),
            KernelValue::LowRank { left, right } => {
                let r = left.ncols();
                if r == 0 {
                    return 0.0;
                }
                if r >= left.nrows() {
                    return op_norm(&self.dense());
                }
                let qr = left.clone().qr();
                op_norm(&(qr.r() * right))
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        let fin = |m: &CMat| m.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        match self {
            KernelValue::Dense(m) => fin(m),
            KernelValue::LowRank { left, right } => fin(left) && fin(right),
        }
    }
}

/// Weighted node sums `sum_k c_k K'(mu_k)` over a fixed node set.
pub trait NodeSum: Send + Sync {
    fn sum(&self, coeffs: &[C64]) -> CMat;
}

pub trait KernelFn: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn eval(&self, mu: C64) -> KernelValue;

    /// True when K' has an algebraic singularity at lambda_C.
    fn endpoint_singular(&self) -> bool {
        false
    }

    fn is_zero(&self) -> bool {
        false
    }

    fn prepare_sum(&self, nodes: &[C64]) -> Box<dyn NodeSum> {
        Box::new(StackedSum::new(self.dim(), nodes.iter().map(|&mu| self.eval(mu)).collect()))
    }
}

/// Concatenated factors `[L_1 .. L_N]`, `[R_1; ..; R_N]`; column `j` of
/// `left` belongs to node `owner[j]`. Also the default node sum.
#[derive(Debug, Clone)]
pub struct StackedSum {
    pub n: usize,
    pub left: CMat,
    pub right: CMat,
    pub owner: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl StackedSum {
    pub fn new(n: usize, values: Vec<KernelValue>) -> Self {
        let total: usize = values
            .iter()
            .map(|v| match v {
                KernelValue::Dense(m) => m.ncols(),
                KernelValue::LowRank { left, .. } => left.ncols(),
            })
            .sum();
        let mut left = CMat::zeros(n, total);
        let mut right = CMat::zeros(total, n);
        let mut owner = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(values.len() + 1);
        let mut off = 0;
        for (k, v) in values.iter().enumerate() {
            offsets.push(off);
            let (l, r) = v.factors();
            let w = l.ncols();
            left.view_mut((0, off), (n, w)).copy_from(&l);
            right.view_mut((off, 0), (w, n)).copy_from(&r);
            owner.extend(std::iter::repeat_n(k, w));
            off += w;
        }
        offsets.push(off);
        Self {
            n,
            left,
            right,
            owner,
            offsets,
        }
    }

    pub fn nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `sum_k c_k L_k R_k u` in O(n * total rank).
    pub fn apply(&self, coeffs: &[C64], u: &CVec) -> CVec {
        let mut inner = &self.right * u;
        for (j, v) in inner.iter_mut().enumerate() {
            *v *= coeffs[self.owner[j]];
        }
        &self.left * inner
    }

    /// `(sum_k c_k L_k R_k)^H u`.
    pub fn apply_adjoint(&self, coeffs: &[C64], u: &CVec) -> CVec {
        let mut inner = self.left.adjoint() * u;
        for (j, v) in inner.iter_mut().enumerate() {
            *v *= coeffs[self.owner[j]].conj();
        }
        self.right.adjoint() * inner
    }
}

impl NodeSum for StackedSum {
    fn sum(&self, coeffs: &[C64]) -> CMat {
        if self.owner.is_empty() {
            return CMat::zeros(self.n, self.n);
        }
        let mut l = self.left.clone();
        for (j, mut col) in l.column_iter_mut().enumerate() {
            col *= coeffs[self.owner[j]];
        }
        matmul(&l, &self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HolomorphyDomain {
    /// Re mu > lambda_c - alpha0^2 + (Im mu)^2 / (4 alpha0^2), cut along
    /// (lambda_c - alpha0^2, lambda_c].
    Parabola { lambda_c: f64, alpha0: f64 },
    HalfPlane { re_min: f64 },
    Box { re_min: f64, re_max: f64, im_abs_max: f64 },
}

impl HolomorphyDomain {
    pub fn contains(&self, mu: C64) -> bool {
        if !(mu.re.is_finite() && mu.im.is_finite()) {
            return false;
        }
        match *self {
            HolomorphyDomain::Parabola { lambda_c, alpha0 } => {
                let a2 = alpha0 * alpha0;
                let inside = mu.re > lambda_c - a2 + mu.im * mu.im / (4.0 * a2);
                inside && !(mu.im == 0.0 && mu.re <= lambda_c)
            }
            HolomorphyDomain::HalfPlane { re_min } => mu.re > re_min,
            HolomorphyDomain::Box {
                re_min,
                re_max,
                im_abs_max,
            } => mu.re > re_min && mu.re < re_max && mu.im.abs() < im_abs_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelDerivative {
    pub func: Arc<dyn KernelFn>,
    pub domain: HolomorphyDomain,
    pub lambda_c: f64,
    pub beta: f64,
    pub name: String,
}

impl KernelDerivative {
    pub fn new(
        name: impl Into<String>,
        func: Arc<dyn KernelFn>,
        domain: HolomorphyDomain,
        lambda_c: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(lambda_c > 0.0 && beta > lambda_c && beta.is_finite()) {
            return Err(Error::ModelRejected(format!(
                "need 0 < lambda_C < beta, got lambda_C = {lambda_c}, beta = {beta}"
            )));
        }
        let mid = c64(0.5 * (lambda_c + beta), 0.0);
        if !domain.contains(mid) {
            return Err(Error::ModelRejected(
                "holomorphy domain does not contain (lambda_C, beta)".into(),
            ));
        }
        Ok(Self {
            func,
            domain,
            lambda_c,
            beta,
            name: name.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    pub fn admits(&self, mu: C64) -> bool {
        self.domain.contains(mu) || (mu.im == 0.0 && mu.re > self.lambda_c && mu.re.is_finite())
    }

    pub fn eval(&self, mu: C64) -> Result<KernelValue> {
        if !self.admits(mu) {
            return Err(Error::DomainViolation { mu });
        }
        let v = self.func.eval(mu);
        if !v.is_finite() {
            return Err(Error::NonFinite("kernel value"));
        }
        Ok(v)
    }

    pub fn eval_dense(&self, mu: C64) -> Result<CMat> {
        Ok(self.eval(mu)?.dense())
    }
}

pub fn eval_kernel(k: &KernelDerivative, mu: C64) -> Result<CMat> {
    k.eval_dense(mu)
}

#[derive(Debug)]
pub struct ZeroKernel {
    pub n: usize,
}

impl KernelFn for ZeroKernel {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, _mu: C64) -> KernelValue {
        KernelValue::zero(self.n)
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `scale * exp(-rate (mu - shift))`, 1x1.
#[derive(Debug)]
pub struct ScalarExp {
    pub scale: f64,
    pub rate: f64,
    pub shift: f64,
}

impl KernelFn for ScalarExp {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, mu: C64) -> KernelValue {
        let v = ((mu - self.shift) * (-self.rate)).exp() * self.scale;
        KernelValue::Dense(CMat::from_element(1, 1, v))
    }
}

/// `scale * (mu - lambda)^exponent * exp(-decay mu) / mu^inv_mu_power`, 1x1,
/// principal branch.
#[derive(Debug)]
pub struct ScalarPower {
    pub scale: f64,
    pub lambda: f64,
    pub exponent: f64,
    pub decay: f64,
    pub inv_mu_power: f64,
}

impl KernelFn for ScalarPower {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, mu: C64) -> KernelValue {
        let v = (mu - self.lambda).powf(self.exponent) * (-mu * self.decay).exp()
            / mu.powf(self.inv_mu_power)
            * self.scale;
        KernelValue::Dense(CMat::from_element(1, 1, v))
    }
    fn endpoint_singular(&self) -> bool {
        self.exponent.fract() != 0.0
    }
}

/// `sum_j K_j / (mu - p_j)^2` with poles outside the holomorphy domain.
#[derive(Debug)]
pub struct RationalSum {
    pub residues: Vec<CMat>,
    pub poles: Vec<C64>,
}

impl RationalSum {
    /// Closed form of `int_lambda^inf K'(mu) z / (z - mu) dmu` for z off the cut.
    pub fn physical_integral(&self, lambda: f64, z: C64) -> CMat {
        let n = self.dim();
        let mut v = CMat::zeros(n, n);
        let lz = (c64(lambda, 0.0) - z).ln();
        for (k, &p) in self.residues.iter().zip(&self.poles) {
            let lp = (c64(lambda, 0.0) - p).ln();
            let coef = -(lp - lz) / ((z - p) * (z - p)) + 1.0 / ((z - p) * (lambda - p));
            v += k * (coef * z);
        }
        v
    }
}

impl KernelFn for RationalSum {
    fn dim(&self) -> usize {
        self.residues.first().map(|k| k.nrows()).unwrap_or(0)
    }
    fn eval(&self, mu: C64) -> KernelValue {
        let n = self.dim();
        let mut v = CMat::zeros(n, n);
        for (k, &p) in self.residues.iter().zip(&self.poles) {
            v += k * (1.0 / ((mu - p) * (mu - p)));
        }
        KernelValue::Dense(v)
    }
}

/// Reduced model: A~, the kernel, and the box [alpha1, alpha2] whose
/// eta-neighbourhood is claimed to contain the numerical range of A~.
#[derive(Debug, Clone)]
pub struct TransferModel {
    pub a_tilde: CMat,
    pub kernel: KernelDerivative,
    pub alpha1: f64,
    pub alpha2: f64,
    pub eta: f64,
}

impl TransferModel {
    pub fn new(a_tilde: CMat, kernel: KernelDerivative, alpha1: f64, alpha2: f64, eta: f64) -> Result<Self> {
        if !a_tilde.is_square() || a_tilde.nrows() == 0 {
            return Err(Error::Dimension("A~ must be a non-empty square matrix".into()));
        }
        if kernel.dim() != a_tilde.nrows() {
            return Err(Error::Dimension(format!(
                "kernel dimension {} does not match A~ dimension {}",
                kernel.dim(),
                a_tilde.nrows()
            )));
        }
        check_finite(&a_tilde, "A~")?;
        if !(eta > 0.0 && alpha1 <= alpha2) {
            return Err(Error::ModelRejected(format!(
                "need eta > 0 and alpha1 <= alpha2, got eta = {eta}, box = [{alpha1}, {alpha2}]"
            )));
        }
        if alpha1 - eta <= kernel.lambda_c {
            return Err(Error::ModelRejected(format!(
                "alpha1 - eta = {} must exceed lambda_C = {}",
                alpha1 - eta,
                kernel.lambda_c
            )));
        }
        if kernel.beta <= alpha2 + eta {
            return Err(Error::ModelRejected(format!(
                "beta = {} must exceed alpha2 + eta = {}",
                kernel.beta,
                alpha2 + eta
            )));
        }
        Ok(Self {
            a_tilde,
            kernel,
            alpha1,
            alpha2,
            eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_tilde.nrows()
    }

    pub fn lambda_c(&self) -> f64 {
        self.kernel.lambda_c
    }

    pub fn beta(&self) -> f64 {
        self.kernel.beta
    }

    pub fn norm_a(&self) -> f64 {
        op_norm(&self.a_tilde)
    }

    /// Distance from z to the segment [alpha1, alpha2].
    pub fn box_distance(&self, z: C64) -> f64 {
        let x = z.re.clamp(self.alpha1, self.alpha2);
        (z - c64(x, 0.0)).norm()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tail_estimate: f64,
    pub tail_converged: bool,
    pub tail_increments: Vec<f64>,
    pub gamma_lambda: Option<f64>,
    pub gamma_beta: Option<f64>,
    pub endpoint_pass: bool,
    pub hull_max_box_distance: f64,
    pub hull_pass: bool,
    pub neighbourhood_in_domain: bool,
    pub accepted: bool,
    pub reasons: Vec<String>,
}

impl ValidationReport {
    pub fn require(&self) -> Result<()> {
        if self.accepted {
            Ok(())
        } else {
            Err(Error::ModelRejected(self.reasons.join("; ")))
        }
    }
}

pub const ENDPOINT_OFFSETS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Least-squares slope of log|K'| against log|mu - endpoint|. `None` when
/// the kernel vanishes at every offset.
pub fn endpoint_exponent(k: &KernelDerivative, endpoint: f64, side: f64) -> Result<Option<f64>> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &d in &ENDPOINT_OFFSETS {
        let nrm = k.eval(c64(endpoint + side * d, 0.0))?.norm();
        if nrm > 0.0 {
            xs.push(d.ln());
            ys.push(nrm.ln());
        }
    }
    if xs.is_empty() {
        return Ok(None);
    }
    if xs.len() == 1 {
        return Ok(Some(0.0));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(Some(sxy / sxx))
}

pub fn validate_model(m: &TransferModel, quad_budget: usize) -> Result<ValidationReport> {
    let k = &m.kernel;
    let mut reasons = Vec::new();

    // (a) tail integral of (1 + mu)^{-1} |K'(mu)| with doubling upper limit
    let panel = |a: f64, b: f64| -> Result<f64> {
        let (x, w) = gauss_legendre_on(32, a, b);
        let mut s = 0.0;
        for (x, w) in x.iter().zip(&w) {
            s += w * k.eval(c64(*x, 0.0))?.norm() / (1.0 + x);
        }
        Ok(s)
    };
    let mut r = 2.0 * k.beta;
    let mut tail = panel(k.beta, r)?;
    let mut increments = vec![tail];
    let mut tail_converged = tail == 0.0;
    let mut diverging = false;
    let mut rising = 0;
    for _ in 0..quad_budget {
        if tail_converged {
            break;
        }
        let inc = panel(r, 2.0 * r)?;
        r *= 2.0;
        tail += inc;
        if inc >= *increments.last().unwrap_or(&f64::INFINITY) {
            rising += 1;
        } else {
            rising = 0;
        }
        increments.push(inc);
        if rising >= 3 || !inc.is_finite() {
            diverging = true;
            break;
        }
        if inc < 1e-10 {
            tail_converged = true;
        }
    }
    // an exhausted budget only clears the convergence flag
    if diverging {
        reasons.push("tail integral diverges: doubling increments are not decreasing".into());
    }

    // (b) endpoint growth exponents
    let gamma_lambda = endpoint_exponent(k, k.lambda_c, 1.0)?;
    let gamma_beta = endpoint_exponent(k, k.beta, -1.0)?;
    let mut endpoint_pass = true;
    for (g, at) in [(gamma_lambda, "lambda_C"), (gamma_beta, "beta")] {
        if let Some(g) = g {
            if g <= -1.0 + 1e-3 {
                endpoint_pass = false;
                reasons.push(format!("endpoint exponent {g:.4} at {at} is not > -1"));
            }
        }
    }

    // (c) numerical range inside the eta-neighbourhood of the box, which
    // in turn must lie inside the holomorphy domain
    let hull = NumericalRangeHull::new(&m.a_tilde, crate::numrange::DEFAULT_ANGLES)?;
    let hull_max_box_distance = hull
        .outer_polygon()
        .iter()
        .chain(hull.boundary_points.iter())
        .map(|&p| m.box_distance(p))
        .fold(0.0, f64::max);
    let hull_pass = hull_max_box_distance <= m.eta;
    if !hull_pass {
        reasons.push(format!(
            "numerical range reaches distance {hull_max_box_distance:.6} from the box, eta = {}",
            m.eta
        ));
    }
    let neighbourhood_in_domain = stadium_boundary(m.alpha1, m.alpha2, m.eta, 256)
        .into_iter()
        .all(|p| k.domain.contains(p));
    if !neighbourhood_in_domain {
        reasons.push("eta-neighbourhood of the box leaves the holomorphy domain".into());
    }

    let accepted = !diverging && endpoint_pass && hull_pass && neighbourhood_in_domain;
    Ok(ValidationReport {
        tail_estimate: tail,
        tail_converged,
        tail_increments: increments,
        gamma_lambda,
        gamma_beta,
        endpoint_pass,
        hull_max_box_distance,
        hull_pass,
        neighbourhood_in_domain,
        accepted,
        reasons,
    })
}

/// Boundary samples of {z : dist(z, [a1, a2]) = eta}.
pub fn stadium_boundary(a1: f64, a2: f64, eta: f64, n: usize) -> Vec<C64> {
    let mut pts = Vec::with_capacity(2 * n);
    for j in 0..n {
        let t = std::f64::consts::PI * j as f64 / (n - 1).max(1) as f64;
        // right cap from -pi/2 to pi/2, left cap from pi/2 to 3pi/2
        let right = t - std::f64::consts::FRAC_PI_2;
        let left = t + std::f64::consts::FRAC_PI_2;
        pts.push(c64(a2 + eta * right.cos(), eta * right.sin()));
        pts.push(c64(a1 + eta * left.cos(), eta * left.sin()));
        let x = a1 + (a2 - a1) * j as f64 / (n - 1).max(1) as f64;
        pts.push(c64(x, eta));
        pts.push(c64(x, -eta));
    }
    pts
}

pub fn zero_kernel(n: usize, lambda_c: f64, beta: f64) -> Result<KernelDerivative> {
    KernelDerivative::new(
        "zero",
        Arc::new(ZeroKernel { n }),
        HolomorphyDomain::HalfPlane { re_min: f64::NEG_INFINITY },
        lambda_c,
        beta,
    )
}

/// Sum of `c_k K'(mu_k)` without any precomputation; mainly for tests.
pub fn direct_sum(k: &KernelDerivative, nodes: &[C64], coeffs: &[C64]) -> Result<CMat> {
    let n = k.dim();
    let mut acc = CMat::zeros(n, n);
    for (&mu, &c) in nodes.iter().zip(coeffs) {
        if c != ZERO {
            acc += k.eval_dense(mu)? * c;
        }
    }
    Ok(acc)
}
