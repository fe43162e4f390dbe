use std::f64::consts::PI;

use serde::{Serialize, Serializer};

use crate::contour::AdmissibilityReport;
use crate::error::{Error, Result};
use crate::linalg::{c64, determinant, hausdorff, inverse_checked, matmul, op_norm, CMat, SchurForm, C64};
use crate::numrange::NumericalRangeHull;
use crate::quadrature::{circle_rule, gauss_legendre_on};
use crate::solver::{check_separation, Kappa, SolutionReport};
use crate::transfer::ContourModel;

/// Precomputed pieces of W_kappa(z) for one solution Z.
///
/// Right: `W(z) = I + Q [sum_k w_k mu_k/(z - mu_k) L_k S_k] Q^H` with
/// `S_k = R_k Q (T - mu_k)^{-1}`; left mirrors this with the resolvent on
/// the left of the kernel.
pub struct WFactor {
    pub kappa: Kappa,
    schur: SchurForm,
    /// Right: rows `R_k Q (T - mu_k)^{-1}`; left: columns `(T - mu_k)^{-1} Q^H L_k`.
    solved: CMat,
    n: usize,
}

impl WFactor {
    pub fn new(cm: &ContourModel, z: &CMat, kappa: Kappa) -> Result<Self> {
        let schur = SchurForm::new(z)?;
        check_separation(cm, &schur.eigenvalues())?;
        let stack = cm.stack();
        let nodes = &cm.rule.nodes;
        let q = schur.q();
        let solved = match kappa {
            Kappa::Right => {
                let mut y = matmul(&stack.right, q).transpose();
                for (j, mut col) in y.column_iter_mut().enumerate() {
                    schur.row_solve_in_place(col.as_mut_slice(), nodes[stack.owner[j]]);
                }
                y.transpose()
            }
            Kappa::Left => {
                let mut y = matmul(&q.adjoint(), &stack.left);
                for (j, mut col) in y.column_iter_mut().enumerate() {
                    schur.col_solve_in_place(col.as_mut_slice(), nodes[stack.owner[j]]);
                }
                y
            }
        };
        Ok(Self {
            kappa,
            schur,
            solved,
            n: z.nrows(),
        })
    }

    pub fn schur(&self) -> &SchurForm {
        &self.schur
    }

    /// `sum_k c_k K'(mu_k) (Z - mu_k)^{-1}` (right) or
    /// `sum_k c_k (Z - mu_k)^{-1} K'(mu_k)` (left).
    pub fn weighted(&self, cm: &ContourModel, coeffs: &[C64]) -> CMat {
        let stack = cm.stack();
        let q = self.schur.q();
        if stack.owner.is_empty() {
            return CMat::zeros(self.n, self.n);
        }
        match self.kappa {
            Kappa::Right => {
                let mut l = stack.left.clone();
                for (j, mut c) in l.column_iter_mut().enumerate() {
                    c *= coeffs[stack.owner[j]];
                }
                matmul(&matmul(&l, &self.solved), &q.adjoint())
            }
            Kappa::Left => {
                let mut y = self.solved.clone();
                for (j, mut c) in y.column_iter_mut().enumerate() {
                    c *= coeffs[stack.owner[j]];
                }
                matmul(q, &matmul(&y, &stack.right))
            }
        }
    }

    pub fn eval(&self, cm: &ContourModel, z: C64) -> Result<CMat> {
        cm.check_off_contour(z)?;
        let coeffs: Vec<C64> = cm
            .rule
            .nodes
            .iter()
            .zip(&cm.rule.weights)
            .map(|(mu, w)| w * mu / (z - mu))
            .collect();
        Ok(CMat::identity(self.n, self.n) + self.weighted(cm, &coeffs))
    }
}

/// W_kappa(z) = I - sum w K'(Z - mu)^{-1} + z sum w K'(z - mu)^{-1}(Z - mu)^{-1}
/// (right; left mirrored).
pub fn eval_w(cm: &ContourModel, z_mat: &CMat, z: C64, kappa: Kappa) -> Result<CMat> {
    WFactor::new(cm, z_mat, kappa)?.eval(cm, z)
}

/// Both factorization residuals, relative to `1 + |M_Gamma(z)|`.
pub fn factorization_defect(cm: &ContourModel, right: &WFactor, left: &WFactor, z: C64) -> Result<(f64, f64)> {
    let n = cm.dim();
    let m = cm.eval_m_gamma(z)?;
    let scale = 1.0 + op_norm(&m);
    let id = CMat::identity(n, n);
    let zr = reconstruct(right.schur());
    let zl = reconstruct(left.schur());
    let r = &m - right.eval(cm, z)? * (zr - &id * z);
    let l = &m - (zl - &id * z) * left.eval(cm, z)?;
    Ok((op_norm(&r) / scale, op_norm(&l) / scale))
}

fn reconstruct(s: &SchurForm) -> CMat {
    matmul(&matmul(s.q(), s.t()), &s.q().adjoint())
}

#[derive(Debug, Clone, Serialize)]
pub struct WCheck {
    pub z: C64,
    pub kappa: Kappa,
    pub certified: bool,
    pub w_minus_i: Option<f64>,
    pub w_inverse_norm: Option<f64>,
    pub pass: Option<bool>,
}

/// `|W(z) - I| < 1` at points certified to lie in the region where the
/// numerical range is closer than d (1 - Var) / 2. Uncertified points are
/// reported as inconclusive.
pub fn w_invertibility(
    cm: &ContourModel,
    w: &WFactor,
    hull: &NumericalRangeHull,
    adm: &AdmissibilityReport,
    z: C64,
) -> Result<WCheck> {
    let certified = hull.upper(z) <= adm.o_radius();
    if !certified {
        return Ok(WCheck {
            z,
            kappa: w.kappa,
            certified,
            w_minus_i: None,
            w_inverse_norm: None,
            pass: None,
        });
    }
    let wz = w.eval(cm, z)?;
    let n = cm.dim();
    let dev = op_norm(&(&wz - CMat::identity(n, n)));
    let inv = inverse_checked(&wz).ok().map(|m| op_norm(&m));
    Ok(WCheck {
        z,
        kappa: w.kappa,
        certified,
        w_minus_i: Some(dev),
        w_inverse_norm: inv,
        pass: Some(dev < 1.0 && inv.is_some()),
    })
}

/// Omega = sum_k w_k mu_k (Z_left - mu_k)^{-1} K'(mu_k) (Z_right - mu_k)^{-1}.
pub fn compute_omega(cm: &ContourModel, left: &WFactor, right: &WFactor) -> CMat {
    let stack = cm.stack();
    let n = cm.dim();
    if stack.owner.is_empty() {
        return CMat::zeros(n, n);
    }
    let mut cols = left.solved.clone();
    for (j, mut c) in cols.column_iter_mut().enumerate() {
        let k = stack.owner[j];
        c *= cm.rule.weights[k] * cm.rule.nodes[k];
    }
    let inner = matmul(&cols, &right.solved);
    matmul(&matmul(left.schur().q(), &inner), &right.schur().q().adjoint())
}

/// Closed integration loop with nodes and weights for `-(1/(2 pi i)) \oint`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaLoop {
    Circle { center: C64, radius: f64, order: usize },
    Ellipse { center: C64, a: f64, b: f64, order: usize },
    Polygon { vertices: Vec<C64>, order: usize },
}

impl Serialize for GammaLoop {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            kind: &'static str,
            center: Option<C64>,
            radius: Option<f64>,
            semi_axes: Option<(f64, f64)>,
            vertices: Option<&'a [C64]>,
            order: usize,
        }
        let r = match self {
            GammaLoop::Circle { center, radius, order } => Repr {
                kind: "circle",
                center: Some(*center),
                radius: Some(*radius),
                semi_axes: None,
                vertices: None,
                order: *order,
            },
            GammaLoop::Ellipse { center, a, b, order } => Repr {
                kind: "ellipse",
                center: Some(*center),
                radius: None,
                semi_axes: Some((*a, *b)),
                vertices: None,
                order: *order,
            },
            GammaLoop::Polygon { vertices, order } => Repr {
                kind: "polygon",
                center: None,
                radius: None,
                semi_axes: None,
                vertices: Some(vertices),
                order: *order,
            },
        };
        r.serialize(s)
    }
}

impl GammaLoop {
    pub fn order(&self) -> usize {
        match self {
            GammaLoop::Circle { order, .. } | GammaLoop::Ellipse { order, .. } | GammaLoop::Polygon { order, .. } => *order,
        }
    }

    pub fn rule(&self) -> (Vec<C64>, Vec<C64>) {
        match self {
            GammaLoop::Circle { center, radius, order } => circle_rule(*center, *radius, *order),
            GammaLoop::Ellipse { center, a, b, order } => {
                let n = *order;
                let mut nodes = Vec::with_capacity(n);
                let mut weights = Vec::with_capacity(n);
                for j in 0..n {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                    nodes.push(center + c64(a * phi.cos(), b * phi.sin()));
                    let dz = c64(-a * phi.sin(), b * phi.cos()) * (2.0 * PI / n as f64);
                    weights.push(-dz / c64(0.0, 2.0 * PI));
                }
                (nodes, weights)
            }
            GammaLoop::Polygon { vertices, order } => {
                let (t, w) = gauss_legendre_on(*order, 0.0, 1.0);
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                let m = vertices.len();
                for i in 0..m {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    for (t, w) in t.iter().zip(&w) {
                        nodes.push(a + (b - a) * *t);
                        weights.push(-(b - a) * *w / c64(0.0, 2.0 * PI));
                    }
                }
                (nodes, weights)
            }
        }
    }

    /// Closed polygon through the loop, for winding-number tests.
    pub fn outline(&self) -> Vec<C64> {
        match self {
            GammaLoop::Polygon { vertices, .. } => vertices.clone(),
            _ => {
                let (nodes, _) = match self {
                    GammaLoop::Circle { center, radius, .. } => circle_rule(*center, *radius, 2048),
                    GammaLoop::Ellipse { center, a, b, .. } => GammaLoop::Ellipse {
                        center: *center,
                        a: *a,
                        b: *b,
                        order: 2048,
                    }
                    .rule(),
                    GammaLoop::Polygon { .. } => unreachable!(),
                };
                nodes
            }
        }
    }

    pub fn winding_number(&self, z: C64) -> i32 {
        winding(&self.outline(), z)
    }
}

fn winding(poly: &[C64], z: C64) -> i32 {
    let n = poly.len();
    let mut w = 0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let orient = (b.re - a.re) * (z.im - a.im) - (b.im - a.im) * (z.re - a.re);
        if a.im <= z.im {
            if b.im > z.im && orient > 0.0 {
                w += 1;
            }
        } else if b.im <= z.im && orient < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Checks that the loop stays in O(A~, Gamma), winds once around every
/// point of `enclosed` and around no contour point.
pub fn validate_loop(
    cm: &ContourModel,
    lp: &GammaLoop,
    hull: &NumericalRangeHull,
    adm: &AdmissibilityReport,
    enclosed: &[C64],
) -> Result<()> {
    let rho = adm.o_radius();
    let (nodes, _) = lp.rule();
    for z in &nodes {
        let up = hull.upper(*z);
        if up > rho {
            return Err(Error::LoopInvalid(format!(
                "loop node {z} is at distance up to {up:.3e} from the numerical range, limit {rho:.3e}"
            )));
        }
    }
    let outline = lp.outline();
    for lam in enclosed {
        if winding(&outline, *lam) != 1 {
            return Err(Error::LoopInvalid(format!("loop does not enclose {lam}")));
        }
    }
    for mu in cm.rule.nodes.iter().chain(cm.rule.arc_polyline()) {
        if winding(&outline, *mu) != 0 {
            return Err(Error::LoopInvalid(format!("loop encloses contour point {mu}")));
        }
    }
    Ok(())
}

/// Circle around the mean of the spectrum with 1.25 times its spread;
/// if that leaves O(A~, Gamma), ellipses hugging the numerical range.
pub fn auto_loop(
    cm: &ContourModel,
    hull: &NumericalRangeHull,
    adm: &AdmissibilityReport,
    spectrum: &[C64],
    order: usize,
) -> Result<GammaLoop> {
    let rho = adm.o_radius();
    let mean = spectrum.iter().sum::<C64>() / spectrum.len().max(1) as f64;
    let spread = spectrum.iter().map(|z| (z - mean).norm()).fold(0.0, f64::max);
    let radius = if spread > 0.0 { 1.25 * spread } else { 0.5 * rho };
    let circle = GammaLoop::Circle {
        center: mean,
        radius,
        order,
    };
    let mut reasons = Vec::new();
    match validate_loop(cm, &circle, hull, adm, spectrum) {
        Ok(()) => return Ok(circle),
        Err(e) => reasons.push(format!("circle: {e}")),
    }
    let pts = hull.outer_polygon();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts.iter().chain(spectrum) {
        x0 = x0.min(p.re);
        x1 = x1.max(p.re);
        y0 = y0.min(p.im);
        y1 = y1.max(p.im);
    }
    let center = c64(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    for frac in [0.7, 0.5, 0.3] {
        let m = frac * rho;
        let lp = GammaLoop::Ellipse {
            center,
            a: 0.5 * (x1 - x0) + m,
            b: 0.5 * (y1 - y0) + m,
            order,
        };
        match validate_loop(cm, &lp, hull, adm, spectrum) {
            Ok(()) => return Ok(lp),
            Err(e) => reasons.push(format!("ellipse margin {frac}: {e}")),
        }
    }
    Err(Error::LoopInvalid(reasons.join("; ")))
}

/// `-(1/(2 pi i)) \oint M_Gamma(z)^{-1} dz` and the same with weight z.
pub fn loop_integrals(cm: &ContourModel, lp: &GammaLoop) -> Result<(CMat, CMat)> {
    let n = cm.dim();
    let (nodes, weights) = lp.rule();
    let mut i0 = CMat::zeros(n, n);
    let mut i1 = CMat::zeros(n, n);
    for (z, w) in nodes.iter().zip(&weights) {
        let inv = cm.invert_m_gamma(*z).map_err(|e| {
            Error::LoopInvalid(format!("M_Gamma is not invertible on the loop at {z}: {e}"))
        })?;
        i0 += &inv * *w;
        i1 += inv * (w * z);
    }
    Ok((i0, i1))
}

/// `-(1/(2 pi i)) \oint (Z - z)^{-1} dz` on a circle, summed in the Schur basis.
pub fn riesz_projection(z_mat: &CMat, center: C64, radius: f64, order: usize) -> Result<CMat> {
    let schur = SchurForm::new(z_mat)?;
    let n = z_mat.nrows();
    let (nodes, weights) = circle_rule(center, radius, order);
    let mut s = CMat::zeros(n, n);
    for (z, w) in nodes.iter().zip(&weights) {
        s += schur.shifted_triangular_inverse(*z) * *w;
    }
    Ok(matmul(&matmul(schur.q(), &s), &schur.q().adjoint()))
}

pub fn numerical_rank(m: &CMat, threshold: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|s| **s > threshold).count()
}

pub fn similarity_defect(omega: &CMat, z_left: &CMat, z_right: &CMat) -> f64 {
    let n = omega.nrows();
    let ipo = CMat::identity(n, n) + omega;
    op_norm(&(z_left * &ipo - &ipo * z_right)) / (1.0 + op_norm(z_right))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub lambda: C64,
    pub radius: f64,
    pub gap: f64,
    pub defect_right: f64,
    pub defect_left: f64,
    pub idempotency_right: f64,
    pub idempotency_left: f64,
    pub idempotency_m: f64,
    pub rank_right: usize,
    pub rank_m: usize,
    #[serde(skip)]
    pub p_right: CMat,
    #[serde(skip)]
    pub p_left: CMat,
    #[serde(skip)]
    pub p_m: CMat,
}

/// Eigenprojections of Z_right, Z_left and of M_Gamma for the eigenvalue
/// `lambda`, on a circle of radius `gap / 3`.
#[allow(clippy::too_many_arguments)]
pub fn projections(
    cm: &ContourModel,
    right: &SolutionReport,
    left: &SolutionReport,
    omega: &CMat,
    hull: &NumericalRangeHull,
    adm: &AdmissibilityReport,
    lambda: C64,
    order: usize,
) -> Result<ProjectionReport> {
    let n = cm.dim();
    let others = right
        .sigma_z
        .iter()
        .chain(&left.sigma_z)
        .filter(|z| (*z - lambda).norm() > 1e-9 * (1.0 + lambda.norm()));
    let gap = others.map(|z| (z - lambda).norm()).fold(f64::INFINITY, f64::min);
    let (dc, _) = cm.rule.distance(lambda);
    let room = 0.9 * (adm.o_radius() - hull.upper(lambda)).max(0.0);
    let radius = (gap / 3.0).min(dc / 3.0).min(room);
    if !(gap > 2.0 * radius) || !(radius > 1e-10 * (1.0 + lambda.norm())) {
        return Err(Error::ClusterNotSeparable { lambda, gap, radius });
    }
    let lp = GammaLoop::Circle {
        center: lambda,
        radius,
        order,
    };
    validate_loop(cm, &lp, hull, adm, &[lambda])?;
    let p_right = riesz_projection(&right.z, lambda, radius, order)?;
    let p_left = riesz_projection(&left.z, lambda, radius, order)?;
    let (p_m, _) = loop_integrals(cm, &lp)?;
    let ipo_inv = inverse_checked(&(CMat::identity(n, n) + omega))?;
    let defect_right = op_norm(&(&p_m - &p_right * &ipo_inv));
    let defect_left = op_norm(&(&p_m - &ipo_inv * &p_left));
    let idem = |p: &CMat| op_norm(&(p * p - p));
    Ok(ProjectionReport {
        lambda,
        radius,
        gap,
        defect_right,
        defect_left,
        idempotency_right: idem(&p_right),
        idempotency_left: idem(&p_left),
        idempotency_m: idem(&(&p_m * (CMat::identity(n, n) + omega))),
        rank_right: numerical_rank(&p_right, 1e-6),
        rank_m: numerical_rank(&p_m, 1e-6),
        p_right,
        p_left,
        p_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionTag {
    UnphysicalSheet,
    OutsideRegion,
}

impl RegionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionTag::UnphysicalSheet => "unphysical-sheet",
            RegionTag::OutsideRegion => "outside-region",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Resonance {
    pub z: C64,
    pub sheet: i32,
    pub tag: RegionTag,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSet {
    pub entries: Vec<Resonance>,
    pub hausdorff: f64,
    pub max_hull_distance: f64,
    pub r0: f64,
    pub hausdorff_pass: bool,
    pub inclusion_pass: bool,
}

/// Eigenvalues of Z_right tagged by membership in D(Gamma_l), together with
/// the spectral coincidence and inclusion checks.
pub fn resonance_set(
    cm: &ContourModel,
    right: &SolutionReport,
    left: &SolutionReport,
    hull: &NumericalRangeHull,
    r0: f64,
) -> ResonanceSet {
    let mut entries: Vec<Resonance> = right
        .sigma_z
        .iter()
        .map(|&z| Resonance {
            z,
            sheet: cm.rule.sheet(),
            tag: if cm.region.contains(z) {
                RegionTag::UnphysicalSheet
            } else {
                RegionTag::OutsideRegion
            },
        })
        .collect();
    entries.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    let h = hausdorff(&right.sigma_z, &left.sigma_z);
    let max_hull_distance = right.sigma_z.iter().map(|z| hull.upper(*z)).fold(0.0, f64::max);
    ResonanceSet {
        entries,
        hausdorff: h,
        max_hull_distance,
        r0,
        hausdorff_pass: h <= 1e-6,
        inclusion_pass: max_hull_distance <= r0 + 1e-6,
    }
}

/// `|det M_Gamma(z) - det W(z) det(Z - z)|` relative to `|det M_Gamma(z)|`.
pub fn determinant_defect(cm: &ContourModel, w: &WFactor, z_mat: &CMat, z: C64) -> Result<f64> {
    let n = cm.dim();
    let dm = determinant(&cm.eval_m_gamma(z)?);
    let dw = determinant(&w.eval(cm, z)?);
    let dz = determinant(&(z_mat - CMat::identity(n, n) * z));
    Ok((dm - dw * dz).norm() / dm.norm().max(f64::MIN_POSITIVE))
}
