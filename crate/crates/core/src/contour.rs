use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, C64};
use crate::model::{HolomorphyDomain, TransferModel};
use crate::numrange::NumericalRangeHull;
use crate::quadrature::gauss_legendre_on;

pub const DEFAULT_ARC_ORDER: usize = 32;
pub const DEFAULT_TAIL_ORDER: usize = 64;
const SAMPLES_PER_SEGMENT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub sheet: i32,
    pub lambda_c: f64,
    pub beta: f64,
    pub arc_control: Vec<C64>,
    #[serde(default = "default_arc_order")]
    pub arc_order: usize,
    #[serde(default = "default_tail_order")]
    pub tail_order: usize,
}

fn default_arc_order() -> usize {
    DEFAULT_ARC_ORDER
}

fn default_tail_order() -> usize {
    DEFAULT_TAIL_ORDER
}

impl ContourSpec {
    /// Control points on the half ellipse over [lambda_c, beta] reaching
    /// `Im = sheet * depth`.
    pub fn semi_ellipse(sheet: i32, lambda_c: f64, beta: f64, depth: f64, segments: usize) -> Self {
        let c = 0.5 * (lambda_c + beta);
        let a = 0.5 * (beta - lambda_c);
        let mut pts = Vec::with_capacity(segments + 1);
        for j in 0..=segments {
            let th = PI * j as f64 / segments as f64;
            pts.push(c64(c - a * th.cos(), sheet as f64 * depth * th.sin()));
        }
        pts[0] = c64(lambda_c, 0.0);
        pts[segments] = c64(beta, 0.0);
        Self {
            sheet,
            lambda_c,
            beta,
            arc_control: pts,
            arc_order: DEFAULT_ARC_ORDER,
            tail_order: DEFAULT_TAIL_ORDER,
        }
    }

    /// Reflection across the real axis.
    pub fn mirrored(&self) -> Self {
        let mut s = self.clone();
        s.sheet = -self.sheet;
        s.arc_control = self.arc_control.iter().map(|z| z.conj()).collect();
        s
    }
}

/// Natural cubic spline through the control points, uniform knots.
#[derive(Debug, Clone)]
pub struct SplineArc {
    points: Vec<C64>,
    second: Vec<C64>,
}

impl SplineArc {
    pub fn new(points: &[C64]) -> Self {
        let m = points.len() - 1;
        let mut second = vec![c64(0.0, 0.0); m + 1];
        if m >= 2 {
            // M_{j-1} + 4 M_j + M_{j+1} = 6 (P_{j+1} - 2 P_j + P_{j-1}), Thomas algorithm
            let k = m - 1;
            let mut diag = vec![4.0; k];
            let mut rhs: Vec<C64> = (1..m)
                .map(|j| (points[j + 1] - points[j] * 2.0 + points[j - 1]) * 6.0)
                .collect();
            for i in 1..k {
                let f = 1.0 / diag[i - 1];
                diag[i] -= f;
                let prev = rhs[i - 1];
                rhs[i] -= prev * f;
            }
            let mut sol = vec![c64(0.0, 0.0); k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - sol[i + 1]) / diag[i];
            }
            second[1..m].copy_from_slice(&sol);
        }
        Self {
            points: points.to_vec(),
            second,
        }
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn point(&self, j: usize, u: f64) -> C64 {
        let (p0, p1) = (self.points[j], self.points[j + 1]);
        let (m0, m1) = (self.second[j], self.second[j + 1]);
        let v = 1.0 - u;
        p0 * v + p1 * u + (m0 * (v * v * v - v) + m1 * (u * u * u - u)) / 6.0
    }

    pub fn derivative(&self, j: usize, u: f64) -> C64 {
        let (p0, p1) = (self.points[j], self.points[j + 1]);
        let (m0, m1) = (self.second[j], self.second[j + 1]);
        let v = 1.0 - u;
        p1 - p0 + (m0 * (1.0 - 3.0 * v * v) + m1 * (3.0 * u * u - 1.0)) / 6.0
    }

    /// Samples including both endpoints, `per` points per segment.
    pub fn polyline(&self, per: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.segments() * per + 1);
        for j in 0..self.segments() {
            for i in 0..per {
                out.push(self.point(j, i as f64 / per as f64));
            }
        }
        out.push(*self.points.last().unwrap());
        out
    }
}

/// Gauss-Legendre rule for [beta, inf) through mu = beta + t / (1 - t).
#[derive(Debug, Clone)]
pub struct TailRule {
    pub beta: f64,
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TailRule {
    pub fn new(beta: f64, order: usize) -> Self {
        let (t, w) = gauss_legendre_on(order, 0.0, 1.0);
        let nodes = t.iter().map(|t| beta + t / (1.0 - t)).collect();
        let weights = t.iter().zip(&w).map(|(t, w)| w / ((1.0 - t) * (1.0 - t))).collect();
        Self {
            beta,
            order,
            nodes,
            weights,
        }
    }
}

/// Quadrature rule on Gamma_l = arc + [beta, inf).
#[derive(Debug, Clone)]
pub struct ContourRule {
    pub spec: ContourSpec,
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub n_arc: usize,
    pub tail: TailRule,
    pub refinements: usize,
    arc: SplineArc,
    polyline: Vec<C64>,
}

impl ContourRule {
    /// Rule at the orders stated in the spec, after geometric validation.
    pub fn with_orders(spec: &ContourSpec, domain: &HolomorphyDomain) -> Result<Self> {
        validate_spec(spec, domain)?;
        let arc = SplineArc::new(&spec.arc_control);
        let (mut nodes, mut weights) = arc_rule(&arc, spec.arc_order);
        let n_arc = nodes.len();
        let tail = TailRule::new(spec.beta, spec.tail_order);
        nodes.extend(tail.nodes.iter().map(|&x| c64(x, 0.0)));
        weights.extend(tail.weights.iter().map(|&w| c64(w, 0.0)));
        let polyline = arc.polyline(SAMPLES_PER_SEGMENT);
        Ok(Self {
            spec: spec.clone(),
            nodes,
            weights,
            n_arc,
            tail,
            refinements: 0,
            arc,
            polyline,
        })
    }

    pub fn sheet(&self) -> i32 {
        self.spec.sheet
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn arc(&self) -> &SplineArc {
        &self.arc
    }

    pub fn arc_polyline(&self) -> &[C64] {
        &self.polyline
    }

    /// Distance from z to Gamma_l and the nearest point found.
    pub fn distance(&self, z: C64) -> (f64, C64) {
        let beta = self.spec.beta;
        let tail_pt = if z.re >= beta { c64(z.re, 0.0) } else { c64(beta, 0.0) };
        let mut best = ((z - tail_pt).norm(), tail_pt);
        let per = SAMPLES_PER_SEGMENT;
        let mut idx = 0;
        let mut dmin = f64::INFINITY;
        for (i, p) in self.polyline.iter().enumerate() {
            let d = (z - p).norm();
            if d < dmin {
                dmin = d;
                idx = i;
            }
        }
        // refine on the spline parameter around the closest sample
        let m = self.arc.segments();
        let g = idx as f64 / per as f64;
        let lo = (g - 1.0 / per as f64).max(0.0);
        let hi = (g + 1.0 / per as f64).min(m as f64);
        let at = |s: f64| {
            let j = (s.floor() as usize).min(m - 1);
            self.arc.point(j, s - j as f64)
        };
        let (mut a, mut b) = (lo, hi);
        for _ in 0..80 {
            let s1 = a + (b - a) / 3.0;
            let s2 = b - (b - a) / 3.0;
            if (at(s1) - z).norm() < (at(s2) - z).norm() {
                b = s2;
            } else {
                a = s1;
            }
        }
        let p = at(0.5 * (a + b));
        let d = (p - z).norm().min(dmin);
        if d < best.0 {
            best = (d, if (p - z).norm() <= dmin { p } else { self.polyline[idx] });
        }
        best
    }

    pub fn region(&self) -> ContinuationRegion {
        ContinuationRegion::new(self)
    }

    /// Dense samples of the arc (spacing below `h`) followed by the maximal
    /// chord between consecutive samples.
    pub fn dense_arc_samples(&self, h: f64) -> (Vec<C64>, f64) {
        let mut pts = Vec::new();
        for j in 0..self.arc.segments() {
            let (x, w) = gauss_legendre_on(16, 0.0, 1.0);
            let len: f64 = x.iter().zip(&w).map(|(u, w)| w * self.arc.derivative(j, *u).norm()).sum();
            let k = ((len / h).ceil() as usize).max(2);
            for i in 0..k {
                pts.push(self.arc.point(j, i as f64 / k as f64));
            }
        }
        pts.push(c64(self.spec.beta, 0.0));
        let chord = pts.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        (pts, chord)
    }
}

fn validate_spec(spec: &ContourSpec, domain: &HolomorphyDomain) -> Result<()> {
    if spec.sheet != 1 && spec.sheet != -1 {
        return Err(Error::ContourRejected(format!("sheet must be +1 or -1, got {}", spec.sheet)));
    }
    if spec.arc_control.len() < 3 {
        return Err(Error::ContourRejected("arc needs at least one interior control point".into()));
    }
    if spec.arc_order < 2 || spec.tail_order < 2 {
        return Err(Error::ContourRejected("quadrature orders must be at least 2".into()));
    }
    let first = spec.arc_control[0];
    let last = *spec.arc_control.last().unwrap();
    if first != c64(spec.lambda_c, 0.0) || last != c64(spec.beta, 0.0) {
        return Err(Error::ContourRejected(format!(
            "arc must run from lambda_C = {} to beta = {}, got {first} .. {last}",
            spec.lambda_c, spec.beta
        )));
    }
    if spec.arc_control.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("arc control points"));
    }
    let arc = SplineArc::new(&spec.arc_control);
    let poly = arc.polyline(SAMPLES_PER_SEGMENT);
    let l = spec.sheet as f64;
    for p in &poly[1..poly.len() - 1] {
        if !(p.im * l > 0.0) {
            return Err(Error::ContourRejected(format!(
                "arc point {p} is not strictly on the sheet-{} side of the real axis",
                spec.sheet
            )));
        }
        if !domain.contains(*p) {
            return Err(Error::ContourRejected(format!("arc point {p} leaves the holomorphy domain")));
        }
    }
    if let Some((i, j)) = self_intersection(&poly) {
        return Err(Error::ContourRejected(format!(
            "arc intersects itself near {} and {}",
            poly[i], poly[j]
        )));
    }
    Ok(())
}

fn orient(a: C64, b: C64, c: C64) -> f64 {
    (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re)
}

fn segments_cross(a: C64, b: C64, c: C64, d: C64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn self_intersection(poly: &[C64]) -> Option<(usize, usize)> {
    let n = poly.len();
    for i in 0..n - 1 {
        let (lo_x, hi_x) = (poly[i].re.min(poly[i + 1].re), poly[i].re.max(poly[i + 1].re));
        for j in (i + 2)..n - 1 {
            if poly[j].re.max(poly[j + 1].re) < lo_x || poly[j].re.min(poly[j + 1].re) > hi_x {
                continue;
            }
            if segments_cross(poly[i], poly[i + 1], poly[j], poly[j + 1]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Composite Gauss-Legendre on the arc. The first segment uses u = s^2 so
/// that square-root behaviour at lambda_C becomes smooth.
fn arc_rule(arc: &SplineArc, order: usize) -> (Vec<C64>, Vec<C64>) {
    let (x, w) = gauss_legendre_on(order, 0.0, 1.0);
    let mut nodes = Vec::with_capacity(order * arc.segments());
    let mut weights = Vec::with_capacity(order * arc.segments());
    for j in 0..arc.segments() {
        for (s, ws) in x.iter().zip(&w) {
            if j == 0 {
                let u = s * s;
                nodes.push(arc.point(0, u));
                weights.push(arc.derivative(0, u) * (2.0 * s * ws));
            } else {
                nodes.push(arc.point(j, *s));
                weights.push(arc.derivative(j, *s) * *ws);
            }
        }
    }
    (nodes, weights)
}

/// The domain D(Gamma_l) enclosed by [lambda_C, beta] and the arc.
#[derive(Debug, Clone)]
pub struct ContinuationRegion {
    pub sheet: i32,
    boundary: Vec<C64>,
}

impl ContinuationRegion {
    pub fn new(rule: &ContourRule) -> Self {
        let poly = rule.arc_polyline();
        let mut boundary: Vec<C64> = poly.iter().rev().copied().collect();
        // close through the real interval
        let k = poly.len();
        for i in 1..k - 1 {
            let t = i as f64 / (k - 1) as f64;
            boundary.push(c64(rule.spec.lambda_c + t * (rule.spec.beta - rule.spec.lambda_c), 0.0));
        }
        Self {
            sheet: rule.sheet(),
            boundary,
        }
    }

    pub fn boundary(&self) -> &[C64] {
        &self.boundary
    }

    pub fn winding_number(&self, z: C64) -> i32 {
        let n = self.boundary.len();
        let mut w = 0;
        for i in 0..n {
            let a = self.boundary[i];
            let b = self.boundary[(i + 1) % n];
            if a.im <= z.im {
                if b.im > z.im && orient(a, b, z) > 0.0 {
                    w += 1;
                }
            } else if b.im <= z.im && orient(a, b, z) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    pub fn contains(&self, z: C64) -> bool {
        self.winding_number(z) != 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub sheet: i32,
    pub d_lower: f64,
    pub d_upper: f64,
    pub var_upper: f64,
    pub norm_a: f64,
    pub best1_pass: bool,
    pub best2_pass: bool,
    pub best2_lhs: f64,
    pub best2_rhs: f64,
    pub omega_gap: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub admissible: bool,
    pub nodes: usize,
    pub tail_order: usize,
}

impl AdmissibilityReport {
    /// Radius d (1 - Var) / 2 of the region O(A~, Gamma).
    pub fn o_radius(&self) -> f64 {
        0.5 * self.d_lower * (1.0 - self.var_upper)
    }

    pub fn require(&self) -> Result<()> {
        if self.admissible {
            Ok(())
        } else {
            Err(Error::NotAdmissible {
                var: self.var_upper,
                lhs: self.best2_lhs,
                rhs: self.best2_rhs,
            })
        }
    }
}

/// `sum_k |w_k| |K'(mu_k)| / dist_lower(mu_k)`.
pub fn var_sum(model: &TransferModel, rule: &ContourRule, hull: &NumericalRangeHull) -> Result<f64> {
    let mut var = 0.0;
    for (mu, w) in rule.nodes.iter().zip(&rule.weights) {
        let lo = hull.lower(*mu);
        if lo <= 0.0 {
            return Err(Error::TouchesNumericalRange { mu: *mu });
        }
        var += w.norm() * model.kernel.eval(*mu)?.norm() / lo;
    }
    Ok(var)
}

/// Rule with the tail order doubled until the Var sum settles.
pub fn build_rule(spec: &ContourSpec, model: &TransferModel, hull: &NumericalRangeHull) -> Result<ContourRule> {
    let mut rule = ContourRule::with_orders(spec, &model.kernel.domain)?;
    let mut var = var_sum(model, &rule, hull)?;
    for k in 1..=4 {
        let mut s = rule.spec.clone();
        s.tail_order *= 2;
        let next = ContourRule::with_orders(&s, &model.kernel.domain)?;
        let v = var_sum(model, &next, hull)?;
        let change = (v - var).abs();
        rule = next;
        rule.refinements = k;
        var = v;
        if change <= 1e-10 * var.abs().max(f64::MIN_POSITIVE) || var == 0.0 {
            break;
        }
    }
    Ok(rule)
}

pub fn admissibility(model: &TransferModel, rule: &ContourRule, hull: &NumericalRangeHull) -> Result<AdmissibilityReport> {
    let var = var_sum(model, rule, hull)?;

    let h = 1e-3;
    let (arc_pts, chord) = rule.dense_arc_samples(h);
    let mut d_min = f64::INFINITY;
    let mut d_up = f64::INFINITY;
    for p in &arc_pts {
        let (lo, up) = hull.distance(*p);
        d_min = d_min.min(lo);
        d_up = d_up.min(up);
    }
    // tail: the distance to a convex set is convex along the half-line, so
    // sampling stops once the lower bound increases
    let beta = rule.spec.beta;
    let mut prev = f64::INFINITY;
    let mut x = beta;
    loop {
        let (lo, up) = hull.distance(c64(x, 0.0));
        d_min = d_min.min(lo);
        d_up = d_up.min(up);
        if lo > prev {
            break;
        }
        prev = lo;
        x += h;
    }
    let d_lower = (d_min - 0.5 * chord.max(h)).max(0.0);
    if d_lower <= 0.0 {
        return Err(Error::TouchesNumericalRange {
            mu: arc_pts
                .iter()
                .copied()
                .min_by(|a, b| hull.lower(*a).total_cmp(&hull.lower(*b)))
                .unwrap_or(c64(beta, 0.0)),
        });
    }

    let norm_a = model.norm_a();
    Ok(admissibility_arithmetic(rule.sheet(), d_lower, d_up, var, norm_a, rule.len(), rule.tail.order))
}

/// Hypothesis checks and ball radii from the bounds on d, Var and |A~|.
pub fn admissibility_arithmetic(
    sheet: i32,
    d: f64,
    d_upper: f64,
    var: f64,
    norm_a: f64,
    nodes: usize,
    tail_order: usize,
) -> AdmissibilityReport {
    let best1 = var < 1.0;
    let lhs = var * norm_a;
    let rhs = 0.25 * d * (1.0 - var) * (1.0 - var);
    let best2 = lhs < rhs;
    let admissible = best1 && best2;
    let half = 0.5 * d * (1.0 - var);
    let disc = half * half - d * var * norm_a;
    let r_min = if disc >= 0.0 { half - disc.sqrt() } else { f64::NAN };
    let rad = var * d * (d + norm_a);
    let r_max = d - rad.sqrt();
    AdmissibilityReport {
        sheet,
        d_lower: d,
        d_upper,
        var_upper: var,
        norm_a,
        best1_pass: best1,
        best2_pass: best2,
        best2_lhs: lhs,
        best2_rhs: rhs,
        omega_gap: d * (1.0 - var) * (1.0 - var) - 4.0 * norm_a * var,
        r_min,
        r_max,
        admissible,
        nodes,
        tail_order,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct R0Estimate {
    pub r0: f64,
    pub index: usize,
    pub members: Vec<MemberOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberOutcome {
    pub admissible: bool,
    pub r_min: Option<f64>,
    pub reason: Option<String>,
}

pub fn r0_estimate(model: &TransferModel, family: &[ContourSpec], hull: &NumericalRangeHull) -> Result<R0Estimate> {
    let mut members = Vec::with_capacity(family.len());
    let mut best: Option<(f64, usize)> = None;
    for (i, spec) in family.iter().enumerate() {
        let outcome = build_rule(spec, model, hull).and_then(|r| admissibility(model, &r, hull));
        match outcome {
            Ok(rep) if rep.admissible => {
                if best.is_none_or(|(v, _)| rep.r_min < v) {
                    best = Some((rep.r_min, i));
                }
                members.push(MemberOutcome {
                    admissible: true,
                    r_min: Some(rep.r_min),
                    reason: None,
                });
            }
            Ok(rep) => members.push(MemberOutcome {
                admissible: false,
                r_min: None,
                reason: Some(format!(
                    "Var = {:.6e}, Var*|A| = {:.6e}, d(1-Var)^2/4 = {:.6e}",
                    rep.var_upper, rep.best2_lhs, rep.best2_rhs
                )),
            }),
            Err(e) => members.push(MemberOutcome {
                admissible: false,
                r_min: None,
                reason: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((r0, index)) => Ok(R0Estimate { r0, index, members }),
        None => Err(Error::NoAdmissibleContour {
            reasons: members
                .iter()
                .enumerate()
                .map(|(i, m)| format!("member {i}: {}", m.reason.clone().unwrap_or_default()))
                .collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMat;
    use crate::model::{zero_kernel, KernelDerivative, ScalarExp};
    use std::sync::Arc;

    fn half_plane() -> HolomorphyDomain {
        HolomorphyDomain::HalfPlane { re_min: -1.0 }
    }

    fn scalar_model(scale: f64) -> TransferModel {
        let k = KernelDerivative::new(
            "scalar-exp",
            Arc::new(ScalarExp {
                scale,
                rate: 1.0,
                shift: 0.5,
            }),
            half_plane(),
            0.5,
            6.0,
        )
        .unwrap();
        TransferModel::new(CMat::from_element(1, 1, c64(2.0, 0.0)), k, 1.5, 2.5, 0.25).unwrap()
    }

    #[test]
    fn straight_interval_is_rejected() {
        let mut s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.0, 8);
        s.arc_control.iter_mut().for_each(|z| z.im = 0.0);
        assert!(matches!(
            ContourRule::with_orders(&s, &half_plane()),
            Err(Error::ContourRejected(_))
        ));
    }

    #[test]
    fn wrong_side_is_rejected() {
        let s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.5, 8);
        let mut bad = s.clone();
        bad.sheet = 1;
        assert!(ContourRule::with_orders(&bad, &half_plane()).is_err());
        assert!(ContourRule::with_orders(&s, &half_plane()).is_ok());
    }

    #[test]
    fn self_intersecting_arc_is_rejected() {
        let pts = vec![
            c64(0.5, 0.0),
            c64(3.0, -1.0),
            c64(2.0, -2.0),
            c64(1.5, -0.5),
            c64(4.0, -0.3),
            c64(6.0, 0.0),
        ];
        let s = ContourSpec {
            sheet: -1,
            lambda_c: 0.5,
            beta: 6.0,
            arc_control: pts,
            arc_order: 16,
            tail_order: 16,
        };
        let e = ContourRule::with_orders(&s, &half_plane()).unwrap_err();
        assert!(e.to_string().contains("intersects"), "{e}");
    }

    #[test]
    fn arc_integrates_constants_and_reciprocals() {
        let s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.5, 16);
        let r = ContourRule::with_orders(&s, &half_plane()).unwrap();
        let total: C64 = r.weights[..r.n_arc].iter().sum();
        assert!((total - c64(5.5, 0.0)).norm() < 1e-12);
        // closed loop: arc followed by the interval traversed backwards
        let (_, w) = gauss_legendre_on(64, 0.5, 6.0);
        let back: f64 = -w.iter().sum::<f64>();
        assert!((total + back).norm() < 1e-12);
        let z0 = c64(3.0, 4.0);
        let q: C64 = r.nodes[..r.n_arc]
            .iter()
            .zip(&r.weights)
            .map(|(mu, w)| w / (mu - z0))
            .sum();
        let exact = (c64(6.0, 0.0) - z0).ln() - (c64(0.5, 0.0) - z0).ln();
        assert!((q - exact).norm() < 1e-10);
    }

    #[test]
    fn arc_exact_on_polynomials() {
        let s = ContourSpec::semi_ellipse(1, 0.5, 6.0, 0.7, 16);
        let r = ContourRule::with_orders(&s, &half_plane()).unwrap();
        for k in 0..=9 {
            let q: C64 = r.nodes[..r.n_arc]
                .iter()
                .zip(&r.weights)
                .map(|(mu, w)| w * mu.powi(k))
                .sum();
            let kp = (k + 1) as f64;
            let exact = (6.0f64.powf(kp) - 0.5f64.powf(kp)) / kp;
            assert!((q - c64(exact, 0.0)).norm() < 1e-12 * exact.max(1.0), "k = {k}");
        }
        // per segment, in the segment parameter, degree 2n - 1 is exact
        let (x, w) = gauss_legendre_on(s.arc_order, 0.0, 1.0);
        let deg = 2 * s.arc_order - 1;
        let q: f64 = x.iter().zip(&w).map(|(u, w)| w * u.powi(deg as i32)).sum();
        assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn tail_rule_reciprocal_square() {
        let t = TailRule::new(6.0, 64);
        let q: f64 = t.nodes.iter().zip(&t.weights).map(|(x, w)| w / ((1.0 + x) * (1.0 + x))).sum();
        assert!((q - 1.0 / 7.0).abs() < 1e-10);
    }

    #[test]
    fn region_membership() {
        let s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.6, 16);
        let r = ContourRule::with_orders(&s, &half_plane()).unwrap();
        let reg = r.region();
        assert!(reg.contains(c64(2.0, -0.01)));
        assert!(!reg.contains(c64(2.0, 0.01)));
        assert!(!reg.contains(c64(2.0, -0.7)));
        assert!(!reg.contains(c64(7.0, -0.01)));
        let (d, _) = r.distance(c64(3.25, -1.6));
        assert!((d - 1.0).abs() < 1e-3, "{d}");
        let (d, _) = r.distance(c64(8.0, 0.5));
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_admissibility() {
        let m = TransferModel::new(
            CMat::from_element(1, 1, c64(2.0, 0.0)),
            zero_kernel(1, 0.5, 6.0).unwrap(),
            1.5,
            2.5,
            0.25,
        )
        .unwrap();
        let hull = NumericalRangeHull::new(&m.a_tilde, 64).unwrap();
        let s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.6, 16);
        let r = build_rule(&s, &m, &hull).unwrap();
        let a = admissibility(&m, &r, &hull).unwrap();
        assert_eq!(a.var_upper, 0.0);
        assert!(a.admissible);
        assert_eq!(a.r_min, 0.0);
        assert!((a.r_max - a.d_lower).abs() < 1e-15);
        let e = r0_estimate(&m, &[s], &hull).unwrap();
        assert_eq!(e.r0, 0.0);
    }

    #[test]
    fn coupling_scaling_breaks_admissibility() {
        let hull_of = |m: &TransferModel| NumericalRangeHull::new(&m.a_tilde, 256).unwrap();
        let s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.6, 16);
        let m = scalar_model(0.01);
        let h = hull_of(&m);
        let a = admissibility(&m, &build_rule(&s, &m, &h).unwrap(), &h).unwrap();
        assert!(a.admissible && a.var_upper < 1.0);
        assert!(a.r_min <= a.o_radius() && a.o_radius() <= a.r_max);
        let m = scalar_model(10.0);
        let a = admissibility(&m, &build_rule(&s, &m, &h).unwrap(), &h).unwrap();
        assert!(!a.admissible);
        assert!(a.require().is_err());
    }

    #[test]
    fn mirrored_contour_has_equal_bounds() {
        let m = scalar_model(0.01);
        let h = NumericalRangeHull::new(&m.a_tilde, 256).unwrap();
        let s = ContourSpec::semi_ellipse(-1, 0.5, 6.0, 0.6, 16);
        let a = admissibility(&m, &build_rule(&s, &m, &h).unwrap(), &h).unwrap();
        let sm = s.mirrored();
        let b = admissibility(&m, &build_rule(&sm, &m, &h).unwrap(), &h).unwrap();
        assert!((a.var_upper - b.var_upper).abs() < 1e-10);
        assert!((a.d_lower - b.d_lower).abs() < 1e-10);
    }
}
