use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_top, CMat, C64};

pub const DEFAULT_ANGLES: usize = 256;

/// Support-function samples of the numerical range W(A).
#[derive(Debug, Clone, Serialize)]
pub struct NumericalRangeHull {
    pub angles: Vec<f64>,
    pub support_values: Vec<f64>,
    pub boundary_points: Vec<C64>,
    pub n_angles: usize,
    #[serde(skip)]
    inner: Vec<C64>,
    #[serde(skip)]
    outer: Vec<C64>,
}

impl NumericalRangeHull {
    pub fn new(a: &CMat, n_angles: usize) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension("numerical range needs a non-empty square matrix".into()));
        }
        if n_angles < 16 {
            return Err(Error::Config(format!("n_angles = {n_angles} < 16")));
        }
        crate::linalg::check_finite(a, "numerical range input")?;
        let mut angles = Vec::with_capacity(n_angles);
        let mut support_values = Vec::with_capacity(n_angles);
        let mut boundary_points = Vec::with_capacity(n_angles);
        for k in 0..n_angles {
            let theta = 2.0 * PI * k as f64 / n_angles as f64;
            let e = c64(theta.cos(), theta.sin());
            let ea = a * e;
            let h = (&ea + ea.adjoint()) * c64(0.5, 0.0);
            let (top, x) = hermitian_top(&h)?;
            let ax = a * &x;
            let p = x.dotc(&ax);
            // the larger of the two keeps the lower distance bound conservative
            let hk = top.max((e * p).re);
            angles.push(theta);
            support_values.push(hk);
            boundary_points.push(p);
        }
        let inner = convex_hull(&boundary_points);
        let outer = outer_polygon(&angles, &support_values);
        Ok(Self {
            angles,
            support_values,
            boundary_points,
            n_angles,
            inner,
            outer,
        })
    }

    /// Certified lower and upper bounds on dist(z, W(A)).
    pub fn distance(&self, z: C64) -> (f64, f64) {
        let mut lower = 0.0f64;
        for (theta, h) in self.angles.iter().zip(&self.support_values) {
            let e = c64(theta.cos(), theta.sin());
            lower = lower.max((e * z).re - h);
        }
        let upper = polygon_distance(&self.inner, z).max(lower);
        (lower, upper)
    }

    pub fn lower(&self, z: C64) -> f64 {
        self.distance(z).0
    }

    pub fn upper(&self, z: C64) -> f64 {
        self.distance(z).1
    }

    /// Convex hull of the boundary points (an inner approximation of W(A)).
    pub fn inner_polygon(&self) -> &[C64] {
        &self.inner
    }

    /// Vertices of the intersection of the support half-planes (an outer
    /// approximation of W(A)).
    pub fn outer_polygon(&self) -> &[C64] {
        &self.outer
    }
}

fn cross(o: C64, a: C64, b: C64) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Monotone-chain convex hull, counter-clockwise, without repeated points.
pub fn convex_hull(points: &[C64]) -> Vec<C64> {
    let mut pts: Vec<C64> = points.to_vec();
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup_by(|a, b| (*a - *b).norm() <= 1e-15 * (1.0 + b.norm()));
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<C64> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(a: C64, b: C64, z: C64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

/// Distance from `z` to a convex polygon given counter-clockwise; zero inside.
pub fn polygon_distance(poly: &[C64], z: C64) -> f64 {
    match poly.len() {
        0 => f64::INFINITY,
        1 => (z - poly[0]).norm(),
        2 => segment_distance(poly[0], poly[1], z),
        n => {
            let inside = (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], z) >= 0.0);
            if inside {
                return 0.0;
            }
            (0..n)
                .map(|i| segment_distance(poly[i], poly[(i + 1) % n], z))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Vertices of the polygon {z : Re(e^{i theta_k} z) <= h_k for all k}.
fn outer_polygon(angles: &[f64], h: &[f64]) -> Vec<C64> {
    let n = angles.len();
    let mut verts = Vec::with_capacity(n);
    for k in 0..n {
        let j = (k + 1) % n;
        // Re(e^{i t} z) = cos t x - sin t y
        let (a1, b1) = (angles[k].cos(), -angles[k].sin());
        let (a2, b2) = (angles[j].cos(), -angles[j].sin());
        let det = a1 * b2 - a2 * b1;
        if det.abs() < 1e-14 {
            continue;
        }
        let x = (h[k] * b2 - h[j] * b1) / det;
        let y = (a1 * h[j] - a2 * h[k]) / det;
        verts.push(c64(x, y));
    }
    verts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{op_norm, spectrum, CVec, ONE, ZERO};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag13() -> CMat {
        CMat::from_diagonal(&CVec::from_vec(vec![ONE, c64(3.0, 0.0)]))
    }

    fn jordan() -> CMat {
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
    }

    #[test]
    fn hermitian_gives_segment() {
        let h = NumericalRangeHull::new(&diag13(), 64).unwrap();
        for p in &h.boundary_points {
            assert!(p.im.abs() < 1e-12 && p.re > 1.0 - 1e-12 && p.re < 3.0 + 1e-12);
        }
        assert!((h.support_values[0] - 3.0).abs() < 1e-12);
        let (lo, up) = h.distance(c64(2.0, 1.0));
        assert!((lo - 1.0).abs() < 1e-12 && (up - 1.0).abs() < 1e-12);
        assert_eq!(h.lower(c64(2.0, 0.0)), 0.0);
    }

    #[test]
    fn jordan_block_gives_half_disk() {
        let h = NumericalRangeHull::new(&jordan(), 512).unwrap();
        for v in &h.support_values {
            assert!((v - 0.5).abs() < 1e-12);
        }
        // sampled <Ax, x> never exceeds the support value
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = jordan();
        for _ in 0..2000 {
            let x = CVec::from_fn(2, |_, _| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let x = &x / c64(x.norm(), 0.0);
            let p = x.dotc(&(&a * &x));
            assert!(p.norm() <= 0.5 + 1e-12);
        }
        let (lo, up) = h.distance(c64(2.0, 0.0));
        assert!((lo - 1.5).abs() < 1e-3 && (up - 1.5).abs() < 1e-3);
    }

    #[test]
    fn scalar_point() {
        let a = CMat::from_element(1, 1, c64(2.0, 1.0));
        let h = NumericalRangeHull::new(&a, 16).unwrap();
        for (t, v) in h.angles.iter().zip(&h.support_values) {
            assert!((v - (c64(t.cos(), t.sin()) * c64(2.0, 1.0)).re).abs() < 1e-13);
        }
        assert!((h.upper(c64(5.0, 5.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_few_angles() {
        assert!(NumericalRangeHull::new(&diag13(), 8).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (CMat, C64)> {
        (1usize..=8, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = CMat::from_fn(n, n, |_, _| c64(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0));
            let z = c64(rng.gen::<f64>() * 8.0 - 4.0, rng.gen::<f64>() * 8.0 - 4.0);
            (a, z)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn resolvent_bounded_by_inverse_distance((a, z) in arb_case()) {
            let h = NumericalRangeHull::new(&a, 64).unwrap();
            let (lo, up) = h.distance(z);
            prop_assert!(lo <= up + 1e-14);
            if lo > 0.0 {
                let n = a.nrows();
                let r = (&a - CMat::identity(n, n) * z).try_inverse().unwrap();
                prop_assert!(op_norm(&r) <= 1.0 / lo + 1e-8);
            }
        }

        #[test]
        fn support_identity_and_spectrum_inside((a, _z) in arb_case()) {
            let h = NumericalRangeHull::new(&a, 32).unwrap();
            for k in 0..h.n_angles {
                let e = c64(h.angles[k].cos(), h.angles[k].sin());
                prop_assert!(((e * h.boundary_points[k]).re - h.support_values[k]).abs()
                    <= 1e-10 * (1.0 + h.support_values[k].abs()));
            }
            for lam in spectrum(&a).unwrap() {
                prop_assert!(h.lower(lam) <= 1e-8);
                for k in 0..h.n_angles {
                    let e = c64(h.angles[k].cos(), h.angles[k].sin());
                    prop_assert!((e * lam).re <= h.support_values[k] + 1e-10);
                }
            }
        }

        #[test]
        fn refinement_is_monotone((a, z) in arb_case()) {
            let coarse = NumericalRangeHull::new(&a, 32).unwrap();
            let fine = NumericalRangeHull::new(&a, 64).unwrap();
            let (l0, u0) = coarse.distance(z);
            let (l1, u1) = fine.distance(z);
            prop_assert!(l1 >= l0 - 1e-12);
            prop_assert!(u1 <= u0 + 1e-12);
        }
    }
}
