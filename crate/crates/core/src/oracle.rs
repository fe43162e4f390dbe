use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, inverse_checked, min_singular_value, op_norm, solve, CMat, SchurForm, C64};
use crate::quadrature::circle_rule;

/// Block matrix `H = [[A, B~ C^{1/2}], [C^{1/2} D~, C]]` with `C = diag(mu)`.
#[derive(Debug, Clone)]
pub struct DiscreteBlockModel {
    pub a: CMat,
    pub b_tilde: CMat,
    pub d_tilde: CMat,
    pub mu: Vec<f64>,
}

impl DiscreteBlockModel {
    pub fn new(a: CMat, b_tilde: CMat, d_tilde: CMat, mu: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = mu.len();
        if a.ncols() != n || b_tilde.shape() != (n, m) || d_tilde.shape() != (m, n) {
            return Err(Error::Dimension(format!(
                "block model needs A {n}x{n}, B~ {n}x{m}, D~ {m}x{n}; got {:?}, {:?}, {:?}",
                a.shape(),
                b_tilde.shape(),
                d_tilde.shape()
            )));
        }
        if let Some(bad) = mu.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::ModelRejected(format!("C must be positive, got mu = {bad}")));
        }
        Ok(Self { a, b_tilde, d_tilde, mu })
    }

    /// Random instance with entries uniform in the unit square, scaled by
    /// `coupling` off the diagonal blocks, and `mu` in [0.5, 3].
    pub fn random(n: usize, m: usize, coupling: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = |s: f64| c64(rng.gen_range(-1.0..1.0) * s, rng.gen_range(-1.0..1.0) * s);
        let a = CMat::from_fn(n, n, |_, _| z(1.0));
        let b = CMat::from_fn(n, m, |_, _| z(coupling));
        let d = CMat::from_fn(m, n, |_, _| z(coupling));
        let mu = (0..m).map(|_| rng.gen_range(0.5..3.0)).collect();
        Self::new(a, b, d, mu).expect("random instance is well formed")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    fn pole_distance(&self, z: C64) -> f64 {
        self.mu.iter().map(|m| (z - m).norm()).fold(f64::INFINITY, f64::min)
    }

    /// `M(z) = (A - B~ D~) - z + sum_j z (B~ e_j)(e_j^T D~) / (z - mu_j)`.
    pub fn m(&self, z: C64) -> Result<CMat> {
        let d = self.pole_distance(z);
        if d == 0.0 {
            return Err(Error::Singular {
                context: format!("M(z) has a pole at z = {z}"),
            });
        }
        let n = self.n();
        let mut out = &self.a - &self.b_tilde * &self.d_tilde - CMat::identity(n, n) * z;
        for (j, mu) in self.mu.iter().enumerate() {
            let f = z / (z - mu);
            out += self.b_tilde.column(j) * self.d_tilde.row(j) * f;
        }
        Ok(out)
    }

    /// `dM/dz`.
    pub fn m_prime(&self, z: C64) -> CMat {
        let n = self.n();
        let mut out = -CMat::identity(n, n);
        for (j, mu) in self.mu.iter().enumerate() {
            let f = -mu / ((z - mu) * (z - mu));
            out += self.b_tilde.column(j) * self.d_tilde.row(j) * f;
        }
        out
    }
}

pub fn build_block(dm: &DiscreteBlockModel) -> CMat {
    let (n, m) = (dm.n(), dm.channels());
    let mut h = CMat::zeros(n + m, n + m);
    h.view_mut((0, 0), (n, n)).copy_from(&dm.a);
    for (j, mu) in dm.mu.iter().enumerate() {
        let r = mu.sqrt();
        h[(n + j, n + j)] = c64(*mu, 0.0);
        for i in 0..n {
            h[(i, n + j)] = dm.b_tilde[(i, j)] * r;
            h[(n + j, i)] = dm.d_tilde[(j, i)] * r;
        }
    }
    h
}

/// Upper-left n x n block of `(H - z)^{-1}`.
pub fn compressed_resolvent(dm: &DiscreteBlockModel, z: C64) -> Result<CMat> {
    let (n, m) = (dm.n(), dm.channels());
    let h = build_block(dm) - CMat::identity(n + m, n + m) * z;
    let mut rhs = CMat::zeros(n + m, n);
    rhs.view_mut((0, 0), (n, n)).fill_with_identity();
    Ok(solve(&h, &rhs)?.rows(0, n).into_owned())
}

/// `|M(z)^{-1} - P_A (H - z)^{-1} P_A|`.
pub fn schur_defect(dm: &DiscreteBlockModel, z: C64) -> Result<f64> {
    let minv = inverse_checked(&dm.m(z)?)?;
    Ok(op_norm(&(minv - compressed_resolvent(dm, z)?)))
}

#[derive(Debug, Clone, Serialize)]
pub struct RootMatch {
    pub seed: C64,
    pub root: C64,
    pub iterations: usize,
    pub distance_to_spectrum: f64,
    pub min_singular: f64,
    pub scale: f64,
}

/// Newton's method on `det M` (step `1 / tr(M^{-1} M')`) from `seed`.
pub fn newton_det_root(dm: &DiscreteBlockModel, seed: C64, tol: f64, max_iter: usize) -> Result<(C64, usize)> {
    let mut z = seed;
    for it in 1..=max_iter {
        let m = dm.m(z)?;
        let lu = m.lu();
        let x = lu.solve(&dm.m_prime(z));
        let Some(x) = x else {
            // exactly singular: z is a root
            return Ok((z, it));
        };
        let tr = x.trace();
        if tr == c64(0.0, 0.0) || !tr.re.is_finite() || !tr.im.is_finite() {
            return Ok((z, it));
        }
        let step = c64(1.0, 0.0) / tr;
        z -= step;
        if step.norm() <= tol * (1.0 + z.norm()) {
            return Ok((z, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last: f64::NAN,
        history: vec![],
    })
}

/// Each eigenvalue h of H away from the poles: the smallest singular value
/// of M(h), and the Newton root of det M seeded at h.
pub fn eigen_correspondence(dm: &DiscreteBlockModel) -> Result<Vec<RootMatch>> {
    let h = build_block(dm);
    let eig = SchurForm::new(&h)?.eigenvalues();
    let mut out = Vec::new();
    for &seed in &eig {
        if dm.pole_distance(seed) <= 1e-6 {
            continue;
        }
        let m = dm.m(seed)?;
        let scale = 1.0 + op_norm(&m);
        let (root, iterations) = newton_det_root(dm, seed, 1e-15, 50)?;
        let dist = eig.iter().map(|e| (e - root).norm()).fold(f64::INFINITY, f64::min);
        out.push(RootMatch {
            seed,
            root,
            iterations,
            distance_to_spectrum: dist,
            min_singular: min_singular_value(&m),
            scale,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidueConsistency {
    pub eigenvalue: C64,
    pub radius: f64,
    pub defect: f64,
}

/// `-(1/(2 pi i)) \oint M^{-1}` around an isolated eigenvalue of H against
/// the A-block of its eigenprojection `v w^H / (w^H v)`.
pub fn residue_consistency(dm: &DiscreteBlockModel, index: usize, order: usize) -> Result<ResidueConsistency> {
    let h = build_block(dm);
    let schur = SchurForm::new(&h)?;
    let eig = schur.eigenvalues();
    let lam = eig[index];
    let gap = eig
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != index)
        .map(|(_, e)| (e - lam).norm())
        .chain(dm.mu.iter().map(|m| (lam - m).norm()))
        .fold(f64::INFINITY, f64::min);
    let radius = gap / 3.0;
    if !(radius > 1e-8) {
        return Err(Error::ClusterNotSeparable { lambda: lam, gap, radius });
    }
    let v = schur.right_eigenvectors().column(index).into_owned();
    let w = schur.adjoint_eigenvectors().column(index).into_owned();
    let p = &v * w.adjoint() / w.dotc(&v);
    let n = dm.n();
    let truth = p.view((0, 0), (n, n)).into_owned();
    let (nodes, weights) = circle_rule(lam, radius, order);
    let mut loop_int = CMat::zeros(n, n);
    for (z, wt) in nodes.iter().zip(&weights) {
        loop_int += inverse_checked(&dm.m(*z)?)? * *wt;
    }
    Ok(ResidueConsistency {
        eigenvalue: lam,
        radius,
        defect: op_norm(&(loop_int - truth)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, tol: f64) -> OracleCheck {
    OracleCheck {
        name: name.into(),
        value,
        tol,
        pass: value <= tol,
    }
}

/// Random z in [-1, 4] x [-2, 2] at distance >= 0.1 from sigma(H) and the poles.
pub fn sample_points(dm: &DiscreteBlockModel, count: usize, seed: u64) -> Result<Vec<C64>> {
    let eig = SchurForm::new(&build_block(dm))?.eigenvalues();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = c64(rng.gen_range(-1.0..4.0), rng.gen_range(-2.0..2.0));
        let d = eig.iter().map(|e| (e - z).norm()).fold(dm.pole_distance(z), f64::min);
        if d >= 0.1 {
            out.push(z);
        }
    }
    Ok(out)
}

/// The fixed-seed suite behind `verify`.
pub fn run_suite(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let mut schur_worst: f64 = 0.0;
    let mut sv_worst: f64 = 0.0;
    let mut root_worst: f64 = 0.0;
    let mut residue_worst: f64 = 0.0;
    for k in 0..3 {
        let dm = DiscreteBlockModel::random(4, 6, 0.5, seed + k);
        for z in sample_points(&dm, 20, seed + 100 + k)? {
            schur_worst = schur_worst.max(schur_defect(&dm, z)?);
        }
        for r in eigen_correspondence(&dm)? {
            sv_worst = sv_worst.max(r.min_singular / r.scale);
            root_worst = root_worst.max(r.distance_to_spectrum);
        }
        let h = build_block(&dm);
        let eig = SchurForm::new(&h)?.eigenvalues();
        let best = most_isolated(&eig, &dm.mu);
        residue_worst = residue_worst.max(residue_consistency(&dm, best, 256)?.defect);
    }
    out.push(check("schur_complement_vs_compressed_resolvent", schur_worst, 1e-10));
    out.push(check("min_singular_value_of_M_at_eigenvalues_of_H", sv_worst, 1e-8));
    out.push(check("det_M_roots_vs_eigenvalues_of_H", root_worst, 1e-8));
    out.push(check("loop_integral_vs_eigenprojection", residue_worst, 1e-8));
    Ok(out)
}

pub fn most_isolated(eig: &[C64], poles: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, lam) in eig.iter().enumerate() {
        let gap = eig
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, e)| (e - lam).norm())
            .chain(poles.iter().map(|m| (lam - m).norm()))
            .fold(f64::INFINITY, f64::min);
        if gap > best.1 {
            best = (k, gap);
        }
    }
    best.0
}
