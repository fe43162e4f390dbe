//! Dense complex linear algebra used throughout the crate.
//!
//! LU, SVD and the Hermitian eigensolver come from nalgebra. The complex
//! Schur decomposition is implemented here (Householder reduction to
//! Hessenberg form followed by single-shift QR with Wilkinson shifts);
//! every resolvent product `(Z - mu)^{-1}` in the solver is evaluated in
//! the Schur basis of `Z`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn check_finite(a: &CMat, what: &'static str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_square(a: &CMat, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.iter().all(|z| *z == ZERO) {
        return 0.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(0.0, f64::max)
}

/// Smallest singular value.
pub fn min_singular_value(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Complex matrix product routed through four real GEMMs when the product
/// is large enough for the blocked real kernels to pay off.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul inner dimension");
    let work = a.nrows() * a.ncols() * b.ncols();
    if work < 32_768 {
        return a * b;
    }
    let ar = a.map(|z| z.re);
    let ai = a.map(|z| z.im);
    let br = b.map(|z| z.re);
    let bi = b.map(|z| z.im);
    let mut re = &ar * &br;
    re -= &ai * &bi;
    let mut im = &ar * &bi;
    im += &ai * &br;
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| c64(re[(i, j)], im[(i, j)]))
}

/// Solve `A Y = B` by LU. Fails when the factorization is singular or the
/// solution is not finite.
/// In-place Gauss-Jordan inversion with partial pivoting; columns are
/// updated as contiguous axpys.
fn gauss_jordan_inverse(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut perm = vec![0usize; n];
    let mut pivot_col = vec![ZERO; n];
    for k in 0..n {
        let col = m.column(k);
        let p = (k..n).max_by(|&i, &j| col[i].norm_sqr().total_cmp(&col[j].norm_sqr()))?;
        perm[k] = p;
        if p != k {
            m.swap_rows(k, p);
        }
        let piv = m[(k, k)];
        if piv == ZERO || !piv.re.is_finite() || !piv.im.is_finite() {
            return None;
        }
        let inv = ONE / piv;
        pivot_col.copy_from_slice(m.column(k).as_slice());
        pivot_col[k] = ZERO;
        for j in 0..n {
            if j == k {
                continue;
            }
            let a = m[(k, j)] * inv;
            m[(k, j)] = a;
            if a != ZERO {
                let col = m.column_mut(j);
                for (x, c) in col.into_iter().zip(&pivot_col) {
                    *x -= c * a;
                }
            }
        }
        let col = m.column_mut(k);
        for (x, c) in col.into_iter().zip(&pivot_col) {
            *x = -c * inv;
        }
        m[(k, k)] = inv;
    }
    for k in (0..n).rev() {
        if perm[k] != k {
            m.swap_columns(k, perm[k]);
        }
    }
    Some(m)
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    check_square(a, "system matrix")?;
    let lu = a.clone().lu();
    let y = lu.solve(b).ok_or_else(|| Error::Singular {
        context: "LU solve".into(),
    })?;
    check_finite(&y, "LU solution").map_err(|_| Error::Singular {
        context: "LU solve produced non-finite values".into(),
    })?;
    Ok(y)
}

/// Inverse with a conditioning guard: the matrix is reported singular when
/// `|A|_F |A^{-1}|_F` exceeds `1/(n * 1e-2 * eps)` or the residual
/// `|A Y - I|` is not small relative to that condition estimate.
pub fn inverse_checked(a: &CMat) -> Result<CMat> {
    check_square(a, "inverted matrix")?;
    let n = a.nrows();
    let y = gauss_jordan_inverse(a).ok_or_else(|| Error::Singular {
        context: "zero pivot in inversion".into(),
    })?;
    check_finite(&y, "inverse").map_err(|_| Error::Singular {
        context: "inverse has non-finite entries".into(),
    })?;
    let cond = a.norm() * y.norm();
    if !cond.is_finite() || cond > 1.0 / (n.max(1) as f64 * 1e-2 * f64::EPSILON) {
        return Err(Error::Singular {
            context: format!("condition estimate {cond:e}"),
        });
    }
    Ok(y)
}

/// Eigenvalues with algebraic multiplicity, in Schur-diagonal order.
pub fn spectrum(a: &CMat) -> Result<Vec<C64>> {
    Ok(SchurForm::new(a)?.eigenvalues())
}

pub fn determinant(a: &CMat) -> C64 {
    a.clone().lu().determinant()
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[C64], b: &[C64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |x: &[C64], y: &[C64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn hermitian_top(h: &CMat) -> Result<(f64, CVec)> {
    let n = h.nrows();
    if n == 0 {
        return Err(Error::EigenNoConvergence { n });
    }
    let vals = h.symmetric_eigenvalues();
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::EigenNoConvergence { n });
    }
    // inverse iteration from a fixed start; any unit vector is acceptable
    // to callers, accuracy only sharpens the boundary point
    let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shift = top + 1e-10 * scale;
    let lu = (h - CMat::identity(n, n) * c64(shift, 0.0)).lu();
    let mut x = CVec::from_fn(n, |i, _| c64(1.0 + 0.1 * (i as f64).sin(), 0.0));
    x /= c64(x.norm(), 0.0);
    for _ in 0..3 {
        match lu.solve(&x) {
            Some(y) if y.iter().all(|v| v.re.is_finite() && v.im.is_finite()) && y.norm() > 0.0 => {
                x = &y / c64(y.norm(), 0.0);
            }
            _ => break,
        }
    }
    Ok((top, x))
}

/// Complex Schur form `A = Q T Q^H` with `Q` unitary and `T` upper triangular.
#[derive(Debug, Clone)]
pub struct SchurForm {
    q: CMat,
    t: CMat,
}

impl SchurForm {
    pub fn new(a: &CMat) -> Result<Self> {
        check_square(a, "Schur input")?;
        check_finite(a, "Schur input")?;
        let n = a.nrows();
        let mut t = a.clone();
        let mut q = CMat::identity(n, n);
        reduce_to_hessenberg(&mut t, &mut q);
        shifted_qr(&mut t, &mut q)?;
        for j in 0..n {
            for i in (j + 1)..n {
                t[(i, j)] = ZERO;
            }
        }
        Ok(Self { q, t })
    }

    pub fn q(&self) -> &CMat {
        &self.q
    }

    pub fn t(&self) -> &CMat {
        &self.t
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.dim()).map(|k| self.t[(k, k)]).collect()
    }

    fn small_pivot(&self) -> f64 {
        let scale = self.t.norm().max(f64::MIN_POSITIVE);
        f64::EPSILON * scale
    }

    /// Unit right eigenvectors (columns), ordered like `eigenvalues()`.
    pub fn right_eigenvectors(&self) -> CMat {
        let n = self.dim();
        let tiny = self.small_pivot();
        let mut y = CMat::zeros(n, n);
        for k in 0..n {
            let lam = self.t[(k, k)];
            y[(k, k)] = ONE;
            for i in (0..k).rev() {
                let mut s = ZERO;
                for j in (i + 1)..=k {
                    s += self.t[(i, j)] * y[(j, k)];
                }
                let mut d = self.t[(i, i)] - lam;
                if d.norm() < tiny {
                    d = c64(tiny, 0.0);
                }
                y[(i, k)] = -s / d;
            }
        }
        normalize_columns(matmul(&self.q, &y))
    }

    /// Unit eigenvectors of `A^H` (columns); column `k` belongs to the
    /// eigenvalue `conj(eigenvalues()[k])`.
    pub fn adjoint_eigenvectors(&self) -> CMat {
        let n = self.dim();
        let tiny = self.small_pivot();
        let mut y = CMat::zeros(n, n);
        for k in 0..n {
            let lam = self.t[(k, k)].conj();
            y[(k, k)] = ONE;
            for i in (k + 1)..n {
                let mut s = ZERO;
                for j in k..i {
                    s += self.t[(j, i)].conj() * y[(j, k)];
                }
                let mut d = self.t[(i, i)].conj() - lam;
                if d.norm() < tiny {
                    d = c64(tiny, 0.0);
                }
                y[(i, k)] = -s / d;
            }
        }
        normalize_columns(matmul(&self.q, &y))
    }

    /// Solves `y (T - mu) = b` in place for a row vector stored contiguously.
    pub fn row_solve_in_place(&self, y: &mut [C64], mu: C64) {
        let n = self.dim();
        for j in 0..n {
            let col = self.t.column(j);
            let col = col.as_slice();
            let mut s = y[j];
            for i in 0..j {
                s -= y[i] * col[i];
            }
            y[j] = s / (col[j] - mu);
        }
    }

    /// Solves `(T - mu) y = b` in place.
    pub fn col_solve_in_place(&self, y: &mut [C64], mu: C64) {
        let n = self.dim();
        for i in (0..n).rev() {
            let col = self.t.column(i);
            let col = col.as_slice();
            let v = y[i] / (col[i] - mu);
            y[i] = v;
            for k in 0..i {
                y[k] -= col[k] * v;
            }
        }
    }

    /// `B (T - mu)^{-1}` for a block of rows `B` (r x n), expressed in the
    /// Schur basis.
    pub fn solve_rows_shifted(&self, b: &CMat, mu: C64) -> CMat {
        let mut y = b.transpose();
        for mut col in y.column_iter_mut() {
            self.row_solve_in_place(col.as_mut_slice(), mu);
        }
        y.transpose()
    }

    /// `(T - mu)^{-1} B` for a block of columns `B` (n x r).
    pub fn solve_cols_shifted(&self, b: &CMat, mu: C64) -> CMat {
        let mut y = b.clone();
        for mut col in y.column_iter_mut() {
            self.col_solve_in_place(col.as_mut_slice(), mu);
        }
        y
    }

    /// Upper triangular `(T - mu)^{-1}`.
    pub fn shifted_triangular_inverse(&self, mu: C64) -> CMat {
        let n = self.dim();
        let mut y = CMat::zeros(n, n);
        for j in 0..n {
            let col = &mut y.column_mut(j);
            let col = &mut col.as_mut_slice()[..=j];
            col[j] = ONE;
            for i in (0..=j).rev() {
                let t = self.t.column(i);
                let t = t.as_slice();
                let v = col[i] / (t[i] - mu);
                col[i] = v;
                for k in 0..i {
                    col[k] -= t[k] * v;
                }
            }
        }
        y
    }

    /// `(A - z)^{-1}` assembled from the Schur factors.
    pub fn resolvent(&self, z: C64) -> CMat {
        let inner = self.solve_cols_shifted(&self.q.adjoint(), z);
        matmul(&self.q, &inner)
    }
}

fn normalize_columns(mut v: CMat) -> CMat {
    for mut col in v.column_iter_mut() {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            col /= c64(nrm, 0.0);
        }
    }
    v
}

fn reduce_to_hessenberg(h: &mut CMat, q: &mut CMat) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let xnorm = (k + 1..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * xnorm;
        let mut v: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- P H with P = I - 2 v v^H acting on rows k+1..n
        for j in k..n {
            let mut s = ZERO;
            for (idx, vi) in v.iter().enumerate() {
                s += vi.conj() * h[(k + 1 + idx, j)];
            }
            s *= 2.0;
            for (idx, vi) in v.iter().enumerate() {
                h[(k + 1 + idx, j)] -= vi * s;
            }
        }
        // H <- H P, Q <- Q P acting on columns k+1..n
        for m in [&mut *h, &mut *q] {
            for i in 0..n {
                let mut s = ZERO;
                for (idx, vi) in v.iter().enumerate() {
                    s += m[(i, k + 1 + idx)] * vi;
                }
                s *= 2.0;
                for (idx, vi) in v.iter().enumerate() {
                    m[(i, k + 1 + idx)] -= s * vi.conj();
                }
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
}

/// Rotation `G = [[c, s], [-conj(s), c]]` with `G [a; b] = [r; 0]`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, ZERO);
    }
    if an == 0.0 {
        return (0.0, ONE);
    }
    let r = an.hypot(bn);
    let c = an / r;
    let s = (a / an) * b.conj() / r;
    (c, s)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let l1 = mean + disc;
    let l2 = mean - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn shifted_qr(h: &mut CMat, q: &mut CMat) -> Result<()> {
    let n = h.nrows();
    if n < 2 {
        return Ok(());
    }
    let hnorm = h.norm();
    if hnorm == 0.0 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let max_total = 100 * n + 100;
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n - 1;
    let mut rots: Vec<(f64, C64)> = Vec::with_capacity(n);
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let mut s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            if s == 0.0 {
                s = hnorm;
            }
            if h[(l, l - 1)].norm() <= eps * s {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        total += 1;
        since_deflation += 1;
        if total > max_total {
            return Err(Error::EigenNoConvergence { n });
        }
        let shift = if since_deflation.is_multiple_of(11) {
            let sub = h[(hi, hi - 1)].norm();
            let sub2 = if hi >= 2 { h[(hi - 1, hi - 2)].norm() } else { 0.0 };
            h[(hi, hi)] + c64(0.75 * (sub + sub2), 0.4375 * (sub + sub2))
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };

        for k in l..=hi {
            h[(k, k)] -= shift;
        }
        rots.clear();
        for k in l..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..n {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            h[(k + 1, k)] = ZERO;
            rots.push((c, s));
        }
        for (idx, k) in (l..hi).enumerate() {
            let (c, s) = rots[idx];
            let sc = s.conj();
            for i in 0..=k + 1 {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * c + sc * y;
                h[(i, k + 1)] = -s * x + y * c;
            }
            for i in 0..n {
                let x = q[(i, k)];
                let y = q[(i, k + 1)];
                q[(i, k)] = x * c + sc * y;
                q[(i, k + 1)] = -s * x + y * c;
            }
        }
        for k in l..=hi {
            h[(k, k)] += shift;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(n, n, |_, _| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn spectrum_of_diagonal() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c64(1.0, 0.0), c64(3.0, 0.0)]));
        let s = sorted(spectrum(&a).unwrap());
        assert!((s[0] - c64(1.0, 0.0)).norm() < 1e-14);
        assert!((s[1] - c64(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn spectrum_of_zero() {
        let s = spectrum(&CMat::zeros(2, 2)).unwrap();
        assert_eq!(s, vec![ZERO, ZERO]);
    }

    #[test]
    fn spectrum_of_companion() {
        // z^2 - 3z + 2 = (z - 1)(z - 2)
        let a = CMat::from_row_slice(2, 2, &[ZERO, c64(-2.0, 0.0), ONE, c64(3.0, 0.0)]);
        let s = sorted(spectrum(&a).unwrap());
        assert!((s[0] - ONE).norm() < 1e-13);
        assert!((s[1] - c64(2.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn schur_structured_matrix_converges() {
        // nalgebra's complex Schur stalls on this one
        let n = 121;
        let a = CMat::from_fn(n, n, |i, j| {
            c64(((i * 7 + j * 3) % 11) as f64, if i == j { 5.0 } else { 0.0 })
        });
        let s = SchurForm::new(&a).unwrap();
        let back = s.q() * s.t() * s.q().adjoint();
        assert!((back - &a).norm() < 1e-10 * a.norm());
    }

    #[test]
    fn schur_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[1usize, 2, 3, 5, 8, 20, 60] {
            let a = random(n, &mut rng);
            let s = SchurForm::new(&a).unwrap();
            let back = s.q() * s.t() * s.q().adjoint();
            assert!((back - &a).norm() < 1e-12 * (n as f64), "n = {n}");
            let unit = s.q().adjoint() * s.q() - CMat::identity(n, n);
            assert!(unit.norm() < 1e-12 * (n as f64));
            let v = s.right_eigenvectors();
            let w = s.adjoint_eigenvectors();
            for (k, lam) in s.eigenvalues().into_iter().enumerate() {
                let u = v.column(k).into_owned();
                assert!(vec_norm(&(&a * &u - &u * lam)) < 1e-10);
                let u = w.column(k).into_owned();
                assert!(vec_norm(&(a.adjoint() * &u - &u * lam.conj())) < 1e-10);
            }
        }
    }

    #[test]
    fn shifted_solves_match_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(9, &mut rng);
        let s = SchurForm::new(&a).unwrap();
        let mu = c64(0.3, -0.7);
        let shifted = s.t() - CMat::identity(9, 9) * mu;
        let inv = shifted.clone().try_inverse().unwrap();
        let b = CMat::from_fn(2, 9, |i, j| c64(i as f64 + 1.0, j as f64));
        assert!((s.solve_rows_shifted(&b, mu) - &b * &inv).norm() < 1e-11);
        let b = b.transpose();
        assert!((s.solve_cols_shifted(&b, mu) - &inv * &b).norm() < 1e-11);
        let res = (&a - CMat::identity(9, 9) * mu).try_inverse().unwrap();
        assert!((s.resolvent(mu) - res).norm() < 1e-11);
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&CMat::identity(3, 3)) - 1.0).abs() < 1e-14);
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c64(0.0, 2.0), c64(-1.0, 0.0)]));
        assert!((op_norm(&d) - 2.0).abs() < 1e-14);
        // A^H A = diag(0, 1)
        let j = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!((op_norm(&j) - 1.0).abs() < 1e-14);
        assert_eq!(op_norm(&CMat::zeros(4, 4)), 0.0);
    }

    #[test]
    fn split_matmul_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = CMat::from_fn(40, 300, |_, _| c64(rng.gen(), rng.gen()));
        let b = CMat::from_fn(300, 40, |_, _| c64(rng.gen(), rng.gen()));
        assert!((matmul(&a, &b) - &a * &b).norm() < 1e-10);
    }

    #[test]
    fn hausdorff_basic() {
        let a = [ONE, c64(2.0, 0.0)];
        let b = [c64(1.0, 0.1)];
        assert!((hausdorff(&a, &b) - (1.0f64 + 0.01).sqrt()).abs() < 1e-15);
        assert_eq!(hausdorff(&[], &[]), 0.0);
    }

    #[test]
    fn singular_inverse_is_flagged() {
        let a = CMat::from_row_slice(2, 2, &[ONE, ONE, ONE, ONE]);
        assert!(inverse_checked(&a).is_err());
    }
}
