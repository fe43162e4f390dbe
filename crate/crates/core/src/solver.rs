use serde::{Deserialize, Serialize};

use crate::contour::AdmissibilityReport;
use crate::error::{Error, Result};
use crate::linalg::{c64, matmul, min_singular_value, op_norm, vec_norm, CMat, SchurForm, C64};
use crate::transfer::{ContourModel, CUT_GUARD};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kappa {
    Right,
    Left,
}

impl Kappa {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kappa::Right => "right",
            Kappa::Left => "left",
        }
    }
}

/// Fails when an eigenvalue of Z lies on the contour.
pub fn check_separation(cm: &ContourModel, eigenvalues: &[C64]) -> Result<()> {
    for &lam in eigenvalues {
        let (d, nearest) = cm.rule.distance(lam);
        if d <= CUT_GUARD {
            return Err(Error::Separation {
                eigenvalue: lam,
                nearest,
                distance: d,
            });
        }
    }
    Ok(())
}

/// Right: `sum_k w_k K'(mu_k) Z (Z - mu_k)^{-1}`;
/// left: `sum_k w_k Z (Z - mu_k)^{-1} K'(mu_k)`.
pub fn transform(cm: &ContourModel, z: &CMat, kappa: Kappa) -> Result<CMat> {
    let schur = SchurForm::new(z)?;
    check_separation(cm, &schur.eigenvalues())?;
    Ok(transform_with(cm, &schur, kappa))
}

pub(crate) fn transform_with(cm: &ContourModel, schur: &SchurForm, kappa: Kappa) -> CMat {
    let n = cm.dim();
    let stack = cm.stack();
    if stack.owner.is_empty() {
        return CMat::zeros(n, n);
    }
    let nodes = &cm.rule.nodes;
    let weights = &cm.rule.weights;
    let q = schur.q();
    match kappa {
        Kappa::Right => {
            // rows of R_k Q, stored transposed so each row is contiguous
            let rq = matmul(&stack.right, q);
            let mut y = rq.transpose();
            for (j, mut col) in y.column_iter_mut().enumerate() {
                let mu = nodes[stack.owner[j]];
                let b: Vec<C64> = col.iter().copied().collect();
                schur.row_solve_in_place(col.as_mut_slice(), mu);
                for (v, b) in col.iter_mut().zip(&b) {
                    *v = b + *v * mu;
                }
            }
            let mut l = stack.left.clone();
            for (j, mut c) in l.column_iter_mut().enumerate() {
                c *= weights[stack.owner[j]];
            }
            let inner = matmul(&l, &y.transpose());
            matmul(&inner, &q.adjoint())
        }
        Kappa::Left => {
            let mut y = matmul(&q.adjoint(), &stack.left);
            for (j, mut col) in y.column_iter_mut().enumerate() {
                let mu = nodes[stack.owner[j]];
                let b: Vec<C64> = col.iter().copied().collect();
                schur.col_solve_in_place(col.as_mut_slice(), mu);
                for (v, b) in col.iter_mut().zip(&b) {
                    *v = b + *v * mu;
                }
                col *= weights[stack.owner[j]];
            }
            let inner = matmul(&y, &stack.right);
            matmul(q, &inner)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub kappa: Kappa,
    pub sheet: i32,
    #[serde(skip)]
    pub z: CMat,
    #[serde(skip)]
    pub x: CMat,
    pub iterations: usize,
    pub defect: f64,
    pub x_norm: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub tol: f64,
    pub step_history: Vec<f64>,
    pub contraction_ratio: Option<f64>,
    pub sigma_z: Vec<C64>,
}

/// Fixed-point iteration `X_{k+1} = V(A~ + X_k)` from `X_0 = 0`.
pub fn solve_transformation(
    cm: &ContourModel,
    adm: &AdmissibilityReport,
    kappa: Kappa,
    tol: f64,
    max_iter: usize,
) -> Result<SolutionReport> {
    adm.require()?;
    if adm.sheet != cm.rule.sheet() {
        return Err(Error::ContourRejected("admissibility report belongs to another sheet".into()));
    }
    let a = &cm.model.a_tilde;
    let n = cm.dim();
    let mut x = CMat::zeros(n, n);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=max_iter {
        iterations = k;
        let next = transform(cm, &(a + &x), kappa)?;
        let step = op_norm(&(&next - &x));
        x = next;
        history.push(step);
        let norm = op_norm(&x);
        if norm >= adm.r_max {
            return Err(Error::LeftUniquenessBall {
                iteration: k,
                norm,
                r_max: adm.r_max,
            });
        }
        if step <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }
    let z = a + &x;
    let schur = SchurForm::new(&z)?;
    check_separation(cm, &schur.eigenvalues())?;
    let defect = op_norm(&(&x - transform_with(cm, &schur, kappa)));
    let ratios: Vec<f64> = history
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let contraction_ratio = ratios.last().copied();
    Ok(SolutionReport {
        kappa,
        sheet: cm.rule.sheet(),
        x_norm: op_norm(&x),
        sigma_z: schur.eigenvalues(),
        z,
        x,
        iterations,
        defect,
        r_min: adm.r_min,
        r_max: adm.r_max,
        tol,
        step_history: history,
        contraction_ratio,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PushThrough {
    pub max_defect: f64,
    pub scale: f64,
    pub eigvec_condition: f64,
}

/// Largest `|M_Gamma(z) u| / |u|` over eigenpairs of Z (right) or of Z^H
/// with the adjoint transfer function (left).
pub fn pushthrough_defect(cm: &ContourModel, report: &SolutionReport) -> Result<PushThrough> {
    let schur = SchurForm::new(&report.z)?;
    let lams = schur.eigenvalues();
    check_separation(cm, &lams)?;
    let vecs = match report.kappa {
        Kappa::Right => schur.right_eigenvectors(),
        Kappa::Left => schur.adjoint_eigenvectors(),
    };
    let mut worst = 0.0f64;
    for (k, &lam) in lams.iter().enumerate() {
        let u = vecs.column(k).into_owned();
        let r = match report.kappa {
            Kappa::Right => cm.apply_m_gamma(lam, &u)?,
            Kappa::Left => cm.apply_m_gamma_adjoint(lam, &u)?,
        };
        worst = worst.max(vec_norm(&r) / vec_norm(&u));
    }
    let smin = min_singular_value(&vecs);
    Ok(PushThrough {
        max_defect: worst,
        scale: 1.0 + op_norm(&report.z),
        eigvec_condition: if smin > 0.0 { op_norm(&vecs) / smin } else { f64::INFINITY },
    })
}

/// Scalar Newton iteration on m_Gamma(z) for 1x1 models.
pub fn scalar_root(cm: &ContourModel, z0: C64, tol: f64) -> Result<C64> {
    if cm.dim() != 1 {
        return Err(Error::Dimension("scalar_root needs a 1x1 model".into()));
    }
    let mut z = z0;
    for _ in 0..100 {
        let m = cm.eval_m_gamma(z)?[(0, 0)];
        // m'(z) = -1 - sum_k w_k K_k mu_k / (z - mu_k)^2
        let coeffs: Vec<C64> = cm
            .rule
            .nodes
            .iter()
            .zip(&cm.rule.weights)
            .map(|(mu, w)| -w * mu / ((z - mu) * (z - mu)))
            .collect();
        let dm = c64(-1.0, 0.0) + cm.node_sum(&coeffs)[(0, 0)];
        let step = m / dm;
        z -= step;
        if step.norm() <= tol {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence {
        iterations: 100,
        last: f64::NAN,
        history: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{admissibility, build_rule, ContourSpec};
    use crate::linalg::ZERO;
    use crate::model::{zero_kernel, HolomorphyDomain, KernelDerivative, RationalSum, ScalarExp, TransferModel};
    use crate::numrange::NumericalRangeHull;
    use std::sync::Arc;

    fn scalar_model(scale: f64) -> TransferModel {
        let k = KernelDerivative::new(
            "scalar-exp",
            Arc::new(ScalarExp {
                scale,
                rate: 1.0,
                shift: 0.5,
            }),
            HolomorphyDomain::HalfPlane { re_min: -1.0 },
            0.5,
            6.0,
        )
        .unwrap();
        TransferModel::new(CMat::from_element(1, 1, c64(2.0, 0.0)), k, 1.5, 2.5, 0.25).unwrap()
    }

    fn matrix_model() -> TransferModel {
        let k1 = CMat::from_row_slice(3, 3, &[
            c64(0.02, 0.0), c64(0.005, 0.0), ZERO,
            c64(0.0, 0.004), c64(0.01, 0.0), c64(0.003, 0.0),
            ZERO, c64(0.002, 0.0), c64(0.015, 0.0),
        ]);
        let k = KernelDerivative::new(
            "rational-sum",
            Arc::new(RationalSum {
                residues: vec![k1],
                poles: vec![c64(-0.5, 0.7)],
            }),
            HolomorphyDomain::HalfPlane { re_min: 0.0 },
            0.5,
            6.0,
        )
        .unwrap();
        let a = CMat::from_row_slice(3, 3, &[
            c64(1.8, 0.0), c64(0.05, 0.0), ZERO,
            c64(0.05, 0.0), c64(2.0, 0.0), c64(0.02, 0.0),
            ZERO, c64(0.02, 0.0), c64(2.3, 0.0),
        ]);
        TransferModel::new(a, k, 1.5, 2.5, 0.25).unwrap()
    }

    fn setup(m: &TransferModel, sheet: i32, depth: f64) -> (ContourModel, AdmissibilityReport) {
        let hull = NumericalRangeHull::new(&m.a_tilde, 256).unwrap();
        let s = ContourSpec::semi_ellipse(sheet, 0.5, 6.0, depth, 16);
        let r = build_rule(&s, m, &hull).unwrap();
        let adm = admissibility(m, &r, &hull).unwrap();
        (ContourModel::new(m, &r).unwrap(), adm)
    }

    #[test]
    fn transform_of_zero_and_zero_kernel() {
        let m = scalar_model(0.01);
        let (cm, _) = setup(&m, -1, 0.6);
        let z = CMat::zeros(1, 1);
        for kappa in [Kappa::Right, Kappa::Left] {
            // b - mu b / mu cancels only to rounding
            assert!(op_norm(&transform(&cm, &z, kappa).unwrap()) < 1e-16);
        }
        let zk = TransferModel::new(m.a_tilde.clone(), zero_kernel(1, 0.5, 6.0).unwrap(), 1.5, 2.5, 0.25).unwrap();
        let (cz, _) = setup(&zk, -1, 0.6);
        let zz = CMat::from_element(1, 1, c64(2.0, -0.1));
        assert_eq!(transform(&cz, &zz, Kappa::Left).unwrap(), CMat::zeros(1, 1));
    }

    #[test]
    fn scalar_transform_is_v_gamma() {
        let m = scalar_model(0.01);
        let (cm, _) = setup(&m, -1, 0.6);
        let z0 = c64(2.1, -0.05);
        let z = CMat::from_element(1, 1, z0);
        let v = cm.v_gamma(z0).unwrap()[(0, 0)];
        let r = transform(&cm, &z, Kappa::Right).unwrap()[(0, 0)];
        let l = transform(&cm, &z, Kappa::Left).unwrap()[(0, 0)];
        assert!((r - v).norm() < 1e-14 && (l - v).norm() < 1e-14);
    }

    #[test]
    fn matrix_transform_matches_direct_sum() {
        let m = matrix_model();
        let (cm, _) = setup(&m, -1, 0.6);
        let z = &m.a_tilde + CMat::from_fn(3, 3, |i, j| c64(0.01 * i as f64, -0.02 * j as f64));
        for kappa in [Kappa::Right, Kappa::Left] {
            let got = transform(&cm, &z, kappa).unwrap();
            let mut want = CMat::zeros(3, 3);
            for ((mu, w), kv) in cm.rule.nodes.iter().zip(&cm.rule.weights).zip(cm.values()) {
                let r = &z * (&z - CMat::identity(3, 3) * *mu).try_inverse().unwrap();
                let k = kv.dense();
                want += match kappa {
                    Kappa::Right => k * r * *w,
                    Kappa::Left => r * k * *w,
                };
            }
            assert!(op_norm(&(got - want)) < 1e-13);
        }
    }

    #[test]
    fn contour_point_in_spectrum_is_rejected() {
        let m = scalar_model(0.01);
        let (cm, _) = setup(&m, -1, 0.6);
        let z = CMat::from_element(1, 1, cm.rule.nodes[40]);
        assert!(matches!(transform(&cm, &z, Kappa::Right), Err(Error::Separation { .. })));
    }

    #[test]
    fn zero_kernel_solves_in_one_step() {
        let m = TransferModel::new(
            CMat::from_element(1, 1, c64(2.0, 0.0)),
            zero_kernel(1, 0.5, 6.0).unwrap(),
            1.5,
            2.5,
            0.25,
        )
        .unwrap();
        let (cm, adm) = setup(&m, -1, 0.6);
        let s = solve_transformation(&cm, &adm, Kappa::Right, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.x, CMat::zeros(1, 1));
        assert_eq!(pushthrough_defect(&cm, &s).unwrap().max_defect, 0.0);
    }

    #[test]
    fn scalar_solution_is_root_of_m_gamma() {
        let m = scalar_model(0.01);
        for sheet in [-1, 1] {
            let (cm, adm) = setup(&m, sheet, 0.6);
            assert!(adm.admissible);
            let s = solve_transformation(&cm, &adm, Kappa::Right, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert!(s.defect <= 1e-10 && s.x_norm <= adm.r_min + 1e-8);
            let z = s.z[(0, 0)];
            assert!(cm.eval_m_gamma(z).unwrap()[(0, 0)].norm() <= 1e-9);
            let root = scalar_root(&cm, c64(2.0, 0.0), 1e-14).unwrap();
            assert!((root - z).norm() < 1e-10, "{root} vs {z}");
            // a resonance sits on the sheet side of the axis
            assert!(z.im * sheet as f64 > 0.0);
            assert!(pushthrough_defect(&cm, &s).unwrap().max_defect <= 1e-9);
        }
    }

    #[test]
    fn strong_coupling_is_refused() {
        let m = scalar_model(10.0);
        let (cm, adm) = setup(&m, -1, 0.6);
        assert!(!adm.admissible);
        assert!(matches!(
            solve_transformation(&cm, &adm, Kappa::Right, DEFAULT_TOL, DEFAULT_MAX_ITER),
            Err(Error::NotAdmissible { .. })
        ));
    }

    #[test]
    fn matrix_solutions_and_cross_equations() {
        let m = matrix_model();
        let (cm, adm) = setup(&m, -1, 0.6);
        assert!(adm.admissible, "{adm:?}");
        let right = solve_transformation(&cm, &adm, Kappa::Right, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let left = solve_transformation(&cm, &adm, Kappa::Left, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        for s in [&right, &left] {
            assert!(s.defect <= DEFAULT_TOL);
            assert!(s.x_norm <= adm.r_min + 10.0 * DEFAULT_TOL);
            assert!(s.contraction_ratio.unwrap() < 1.0);
            assert!(pushthrough_defect(&cm, s).unwrap().max_defect <= 1e-9);
        }
        // each solution satisfies its own equation
        let x_left = transform(&cm, &left.z, Kappa::Left).unwrap();
        assert!(op_norm(&(&x_left - &left.x)) <= DEFAULT_TOL);
        // a second admissible contour gives the same solution
        let (cm2, adm2) = setup(&m, -1, 0.35);
        let right2 = solve_transformation(&cm2, &adm2, Kappa::Right, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(op_norm(&(&right.z - &right2.z)) <= 1e-8 * (1.0 + m.norm_a()));
    }
}
