use std::f64::consts::PI;

use serde::Serialize;

use crate::contour::{ContinuationRegion, ContourRule, TailRule};
use crate::error::{Error, Result};
use crate::linalg::{c64, inverse_checked, op_norm, CMat, CVec, C64};
use crate::model::{KernelValue, NodeSum, StackedSum, TransferModel};
use crate::quadrature::gauss_legendre_on;

pub const CUT_GUARD: f64 = 1e-8;

/// A transfer model bound to one contour rule, with the kernel evaluated at
/// every node once.
pub struct ContourModel {
    pub model: TransferModel,
    pub rule: ContourRule,
    pub region: ContinuationRegion,
    values: Vec<KernelValue>,
    stack: StackedSum,
    sum: Box<dyn NodeSum>,
}

impl std::fmt::Debug for ContourModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContourModel")
            .field("n", &self.model.dim())
            .field("nodes", &self.rule.len())
            .field("sheet", &self.rule.sheet())
            .finish()
    }
}

impl ContourModel {
    pub fn new(model: &TransferModel, rule: &ContourRule) -> Result<Self> {
        if (rule.spec.lambda_c - model.lambda_c()).abs() > 0.0 || (rule.spec.beta - model.beta()).abs() > 0.0 {
            return Err(Error::ContourRejected(
                "contour endpoints differ from the model's lambda_C and beta".into(),
            ));
        }
        let values = rule
            .nodes
            .iter()
            .map(|&mu| model.kernel.eval(mu))
            .collect::<Result<Vec<_>>>()?;
        let stack = StackedSum::new(model.dim(), values.clone());
        let sum = model.kernel.func.prepare_sum(&rule.nodes);
        Ok(Self {
            model: model.clone(),
            rule: rule.clone(),
            region: rule.region(),
            values,
            stack,
            sum,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn values(&self) -> &[KernelValue] {
        &self.values
    }

    pub fn stack(&self) -> &StackedSum {
        &self.stack
    }

    /// `sum_k c_k K'(mu_k)` over the contour nodes.
    pub fn node_sum(&self, coeffs: &[C64]) -> CMat {
        self.sum.sum(coeffs)
    }

    pub fn check_off_contour(&self, z: C64) -> Result<()> {
        let (d, nearest) = self.rule.distance(z);
        if d <= CUT_GUARD {
            return Err(Error::OnContour { z, nearest, distance: d });
        }
        Ok(())
    }

    fn resolvent_weights(&self, z: C64) -> Vec<C64> {
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(mu, w)| w * z / (z - mu))
            .collect()
    }

    /// V_Gamma(z) = sum_k w_k K'(mu_k) z / (z - mu_k).
    pub fn v_gamma(&self, z: C64) -> Result<CMat> {
        self.check_off_contour(z)?;
        Ok(self.node_sum(&self.resolvent_weights(z)))
    }

    pub fn eval_m_gamma(&self, z: C64) -> Result<CMat> {
        let n = self.dim();
        Ok(&self.model.a_tilde - CMat::identity(n, n) * z + self.v_gamma(z)?)
    }

    /// `M_Gamma(z) u` without assembling the matrix.
    pub fn apply_m_gamma(&self, z: C64, u: &CVec) -> Result<CVec> {
        self.check_off_contour(z)?;
        let c = self.resolvent_weights(z);
        Ok(&self.model.a_tilde * u - u * z + self.stack.apply(&c, u))
    }

    /// `M_Gamma(z)^H u`.
    pub fn apply_m_gamma_adjoint(&self, z: C64, u: &CVec) -> Result<CVec> {
        self.check_off_contour(z)?;
        let c = self.resolvent_weights(z);
        Ok(self.model.a_tilde.adjoint() * u - u * z.conj() + self.stack.apply_adjoint(&c, u))
    }

    /// M_Gamma(z)^{-1}; a singular matrix signals z in the spectrum of M_Gamma.
    pub fn invert_m_gamma(&self, z: C64) -> Result<CMat> {
        let m = self.eval_m_gamma(z)?;
        inverse_checked(&m).map_err(|_| Error::Singular {
            context: format!("M_Gamma({z}) is singular to working precision"),
        })
    }
}

/// Distance from z to the cut [lambda_C, inf).
pub fn cut_distance(lambda_c: f64, z: C64) -> f64 {
    if z.re >= lambda_c {
        z.im.abs()
    } else {
        (z - c64(lambda_c, 0.0)).norm()
    }
}

/// Real-axis rule for [lambda_C, beta] in t = sqrt(mu - lambda_C), split
/// adaptively near the poles t = +-sqrt(z - lambda_C).
fn interval_rule(lambda_c: f64, beta: f64, z: C64) -> (Vec<f64>, Vec<f64>) {
    let tmax = (beta - lambda_c).sqrt();
    let pole = (z - lambda_c).sqrt();
    let poles = [pole, -pole];
    let dist = |a: f64, b: f64| {
        poles
            .iter()
            .map(|p| {
                let x = p.re.clamp(a, b);
                (p - c64(x, 0.0)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut stack = vec![(0.0, tmax)];
    let mut panels = Vec::new();
    while let Some((a, b)) = stack.pop() {
        let len = b - a;
        if (len > 0.25 || len > dist(a, b)) && len > 1e-13 {
            let m = 0.5 * (a + b);
            stack.push((m, b));
            stack.push((a, m));
        } else {
            panels.push((a, b));
        }
    }
    panels.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut mus = Vec::with_capacity(panels.len() * 16);
    let mut ws = Vec::with_capacity(panels.len() * 16);
    for (a, b) in panels {
        let (t, w) = gauss_legendre_on(16, a, b);
        for (t, w) in t.iter().zip(&w) {
            mus.push(lambda_c + t * t);
            ws.push(2.0 * t * w);
        }
    }
    (mus, ws)
}

/// Physical-sheet M(z) = A~ - z + int_{lambda_C}^inf K'(mu) z / (z - mu) dmu.
/// The tail [beta, inf) uses `tail`, normally the contour's own tail rule.
pub fn eval_m(model: &TransferModel, tail: &TailRule, z: C64) -> Result<CMat> {
    let lambda_c = model.lambda_c();
    let d = cut_distance(lambda_c, z);
    if d <= CUT_GUARD {
        return Err(Error::NearCut { z, guard: CUT_GUARD });
    }
    let n = model.dim();
    let base = &model.a_tilde - CMat::identity(n, n) * z;
    if model.kernel.func.is_zero() || z == c64(0.0, 0.0) {
        return Ok(base);
    }
    let (mut mus, mut ws) = interval_rule(lambda_c, model.beta(), z);
    mus.extend(tail.nodes.iter().copied());
    ws.extend(tail.weights.iter().copied());
    let nodes: Vec<C64> = mus.iter().map(|&m| c64(m, 0.0)).collect();
    let coeffs: Vec<C64> = nodes.iter().zip(&ws).map(|(mu, w)| z / (z - mu) * *w).collect();
    for mu in &nodes {
        if !model.kernel.admits(*mu) {
            return Err(Error::DomainViolation { mu: *mu });
        }
    }
    let v = model.kernel.func.prepare_sum(&nodes).sum(&coeffs);
    Ok(base + v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidueCheck {
    pub z: C64,
    pub defect: f64,
    pub m_norm: f64,
    pub relative: f64,
}

/// `|M_Gamma(z) - M(z) - 2 pi i l z K'(z)|` for z inside D(Gamma_l).
pub fn residue_defect(cm: &ContourModel, z: C64) -> Result<ResidueCheck> {
    if !cm.region.contains(z) || !cm.model.kernel.domain.contains(z) {
        return Err(Error::OutsideRegion { z });
    }
    let mg = cm.eval_m_gamma(z)?;
    let m = eval_m(&cm.model, &cm.rule.tail, z)?;
    let k = cm.model.kernel.eval_dense(z)?;
    let l = cm.rule.sheet() as f64;
    let jump = k * (c64(0.0, 2.0 * PI * l) * z);
    let defect = op_norm(&(mg - &m - jump));
    let m_norm = op_norm(&m);
    Ok(ResidueCheck {
        z,
        defect,
        m_norm,
        relative: defect / (1.0 + m_norm),
    })
}
