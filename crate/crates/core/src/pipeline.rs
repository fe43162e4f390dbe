use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::channel::{bounds_check, BoundsCheck, Scenario};
use crate::config::{BoxSpec, ContourConfig, LoopConfig, ModelConfig, OutputConfig, RunConfig, SolverConfig};
use crate::contour::{admissibility, build_rule, AdmissibilityReport, ContourRule};
use crate::error::{Error, Result};
use crate::factor::{
    auto_loop, compute_omega, determinant_defect, factorization_defect, loop_integrals, projections, resonance_set,
    similarity_defect, validate_loop, w_invertibility, GammaLoop, ProjectionReport, ResonanceSet, WCheck, WFactor,
};
use crate::linalg::{c64, inverse_checked, op_norm, CMat, C64};
use crate::model::{validate_model, TransferModel, ValidationReport};
use crate::numrange::{NumericalRangeHull, DEFAULT_ANGLES};
use crate::oracle::most_isolated;
use crate::solver::{pushthrough_defect, solve_transformation, Kappa, SolutionReport};
use crate::transfer::{residue_defect, ContourModel, ResidueCheck};

pub const FACTOR_TOL: f64 = 1e-8;
pub const LOOP_TOL: f64 = 1e-7;
pub const SIMILARITY_TOL: f64 = 1e-8;
pub const DETERMINANT_TOL: f64 = 1e-8;
pub const PUSHTHROUGH_TOL: f64 = 1e-7;
pub const RESIDUE_TOL: f64 = 1e-8;
pub const PROJECTION_TOL: f64 = 1e-7;
pub const IDEMPOTENCY_TOL: f64 = 1e-9;
pub const INDEPENDENCE_TOL: f64 = 1e-8;
const VALIDATION_DOUBLINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Admissible,
    Solve,
    Factorize,
    Resonances,
}

/// A measured quantity against its tolerance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Check {
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(value: f64, tol: f64) -> Self {
        Self {
            value,
            tol,
            pass: value <= tol,
        }
    }

    pub fn below(value: f64, tol: f64) -> Self {
        Self {
            value,
            tol,
            pass: value < tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Reason {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for Reason {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Status {
    pub exit_code: i32,
    pub outcome: String,
    pub stage: Stage,
    pub reached: Option<Stage>,
    pub reason: Option<Reason>,
    pub failed_certificates: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct PushThroughCheck {
    pub kappa: Kappa,
    pub max_defect: f64,
    pub scale: f64,
    pub eigvec_condition: f64,
    pub check: Check,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationCertificate {
    pub points: Vec<ResidueCheck>,
    pub check: Check,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorSample {
    pub z: C64,
    pub right: f64,
    pub left: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopCertificate {
    #[serde(rename = "loop")]
    pub loop_: GammaLoop,
    pub inverse: Check,
    pub first_moment_left: Check,
    pub first_moment_right: Check,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionCertificate {
    pub report: Option<ProjectionReport>,
    pub refused: Option<Reason>,
    pub right: Option<Check>,
    pub left: Option<Check>,
    pub idempotency: Option<Check>,
    pub ranks_agree: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationCertificate {
    pub samples: Vec<FactorSample>,
    pub right: Check,
    pub left: Check,
    pub w_checks: Vec<WCheck>,
    pub w_certified: usize,
    pub w_pass: bool,
    pub omega_norm: Check,
    pub loop_identities: LoopCertificate,
    pub similarity: Check,
    pub determinant: Option<Check>,
    pub projection: ProjectionCertificate,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceCertificate {
    pub alternate: Option<AdmissibilityReport>,
    pub refused: Option<Reason>,
    pub z_right: Option<Check>,
    pub z_left: Option<Check>,
    pub omega: Option<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: Tool,
    pub config: RunConfig,
    pub status: Status,
    pub validation: Option<ValidationReport>,
    pub channel_bounds: Option<BoundsCheck>,
    pub admissibility: Option<AdmissibilityReport>,
    pub solutions: Vec<SolutionReport>,
    pub pushthrough: Vec<PushThroughCheck>,
    pub continuation: Option<ContinuationCertificate>,
    pub factorization: Option<FactorizationCertificate>,
    pub contour_independence: Option<IndependenceCertificate>,
    pub resonances: Option<ResonanceSet>,
}

/// Everything a run produces; the large objects back the CSV files.
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: BTreeMap<String, f64>,
    pub hull: Option<NumericalRangeHull>,
    pub rule: Option<ContourRule>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Json(_) => 4,
        Error::ModelRejected(_)
        | Error::ContourRejected(_)
        | Error::TouchesNumericalRange { .. }
        | Error::NoAdmissibleContour { .. }
        | Error::NotAdmissible { .. } => 2,
        Error::LeftUniquenessBall { .. } | Error::NoConvergence { .. } | Error::EigenNoConvergence { .. } => 3,
        _ => 5,
    }
}

struct Timer {
    map: BTreeMap<String, f64>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            map: BTreeMap::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        *self.map.entry(name.into()).or_insert(0.0) += (now - self.last).as_secs_f64();
        self.last = now;
    }
}

fn tool() -> Tool {
    Tool {
        name: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
    }
}

/// Runs the pipeline up to `stage`. Gate refusals and solver failures end
/// the run early with a partial report; certificate failures are collected.
pub fn run(config: &RunConfig, stage: Stage) -> RunOutcome {
    let mut out = RunOutcome {
        report: RunReport {
            tool: tool(),
            config: config.clone(),
            status: Status {
                exit_code: 0,
                outcome: "pass".into(),
                stage,
                reached: None,
                reason: None,
                failed_certificates: vec![],
            },
            validation: None,
            channel_bounds: None,
            admissibility: None,
            solutions: vec![],
            pushthrough: vec![],
            continuation: None,
            factorization: None,
            contour_independence: None,
            resonances: None,
        },
        timings: BTreeMap::new(),
        hull: None,
        rule: None,
    };
    let mut timer = Timer::new();
    if let Err(e) = run_inner(config, stage, &mut out, &mut timer) {
        let code = exit_code_for(&e);
        out.report.status.exit_code = code;
        out.report.status.outcome = outcome_name(code).into();
        out.report.status.reason = Some(Reason::from(&e));
    } else if !out.report.status.failed_certificates.is_empty() {
        out.report.status.exit_code = 5;
        out.report.status.outcome = outcome_name(5).into();
    }
    timer.lap("finish");
    out.timings = timer.map;
    out
}

fn outcome_name(code: i32) -> &'static str {
    match code {
        0 => "pass",
        2 => "not_admissible",
        3 => "solver_failure",
        4 => "invalid_config",
        _ => "certificate_failure",
    }
}

fn record(out: &mut RunOutcome, name: &str, pass: bool) {
    if !pass {
        out.report.status.failed_certificates.push(name.into());
    }
}

fn run_inner(config: &RunConfig, stage: Stage, out: &mut RunOutcome, timer: &mut Timer) -> Result<()> {
    config.check()?;
    let model = config.model.build()?;
    let validation = validate_model(&model, VALIDATION_DOUBLINGS)?;
    let accepted = validation.accepted;
    let reasons = validation.reasons.clone();
    out.report.validation = Some(validation);
    if let ModelConfig::Rank2Channel { channel, .. } = &config.model {
        let b = bounds_check(channel, &model)?;
        let pass = b.hs_pass && b.kernel_pass;
        out.report.channel_bounds = Some(b);
        record(out, "channel_bounds", pass);
    }
    timer.lap("validate");
    if !accepted {
        return Err(Error::ModelRejected(reasons.join("; ")));
    }
    out.report.status.reached = Some(Stage::Validate);
    if stage == Stage::Validate {
        return Ok(());
    }

    let hull = NumericalRangeHull::new(&model.a_tilde, DEFAULT_ANGLES)?;
    let spec = config.contour.spec(model.lambda_c(), model.beta());
    let rule = build_rule(&spec, &model, &hull)?;
    let adm = admissibility(&model, &rule, &hull)?;
    out.hull = Some(hull.clone());
    out.rule = Some(rule.clone());
    out.report.admissibility = Some(adm.clone());
    timer.lap("admissible");
    adm.require()?;
    out.report.status.reached = Some(Stage::Admissible);
    if stage == Stage::Admissible {
        return Ok(());
    }

    let cm = ContourModel::new(&model, &rule)?;
    let mut kappas = config.solver.kappa.clone();
    if stage >= Stage::Factorize {
        for k in [Kappa::Right, Kappa::Left] {
            if !kappas.contains(&k) {
                kappas.push(k);
            }
        }
    }
    let mut sols = Vec::new();
    for &k in &kappas {
        let s = solve_transformation(&cm, &adm, k, config.solver.tol, config.solver.max_iter)?;
        sols.push(s.clone());
        out.report.solutions.push(s);
    }
    timer.lap("solve");
    for s in &sols {
        let p = pushthrough_defect(&cm, s)?;
        let check = Check::at_most(p.max_defect, PUSHTHROUGH_TOL * p.scale);
        record(out, &format!("pushthrough_{}", s.kappa.as_str()), check.pass);
        out.report.pushthrough.push(PushThroughCheck {
            kappa: s.kappa,
            max_defect: p.max_defect,
            scale: p.scale,
            eigvec_condition: p.eigvec_condition,
            check,
        });
    }
    timer.lap("pushthrough");
    out.report.status.reached = Some(Stage::Solve);
    if stage == Stage::Solve {
        return Ok(());
    }

    let right = sols.iter().find(|s| s.kappa == Kappa::Right).expect("right solution present");
    let left = sols.iter().find(|s| s.kappa == Kappa::Left).expect("left solution present");

    let cont = continuation_certificate(&cm)?;
    record(out, "continuation", cont.check.pass);
    out.report.continuation = Some(cont);
    timer.lap("continuation");

    let wr = WFactor::new(&cm, &right.z, Kappa::Right)?;
    let wl = WFactor::new(&cm, &left.z, Kappa::Left)?;
    let omega = compute_omega(&cm, &wl, &wr);
    let fc = factorization_certificate(&cm, &hull, &adm, right, left, &wr, &wl, &omega, &config.loop_)?;
    record(out, "factorization_right", fc.right.pass);
    record(out, "factorization_left", fc.left.pass);
    record(out, "w_invertibility", fc.w_pass);
    record(out, "omega_norm", fc.omega_norm.pass);
    record(out, "loop_inverse", fc.loop_identities.inverse.pass);
    record(out, "loop_first_moment_left", fc.loop_identities.first_moment_left.pass);
    record(out, "loop_first_moment_right", fc.loop_identities.first_moment_right.pass);
    record(out, "similarity", fc.similarity.pass);
    if let Some(d) = fc.determinant {
        record(out, "determinant", d.pass);
    }
    let pc = &fc.projection;
    for (name, c) in [("projection_right", pc.right), ("projection_left", pc.left), ("idempotency", pc.idempotency)] {
        if let Some(c) = c {
            record(out, name, c.pass);
        }
    }
    out.report.factorization = Some(fc);
    timer.lap("factorize");

    let mut r0 = adm.r_min;
    if let Some(alt) = config.contour.alternate_spec(model.lambda_c(), model.beta()) {
        let ic = independence_certificate(&model, &hull, &alt, right, left, &omega);
        for (name, c) in [("independence_z_right", ic.z_right), ("independence_z_left", ic.z_left), ("independence_omega", ic.omega)] {
            if let Some(c) = c {
                record(out, name, c.pass);
            }
        }
        if let Some(a) = &ic.alternate {
            if a.admissible {
                r0 = r0.min(a.r_min);
            }
        }
        out.report.contour_independence = Some(ic);
        timer.lap("independence");
    }
    out.report.status.reached = Some(Stage::Factorize);
    if stage == Stage::Factorize {
        return Ok(());
    }

    let res = resonance_set(&cm, right, left, &hull, r0);
    record(out, "spectra_coincide", res.hausdorff_pass);
    record(out, "spectrum_inclusion", res.inclusion_pass);
    out.report.resonances = Some(res);
    timer.lap("resonances");
    out.report.status.reached = Some(Stage::Resonances);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PointEvaluation {
    pub z: C64,
    pub m_gamma: Option<Vec<Vec<C64>>>,
    pub m_gamma_norm: f64,
    pub inverse_norm: Option<f64>,
    pub residue: Option<ResidueCheck>,
    pub note: Option<String>,
}

/// Evaluates M_Gamma at user points on the configured contour. Entries are
/// listed only for small models.
pub fn evaluate_points(config: &RunConfig, points: &[C64]) -> Result<Vec<PointEvaluation>> {
    config.check()?;
    let model = config.model.build()?;
    let hull = NumericalRangeHull::new(&model.a_tilde, DEFAULT_ANGLES)?;
    let rule = build_rule(&config.contour.spec(model.lambda_c(), model.beta()), &model, &hull)?;
    let cm = ContourModel::new(&model, &rule)?;
    let mut out = Vec::with_capacity(points.len());
    for &z in points {
        let mg = cm.eval_m_gamma(z)?;
        let entries = (mg.nrows() <= 8).then(|| mg.row_iter().map(|r| r.iter().copied().collect()).collect());
        let (inverse_norm, note) = match inverse_checked(&mg) {
            Ok(inv) => (Some(op_norm(&inv)), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let residue = residue_defect(&cm, z).ok();
        out.push(PointEvaluation {
            z,
            m_gamma: entries,
            m_gamma_norm: op_norm(&mg),
            inverse_norm,
            residue,
            note,
        });
    }
    Ok(out)
}

/// Ten points halfway between the arc and the real axis.
pub fn interior_points(cm: &ContourModel, count: usize) -> Vec<C64> {
    let poly = cm.rule.arc_polyline();
    let mut pts = Vec::new();
    let m = poly.len();
    for k in 1..=count {
        let p = poly[k * (m - 1) / (count + 1)];
        let z = c64(p.re, 0.5 * p.im);
        if cm.region.contains(z) && cm.model.kernel.domain.contains(z) {
            pts.push(z);
        }
    }
    pts
}

pub fn continuation_certificate(cm: &ContourModel) -> Result<ContinuationCertificate> {
    let points = interior_points(cm, 10)
        .into_iter()
        .map(|z| residue_defect(cm, z))
        .collect::<Result<Vec<_>>>()?;
    let worst = points.iter().map(|p| p.relative).fold(0.0, f64::max);
    let enough = points.len() >= 10;
    let mut check = Check::at_most(worst, RESIDUE_TOL);
    check.pass &= enough;
    Ok(ContinuationCertificate { points, check })
}

/// Eight points in O(A~, Gamma) near the numerical range, z = -10 and a
/// spread of points elsewhere in the plane.
pub fn factor_sample_points(cm: &ContourModel, hull: &NumericalRangeHull, adm: &AdmissibilityReport) -> Vec<C64> {
    let rho = adm.o_radius();
    let b = &hull.boundary_points;
    let mut pts = Vec::new();
    for k in 0..8 {
        let phi = std::f64::consts::PI * (2 * k + 1) as f64 / 8.0;
        pts.push(b[k * b.len() / 8] + c64(phi.cos(), phi.sin()) * (0.5 * rho));
    }
    let m = &cm.model;
    let mid = 0.5 * (m.alpha1 + m.alpha2);
    let half = 0.5 * (m.alpha2 - m.alpha1);
    let lam = m.lambda_c();
    let beta = m.beta();
    pts.extend([
        c64(-10.0, 0.0),
        c64(0.0, 1.0),
        c64(mid, 3.0),
        c64(mid, -3.0),
        c64(m.alpha1 - 1.0, 0.15),
        c64(m.alpha2 + 1.0, 0.3),
        c64(beta + 5.0, 0.7),
        c64(2.0 * beta, 1.0),
        c64(mid, 0.5),
        c64(0.5 * lam, -0.2),
        c64(mid + 1.5 * half, -0.05),
        c64(1.0, -1.0),
    ]);
    pts.retain(|z| cm.check_off_contour(*z).is_ok());
    pts
}

/// Ten points at a quarter of the O-radius from the numerical range.
pub fn w_check_points(hull: &NumericalRangeHull, adm: &AdmissibilityReport) -> Vec<C64> {
    let rho = adm.o_radius();
    let b = &hull.boundary_points;
    (0..10)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / 10.0;
            b[k * b.len() / 10] + c64(phi.cos(), phi.sin()) * (0.25 * rho)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn factorization_certificate(
    cm: &ContourModel,
    hull: &NumericalRangeHull,
    adm: &AdmissibilityReport,
    right: &SolutionReport,
    left: &SolutionReport,
    wr: &WFactor,
    wl: &WFactor,
    omega: &CMat,
    loop_cfg: &LoopConfig,
) -> Result<FactorizationCertificate> {
    let n = cm.dim();
    let mut samples = Vec::new();
    for z in factor_sample_points(cm, hull, adm) {
        let (r, l) = factorization_defect(cm, wr, wl, z)?;
        samples.push(FactorSample { z, right: r, left: l });
    }
    let max_r = samples.iter().map(|s| s.right).fold(0.0, f64::max);
    let max_l = samples.iter().map(|s| s.left).fold(0.0, f64::max);
    let mut right_check = Check::at_most(max_r, FACTOR_TOL);
    let mut left_check = Check::at_most(max_l, FACTOR_TOL);
    if samples.len() < 20 {
        right_check.pass = false;
        left_check.pass = false;
    }

    let mut w_checks = Vec::new();
    for z in w_check_points(hull, adm) {
        w_checks.push(w_invertibility(cm, wr, hull, adm, z)?);
        w_checks.push(w_invertibility(cm, wl, hull, adm, z)?);
    }
    let w_certified = w_checks.iter().filter(|c| c.certified).count();
    let w_pass = w_certified == w_checks.len() && w_checks.iter().all(|c| c.pass == Some(true));

    let id = CMat::identity(n, n);
    let ipo_inv = inverse_checked(&(&id + omega))?;
    let lp = match loop_cfg {
        LoopConfig::Auto { order, .. } => auto_loop(cm, hull, adm, &right.sigma_z, *order)?,
        LoopConfig::Circle { center, radius, order, .. } => {
            let lp = GammaLoop::Circle {
                center: *center,
                radius: *radius,
                order: *order,
            };
            validate_loop(cm, &lp, hull, adm, &right.sigma_z)?;
            lp
        }
    };
    let (i0, i1) = loop_integrals(cm, &lp)?;
    let loop_identities = LoopCertificate {
        inverse: Check::at_most(op_norm(&(&i0 - &ipo_inv)), LOOP_TOL),
        first_moment_left: Check::at_most(op_norm(&(&i1 - &ipo_inv * &left.z)), LOOP_TOL),
        first_moment_right: Check::at_most(op_norm(&(&i1 - &right.z * &ipo_inv)), LOOP_TOL),
        loop_: lp,
    };

    let determinant = if n <= 64 {
        let mut worst: f64 = 0.0;
        for s in samples.iter().take(12) {
            worst = worst.max(determinant_defect(cm, wr, &right.z, s.z)?);
        }
        Some(Check::at_most(worst, DETERMINANT_TOL))
    } else {
        None
    };

    let projection = if loop_cfg.projection() {
        let idx = most_isolated(&right.sigma_z, &[]);
        match projections(cm, right, left, omega, hull, adm, right.sigma_z[idx], loop_cfg.order()) {
            Ok(p) => ProjectionCertificate {
                right: Some(Check::at_most(p.defect_right, PROJECTION_TOL)),
                left: Some(Check::at_most(p.defect_left, PROJECTION_TOL)),
                idempotency: Some(Check::at_most(p.idempotency_right.max(p.idempotency_left), IDEMPOTENCY_TOL)),
                ranks_agree: Some(p.rank_right == p.rank_m),
                report: Some(p),
                refused: None,
            },
            Err(e @ (Error::ClusterNotSeparable { .. } | Error::LoopInvalid(_))) => ProjectionCertificate {
                report: None,
                refused: Some(Reason::from(&e)),
                right: None,
                left: None,
                idempotency: None,
                ranks_agree: None,
            },
            Err(e) => return Err(e),
        }
    } else {
        ProjectionCertificate {
            report: None,
            refused: None,
            right: None,
            left: None,
            idempotency: None,
            ranks_agree: None,
        }
    };

    Ok(FactorizationCertificate {
        samples,
        right: right_check,
        left: left_check,
        w_checks,
        w_certified,
        w_pass,
        omega_norm: Check::below(op_norm(omega), 1.0),
        loop_identities,
        similarity: Check::at_most(similarity_defect(omega, &left.z, &right.z), SIMILARITY_TOL),
        determinant,
        projection,
    })
}

/// Solves again on a second contour of the same sheet and compares Z and Omega.
pub fn independence_certificate(
    model: &TransferModel,
    hull: &NumericalRangeHull,
    alt: &crate::contour::ContourSpec,
    right: &SolutionReport,
    left: &SolutionReport,
    omega: &CMat,
) -> IndependenceCertificate {
    let attempt = || -> Result<(AdmissibilityReport, Check, Check, Check)> {
        let rule = build_rule(alt, model, hull)?;
        let adm = admissibility(model, &rule, hull)?;
        adm.require()?;
        let cm = ContourModel::new(model, &rule)?;
        let r2 = solve_transformation(&cm, &adm, Kappa::Right, right.tol, 200)?;
        let l2 = solve_transformation(&cm, &adm, Kappa::Left, left.tol, 200)?;
        let wr = WFactor::new(&cm, &r2.z, Kappa::Right)?;
        let wl = WFactor::new(&cm, &l2.z, Kappa::Left)?;
        let omega2 = compute_omega(&cm, &wl, &wr);
        let scale = 1.0 + model.norm_a();
        Ok((
            adm,
            Check::at_most(op_norm(&(&right.z - &r2.z)), INDEPENDENCE_TOL * scale),
            Check::at_most(op_norm(&(&left.z - &l2.z)), INDEPENDENCE_TOL * scale),
            Check::at_most(op_norm(&(omega - omega2)), INDEPENDENCE_TOL),
        ))
    };
    match attempt() {
        Ok((adm, zr, zl, om)) => IndependenceCertificate {
            alternate: Some(adm),
            refused: None,
            z_right: Some(zr),
            z_left: Some(zl),
            omega: Some(om),
        },
        Err(e) => IndependenceCertificate {
            alternate: None,
            refused: Some(Reason::from(&e)),
            z_right: None,
            z_left: None,
            omega: None,
        },
    }
}

/// Configuration for a channel scenario, with a shallower second contour.
pub fn channel_config(sc: &Scenario) -> RunConfig {
    RunConfig {
        model: ModelConfig::Rank2Channel {
            channel: sc.channel.clone(),
            beta: sc.contour.beta,
            bx: BoxSpec {
                alpha1: sc.alpha1,
                alpha2: sc.alpha2,
                eta: sc.eta,
            },
        },
        contour: ContourConfig {
            sheet: sc.contour.sheet,
            depth: sc.contour.arc_control.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
            segments: sc.contour.arc_control.len() - 1,
            arc_control: None,
            arc_order: sc.contour.arc_order,
            tail_order: sc.contour.tail_order,
            alternate_depth: Some(0.3),
        },
        solver: SolverConfig::default(),
        loop_: LoopConfig::default(),
        output: OutputConfig::default(),
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            if a.iter().all(|x| x.is_number()) && a.len() <= 4 {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                if i + 1 < a.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(x, indent + 1, out);
                if i + 1 < m.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and every float printed with 17
/// significant digits.
pub fn to_json<T: Serialize>(x: &T) -> Result<String> {
    let v = serde_json::to_value(x)?;
    let mut s = String::new();
    write_value(&v, 0, &mut s);
    s.push('\n');
    Ok(s)
}

fn csv<I: IntoIterator<Item = Vec<String>>>(header: &str, rows: I) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    s
}

/// Writes report.json, timings.json and the CSV point clouds.
pub fn emit(outcome: &RunOutcome, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let formats = &outcome.report.config.output.formats;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        std::fs::write(dir.join(name), body)?;
        written.push(name.to_string());
        Ok(())
    };
    if formats.iter().any(|f| f == "json") {
        put("report.json", to_json(&outcome.report)?)?;
        put("timings.json", to_json(&outcome.timings)?)?;
    }
    if formats.iter().any(|f| f == "csv") {
        let res = outcome.report.resonances.as_ref();
        put(
            "resonances.csv",
            csv(
                "re,im,sheet,tag",
                res.map(|r| r.entries.as_slice())
                    .unwrap_or(&[])
                    .iter()
                    .map(|e| vec![fmt_f64(e.z.re), fmt_f64(e.z.im), e.sheet.to_string(), e.tag.as_str().into()]),
            ),
        )?;
        let contour_rows: Vec<Vec<String>> = outcome
            .rule
            .as_ref()
            .map(|r| {
                r.nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(z, w)| vec![fmt_f64(z.re), fmt_f64(z.im), fmt_f64(w.norm())])
                    .collect()
            })
            .unwrap_or_default();
        put("contour.csv", csv("re,im,abs_weight", contour_rows))?;
        let hull_rows: Vec<Vec<String>> = outcome
            .hull
            .as_ref()
            .map(|h| h.boundary_points.iter().map(|z| vec![fmt_f64(z.re), fmt_f64(z.im)]).collect())
            .unwrap_or_default();
        put("numrange.csv", csv("re,im", hull_rows))?;
        let spec_rows: Vec<Vec<String>> = outcome
            .report
            .solutions
            .iter()
            .flat_map(|s| {
                s.sigma_z
                    .iter()
                    .map(move |z| vec![s.kappa.as_str().to_string(), fmt_f64(z.re), fmt_f64(z.im)])
            })
            .collect();
        put("spectrum_Z.csv", csv("kappa,re,im", spec_rows))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn zero_config() -> RunConfig {
        RunConfig::from_value(json!({
            "model": {
                "type": "zero",
                "a_tilde": {"diagonal": [[1.6, 0.0], [2.4, 0.0]]},
                "lambda_c": 0.5,
                "beta": 6.0,
                "box": {"alpha1": 1.5, "alpha2": 2.5, "eta": 0.25}
            },
            "contour": {"alternate_depth": 0.3}
        }))
        .unwrap()
    }

    #[test]
    fn zero_kernel_full_pass() {
        let out = run(&zero_config(), Stage::Resonances);
        assert_eq!(out.exit_code(), 0, "{:?}", out.report.status);
        let res = out.report.resonances.as_ref().unwrap();
        let got: Vec<f64> = res.entries.iter().map(|e| e.z.re).collect();
        assert_eq!(got, vec![1.6, 2.4]);
        assert!(res.entries.iter().all(|e| e.z.im == 0.0));
    }

    #[test]
    fn stages_stop_early() {
        let out = run(&zero_config(), Stage::Admissible);
        assert_eq!(out.report.status.reached, Some(Stage::Admissible));
        assert!(out.report.solutions.is_empty());
        assert!(out.report.factorization.is_none());
    }

    #[test]
    fn json_floats_have_17_digits() {
        let s = to_json(&json!({"b": 0.1, "a": [1, 2.5]})).unwrap();
        assert_eq!(s, "{\n  \"a\": [1, 2.5000000000000000e0],\n  \"b\": 1.0000000000000001e-1\n}\n");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&Error::Config("x".into())), 4);
        assert_eq!(
            exit_code_for(&Error::NotAdmissible {
                var: 1.0,
                lhs: 1.0,
                rhs: 0.0
            }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::NoConvergence {
                iterations: 1,
                last: 1.0,
                history: vec![]
            }),
            3
        );
        assert_eq!(exit_code_for(&Error::LoopInvalid("x".into())), 5);
    }
}
