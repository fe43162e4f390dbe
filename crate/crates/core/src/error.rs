use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("eigensolver did not converge for a {n}x{n} matrix")]
    EigenNoConvergence { n: usize },

    #[error("matrix is singular to working precision ({context})")]
    Singular { context: String },

    #[error("mu = {mu} lies outside the holomorphy domain of the kernel")]
    DomainViolation { mu: Complex64 },

    #[error("model rejected: {0}")]
    ModelRejected(String),

    #[error("contour rejected: {0}")]
    ContourRejected(String),

    #[error("contour touches the numerical range at mu = {mu}")]
    TouchesNumericalRange { mu: Complex64 },

    #[error("no admissible contour in family: {}", reasons.join("; "))]
    NoAdmissibleContour { reasons: Vec<String> },

    #[error("z = {z} is within {guard:e} of the cut [lambda_C, inf)")]
    NearCut { z: Complex64, guard: f64 },

    #[error("z = {z} lies on the contour (nearest node {nearest}, distance {distance:e})")]
    OnContour {
        z: Complex64,
        nearest: Complex64,
        distance: f64,
    },

    #[error("z = {z} is not inside the continuation region")]
    OutsideRegion { z: Complex64 },

    #[error("eigenvalue {eigenvalue} is not separated from the contour (nearest point {nearest}, distance {distance:e})")]
    Separation {
        eigenvalue: Complex64,
        nearest: Complex64,
        distance: f64,
    },

    #[error("contour not admissible: Var = {var}, Var*|A| = {lhs}, d(1-Var)^2/4 = {rhs}")]
    NotAdmissible { var: f64, lhs: f64, rhs: f64 },

    #[error("iterate left the uniqueness ball at step {iteration}: |X| = {norm} >= r_max = {r_max}")]
    LeftUniquenessBall {
        iteration: usize,
        norm: f64,
        r_max: f64,
    },

    #[error("fixed-point iteration did not converge in {iterations} steps (last step {last:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("eigenvalue {lambda} is not isolated: gap {gap:e} vs loop radius {radius:e}")]
    ClusterNotSeparable {
        lambda: Complex64,
        gap: f64,
        radius: f64,
    },

    #[error("integration loop invalid: {0}")]
    LoopInvalid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in run reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::EigenNoConvergence { .. } => "eigen_no_convergence",
            Error::Singular { .. } => "singular",
            Error::DomainViolation { .. } => "domain_violation",
            Error::ModelRejected(_) => "model_rejected",
            Error::ContourRejected(_) => "contour_rejected",
            Error::TouchesNumericalRange { .. } => "touches_numerical_range",
            Error::NoAdmissibleContour { .. } => "no_admissible_contour",
            Error::NearCut { .. } => "near_cut",
            Error::OnContour { .. } => "on_contour",
            Error::OutsideRegion { .. } => "outside_region",
            Error::Separation { .. } => "separation",
            Error::NotAdmissible { .. } => "not_admissible",
            Error::LeftUniquenessBall { .. } => "left_uniqueness_ball",
            Error::NoConvergence { .. } => "no_convergence",
            Error::ClusterNotSeparable { .. } => "cluster_not_separable",
            Error::LoopInvalid(_) => "loop_invalid",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
