use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{build_channel_model, ChannelSpec};
use crate::contour::ContourSpec;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::model::{
    zero_kernel, HolomorphyDomain, KernelDerivative, RationalSum, ScalarExp, ScalarPower, TransferModel,
};
use crate::solver::{Kappa, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Either a diagonal or a dense row-major complex matrix; entries are `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal { diagonal: Vec<C64> },
    Rows { rows: Vec<Vec<C64>> },
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<CMat> {
        match self {
            MatrixSpec::Diagonal { diagonal } => Ok(CMat::from_diagonal(&CVec::from_vec(diagonal.clone()))),
            MatrixSpec::Rows { rows } => {
                let n = rows.len();
                let m = rows.first().map(|r| r.len()).unwrap_or(0);
                if rows.iter().any(|r| r.len() != m) {
                    return Err(Error::Config("matrix rows have different lengths".into()));
                }
                Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub alpha1: f64,
    pub alpha2: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Zero {
        a_tilde: MatrixSpec,
        lambda_c: f64,
        beta: f64,
        #[serde(rename = "box")]
        bx: BoxSpec,
    },
    ScalarExp {
        a: f64,
        scale: f64,
        rate: f64,
        shift: f64,
        lambda_c: f64,
        beta: f64,
        domain_re_min: f64,
        #[serde(rename = "box")]
        bx: BoxSpec,
    },
    ScalarPower {
        a: f64,
        scale: f64,
        exponent: f64,
        decay: f64,
        inv_mu_power: f64,
        lambda_c: f64,
        beta: f64,
        domain_re_min: f64,
        #[serde(rename = "box")]
        bx: BoxSpec,
    },
    RationalSum {
        a_tilde: MatrixSpec,
        residues: Vec<MatrixSpec>,
        poles: Vec<C64>,
        lambda_c: f64,
        beta: f64,
        domain_re_min: f64,
        #[serde(rename = "box")]
        bx: BoxSpec,
    },
    Rank2Channel {
        channel: ChannelSpec,
        beta: f64,
        #[serde(rename = "box")]
        bx: BoxSpec,
    },
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Zero { .. } => "zero",
            ModelConfig::ScalarExp { .. } => "scalar-exp",
            ModelConfig::ScalarPower { .. } => "scalar-power",
            ModelConfig::RationalSum { .. } => "rational-sum",
            ModelConfig::Rank2Channel { .. } => "rank2-channel",
        }
    }

    pub fn lambda_c(&self) -> f64 {
        match self {
            ModelConfig::Zero { lambda_c, .. }
            | ModelConfig::ScalarExp { lambda_c, .. }
            | ModelConfig::ScalarPower { lambda_c, .. }
            | ModelConfig::RationalSum { lambda_c, .. } => *lambda_c,
            ModelConfig::Rank2Channel { channel, .. } => channel.lambda_c,
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            ModelConfig::Zero { beta, .. }
            | ModelConfig::ScalarExp { beta, .. }
            | ModelConfig::ScalarPower { beta, .. }
            | ModelConfig::RationalSum { beta, .. }
            | ModelConfig::Rank2Channel { beta, .. } => *beta,
        }
    }

    pub fn build(&self) -> Result<TransferModel> {
        let scalar = |a: f64| CMat::from_element(1, 1, C64::new(a, 0.0));
        match self {
            ModelConfig::Zero {
                a_tilde,
                lambda_c,
                beta,
                bx,
            } => {
                let a = a_tilde.to_matrix()?;
                let k = zero_kernel(a.nrows(), *lambda_c, *beta)?;
                TransferModel::new(a, k, bx.alpha1, bx.alpha2, bx.eta)
            }
            ModelConfig::ScalarExp {
                a,
                scale,
                rate,
                shift,
                lambda_c,
                beta,
                domain_re_min,
                bx,
            } => {
                let k = KernelDerivative::new(
                    "scalar-exp",
                    Arc::new(ScalarExp {
                        scale: *scale,
                        rate: *rate,
                        shift: *shift,
                    }),
                    HolomorphyDomain::HalfPlane { re_min: *domain_re_min },
                    *lambda_c,
                    *beta,
                )?;
                TransferModel::new(scalar(*a), k, bx.alpha1, bx.alpha2, bx.eta)
            }
            ModelConfig::ScalarPower {
                a,
                scale,
                exponent,
                decay,
                inv_mu_power,
                lambda_c,
                beta,
                domain_re_min,
                bx,
            } => {
                let k = KernelDerivative::new(
                    "scalar-power",
                    Arc::new(ScalarPower {
                        scale: *scale,
                        lambda: *lambda_c,
                        exponent: *exponent,
                        decay: *decay,
                        inv_mu_power: *inv_mu_power,
                    }),
                    HolomorphyDomain::HalfPlane { re_min: *domain_re_min },
                    *lambda_c,
                    *beta,
                )?;
                TransferModel::new(scalar(*a), k, bx.alpha1, bx.alpha2, bx.eta)
            }
            ModelConfig::RationalSum {
                a_tilde,
                residues,
                poles,
                lambda_c,
                beta,
                domain_re_min,
                bx,
            } => {
                let a = a_tilde.to_matrix()?;
                let residues = residues.iter().map(|r| r.to_matrix()).collect::<Result<Vec<_>>>()?;
                if residues.len() != poles.len() || residues.is_empty() {
                    return Err(Error::Config("rational-sum needs one residue per pole".into()));
                }
                if residues.iter().any(|r| r.shape() != a.shape()) {
                    return Err(Error::Config("rational-sum residues must match A~".into()));
                }
                let domain = HolomorphyDomain::HalfPlane { re_min: *domain_re_min };
                if poles.iter().any(|p| domain.contains(*p)) {
                    return Err(Error::Config("rational-sum poles must lie outside the holomorphy domain".into()));
                }
                let k = KernelDerivative::new(
                    "rational-sum",
                    Arc::new(RationalSum {
                        residues,
                        poles: poles.clone(),
                    }),
                    domain,
                    *lambda_c,
                    *beta,
                )?;
                TransferModel::new(a, k, bx.alpha1, bx.alpha2, bx.eta)
            }
            ModelConfig::Rank2Channel { channel, beta, bx } => {
                build_channel_model(channel, bx.alpha1, bx.alpha2, bx.eta, *beta)
            }
        }
    }
}

fn default_sheet() -> i32 {
    -1
}

fn default_depth() -> f64 {
    0.4
}

fn default_segments() -> usize {
    16
}

fn default_arc_order() -> usize {
    32
}

fn default_tail_order() -> usize {
    64
}

/// Contour section: explicit control points, or a half ellipse of the given
/// depth. `alternate_depth` adds a second contour for the independence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourConfig {
    #[serde(default = "default_sheet")]
    pub sheet: i32,
    #[serde(default = "default_depth")]
    pub depth: f64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub arc_control: Option<Vec<C64>>,
    #[serde(default = "default_arc_order")]
    pub arc_order: usize,
    #[serde(default = "default_tail_order")]
    pub tail_order: usize,
    #[serde(default)]
    pub alternate_depth: Option<f64>,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            sheet: default_sheet(),
            depth: default_depth(),
            segments: default_segments(),
            arc_control: None,
            arc_order: default_arc_order(),
            tail_order: default_tail_order(),
            alternate_depth: None,
        }
    }
}

impl ContourConfig {
    pub fn spec(&self, lambda_c: f64, beta: f64) -> ContourSpec {
        let mut s = match &self.arc_control {
            Some(pts) => ContourSpec {
                sheet: self.sheet,
                lambda_c,
                beta,
                arc_control: pts.clone(),
                arc_order: self.arc_order,
                tail_order: self.tail_order,
            },
            None => ContourSpec::semi_ellipse(self.sheet, lambda_c, beta, self.depth, self.segments),
        };
        s.arc_order = self.arc_order;
        s.tail_order = self.tail_order;
        s
    }

    pub fn alternate_spec(&self, lambda_c: f64, beta: f64) -> Option<ContourSpec> {
        self.alternate_depth.map(|d| {
            let mut s = ContourSpec::semi_ellipse(self.sheet, lambda_c, beta, d, self.segments);
            s.arc_order = self.arc_order;
            s.tail_order = self.tail_order;
            s
        })
    }
}

fn default_kappa() -> Vec<Kappa> {
    vec![Kappa::Right, Kappa::Left]
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_kappa")]
    pub kappa: Vec<Kappa>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

fn default_loop_order() -> usize {
    256
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoopConfig {
    Auto {
        #[serde(default = "default_loop_order")]
        order: usize,
        #[serde(default = "default_true")]
        projection: bool,
    },
    Circle {
        center: C64,
        radius: f64,
        #[serde(default = "default_loop_order")]
        order: usize,
        #[serde(default = "default_true")]
        projection: bool,
    },
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig::Auto {
            order: default_loop_order(),
            projection: true,
        }
    }
}

impl LoopConfig {
    pub fn order(&self) -> usize {
        match self {
            LoopConfig::Auto { order, .. } | LoopConfig::Circle { order, .. } => *order,
        }
    }

    pub fn projection(&self) -> bool {
        match self {
            LoopConfig::Auto { projection, .. } | LoopConfig::Circle { projection, .. } => *projection,
        }
    }
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub contour: ContourConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(rename = "loop", default)]
    pub loop_: LoopConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn check(&self) -> Result<()> {
        let s = &self.solver;
        if !(1e-14..=1e-2).contains(&s.tol) {
            return Err(Error::Config(format!("solver.tol = {} is outside [1e-14, 1e-2]", s.tol)));
        }
        if s.max_iter == 0 || s.max_iter > 100_000 {
            return Err(Error::Config(format!("solver.max_iter = {} is outside [1, 100000]", s.max_iter)));
        }
        if s.kappa.is_empty() {
            return Err(Error::Config("solver.kappa is empty".into()));
        }
        let c = &self.contour;
        if c.sheet != 1 && c.sheet != -1 {
            return Err(Error::Config(format!("contour.sheet must be +1 or -1, got {}", c.sheet)));
        }
        if !(c.depth > 0.0) || c.alternate_depth.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("contour depths must be positive".into()));
        }
        if c.segments < 2 || c.arc_order < 2 || c.tail_order < 2 {
            return Err(Error::Config("contour segments and orders must be at least 2".into()));
        }
        if self.loop_.order() < 16 {
            return Err(Error::Config("loop.order must be at least 16".into()));
        }
        if let LoopConfig::Circle { radius, .. } = self.loop_ {
            if !(radius > 0.0) {
                return Err(Error::Config("loop.radius must be positive".into()));
            }
        }
        if let ModelConfig::Rank2Channel { channel, .. } = &self.model {
            if channel.points % 2 == 0 || channel.points < 3 {
                return Err(Error::Config(format!("grid point count must be odd and >= 3, got {}", channel.points)));
            }
        }
        for f in &self.output.formats {
            if f != "json" && f != "csv" {
                return Err(Error::Config(format!("unknown output format {f:?}")));
            }
        }
        Ok(())
    }
}

/// `a.b.c=value`; the value is parsed as JSON when possible, else taken as a
/// string. Numeric path segments index arrays.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            let arr = cur
                .as_array_mut()
                .ok_or_else(|| Error::Config(format!("override path {path:?}: {part} indexes a non-array")))?;
            let len = arr.len();
            let slot = arr
                .get_mut(idx)
                .ok_or_else(|| Error::Config(format!("override path {path:?}: index {idx} out of range {len}")))?;
            if last {
                *slot = value;
                return Ok(());
            }
            cur = slot;
        } else {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            }
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("override path {path:?}: {part} is not an object key")))?;
            if last {
                obj.insert(part.to_string(), value);
                return Ok(());
            }
            cur = obj.entry(part.to_string()).or_insert(Value::Null);
        }
    }
    Err(Error::Config(format!("empty override path in {spec:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn zero_json() -> Value {
        json!({
            "model": {
                "type": "zero",
                "a_tilde": {"diagonal": [[1.6, 0.0], [2.4, 0.0]]},
                "lambda_c": 0.5,
                "beta": 6.0,
                "box": {"alpha1": 1.5, "alpha2": 2.5, "eta": 0.25}
            }
        })
    }

    #[test]
    fn defaults_fill_sections() {
        let c = RunConfig::from_value(zero_json()).unwrap();
        assert_eq!(c.solver.kappa, vec![Kappa::Right, Kappa::Left]);
        assert_eq!(c.solver.tol, 1e-10);
        assert_eq!(c.loop_.order(), 256);
        assert_eq!(c.contour.sheet, -1);
        let m = c.model.build().unwrap();
        assert_eq!(m.dim(), 2);
    }

    #[test]
    fn overrides_on_dotted_paths() {
        let mut v = zero_json();
        apply_override(&mut v, "solver.tol=1e-12").unwrap();
        apply_override(&mut v, "model.a_tilde.diagonal.1.0=2.2").unwrap();
        apply_override(&mut v, "output.directory=results").unwrap();
        let c = RunConfig::from_value(v).unwrap();
        assert_eq!(c.solver.tol, 1e-12);
        assert_eq!(c.output.directory, "results");
        assert_eq!(c.model.build().unwrap().a_tilde[(1, 1)].re, 2.2);
    }

    #[test]
    fn rejections() {
        let mut v = zero_json();
        apply_override(&mut v, "solver.tol=0.5").unwrap();
        assert!(matches!(RunConfig::from_value(v), Err(Error::Config(_))));
        let mut v = zero_json();
        apply_override(&mut v, "model.type=\"no-such\"").unwrap();
        assert!(RunConfig::from_value(v).is_err());
        let mut v = zero_json();
        apply_override(&mut v, "model.extra=1").unwrap();
        assert!(RunConfig::from_value(v).is_err());
        assert!(apply_override(&mut zero_json(), "nokey").is_err());
    }

    #[test]
    fn channel_section_round_trips() {
        let sc = crate::channel::default_scenario();
        let cfg = ModelConfig::Rank2Channel {
            channel: sc.channel.clone(),
            beta: 6.0,
            bx: BoxSpec {
                alpha1: 1.5,
                alpha2: 2.5,
                eta: 0.25,
            },
        };
        let v = serde_json::to_value(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.build().unwrap().dim(), 121);
    }
}
