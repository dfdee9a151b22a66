//! Experiment configuration: one TOML file per run, schema-validated with
//! field paths before anything executes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    StrongRate,
    Quadrature,
    QxStability,
    CltHolder,
    CltSobolev,
    ZvonkinSweep,
    AreaCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::StrongRate => "strong-rate",
            ExperimentKind::Quadrature => "quadrature",
            ExperimentKind::QxStability => "qx-stability",
            ExperimentKind::CltHolder => "clt-holder",
            ExperimentKind::CltSobolev => "clt-sobolev",
            ExperimentKind::ZvonkinSweep => "zvonkin-sweep",
            ExperimentKind::AreaCheck => "area-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub drift: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sobolev_m: Option<u32>,
    #[serde(default = "default_one")]
    pub drift_amplitude: f64,
    #[serde(default)]
    pub constant: Option<Vec<f64>>,
    #[serde(default)]
    pub linear: Option<Vec<f64>>,
    #[serde(default = "default_sigma")]
    pub sigma: String,
    #[serde(default = "default_one")]
    pub sigma_base: f64,
    #[serde(default = "default_sigma_amplitude")]
    pub sigma_amplitude: f64,
    #[serde(default)]
    pub sigma_diag: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn default_one() -> f64 {
    1.0
}
fn default_sigma() -> String {
    "tanh-diag".into()
}
fn default_sigma_amplitude() -> f64 {
    0.3
}
fn default_dim() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            drift: "smooth-tanh".into(),
            alpha: None,
            sobolev_m: None,
            drift_amplitude: 1.0,
            constant: None,
            linear: None,
            sigma: default_sigma(),
            sigma_base: 1.0,
            sigma_amplitude: default_sigma_amplitude(),
            sigma_diag: None,
            lambda: None,
            dim: 1,
            x0: None,
        }
    }
}

/// Scalar test function for the quadrature experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sobolev_m: Option<u32>,
    #[serde(default = "default_one")]
    pub amplitude: f64,
    #[serde(default = "default_field_frequency")]
    pub frequency: f64,
    #[serde(default = "default_one")]
    pub value: f64,
}

fn default_field_frequency() -> f64 {
    1.3
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            kind: "constant".into(),
            alpha: None,
            sobolev_m: None,
            amplitude: 1.0,
            frequency: default_field_frequency(),
            value: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_limit_steps")]
    pub limit_steps: usize,
    /// Mollification scale for the occupation derivative; the fine-step
    /// square root when absent.
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default = "default_halvings")]
    pub halvings: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_qx_paths")]
    pub qx_paths: u64,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_nt")]
    pub nt: usize,
    #[serde(default)]
    pub dump_fields: bool,
    #[serde(default)]
    pub f: FieldConfig,
    #[serde(default)]
    pub g: FieldConfig,
    #[serde(default = "default_area_dim")]
    pub area_dim: usize,
    #[serde(default = "default_area_n")]
    pub area_n: usize,
    #[serde(default = "default_area_refinements")]
    pub area_refinements: Vec<usize>,
    #[serde(default = "default_identity_paths")]
    pub identity_paths: u64,
    #[serde(default = "default_variance_refinement")]
    pub variance_refinement: usize,
    #[serde(default = "default_variance_paths")]
    pub variance_paths: u64,
}

fn default_ns() -> Vec<usize> {
    vec![16, 32, 64, 128, 256, 512, 1024]
}
fn default_refinement() -> usize {
    64
}
fn default_n_paths() -> u64 {
    10_000
}
fn default_p() -> f64 {
    2.0
}
fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_limit_steps() -> usize {
    16_384
}
fn default_halvings() -> usize {
    2
}
fn default_gamma() -> f64 {
    0.70
}
fn default_qx_paths() -> u64 {
    4
}
fn default_thetas() -> Vec<f64> {
    vec![4.0, 16.0, 64.0, 256.0]
}
fn default_theta() -> f64 {
    8.0
}
fn default_half_width() -> f64 {
    8.0
}
fn default_nx() -> usize {
    2048
}
fn default_nt() -> usize {
    2048
}
fn default_area_dim() -> usize {
    2
}
fn default_area_n() -> usize {
    4
}
fn default_area_refinements() -> Vec<usize> {
    vec![16, 64, 256]
}
fn default_identity_paths() -> u64 {
    2000
}
fn default_variance_refinement() -> usize {
    128
}
fn default_variance_paths() -> u64 {
    100_000
}

impl Default for Params {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialise")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub params: Params,
}

/// Schema violation with the offending field path.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn fail(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

const DRIFT_PRESETS: &[&str] = &[
    "zero",
    "constant",
    "linear",
    "smooth-tanh",
    "holder-lacunary",
    "sobolev-bump",
];
const SIGMA_PRESETS: &[&str] = &["identity", "constant-diag", "tanh-diag"];
const FIELD_PRESETS: &[&str] = &["constant", "smooth-cos", "holder-lacunary", "sobolev-bump"];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| fail("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !DRIFT_PRESETS.contains(&m.drift.as_str()) {
            return Err(fail(
                "model.drift",
                format!("unknown preset '{}', expected one of {DRIFT_PRESETS:?}", m.drift),
            ));
        }
        if !SIGMA_PRESETS.contains(&m.sigma.as_str()) {
            return Err(fail(
                "model.sigma",
                format!("unknown preset '{}', expected one of {SIGMA_PRESETS:?}", m.sigma),
            ));
        }
        if m.dim == 0 {
            return Err(fail("model.dim", "dimension must be at least 1"));
        }
        if let Some(x0) = &m.x0 {
            if x0.len() != m.dim {
                return Err(fail("model.x0", "length must equal model.dim"));
            }
        }
        if matches!(m.drift.as_str(), "holder-lacunary" | "sobolev-bump") {
            match m.alpha {
                Some(a) if a > 0.0 && a < 1.0 => {}
                _ => {
                    return Err(fail("model.alpha", "required in (0, 1) for this drift preset"))
                }
            }
        }
        if m.drift == "constant" && m.constant.is_none() {
            return Err(fail("model.constant", "required for the constant drift"));
        }
        if m.drift == "linear" {
            match &m.linear {
                Some(a) if a.len() == m.dim * m.dim => {}
                _ => return Err(fail("model.linear", "required, row-major dim x dim")),
            }
        }
        if m.sigma == "tanh-diag" && m.sigma_base <= m.sigma_amplitude.abs() {
            return Err(fail(
                "model.sigma_base",
                "tanh-diag requires sigma_base > |sigma_amplitude|",
            ));
        }

        let p = &self.params;
        if p.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("params.ns", "ns must be increasing"));
        }
        if p.ns.is_empty() {
            return Err(fail("params.ns", "ns must not be empty"));
        }
        if p.refinement == 0 {
            return Err(fail("params.refinement", "must be at least 1"));
        }
        if p.p < 1.0 {
            return Err(fail("params.p", "must be at least 1"));
        }
        if p.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(fail("params.times", "times must lie in [0, 1]"));
        }
        match self.experiment {
            ExperimentKind::Quadrature => {
                for (name, f) in [("params.f", &p.f), ("params.g", &p.g)] {
                    if !FIELD_PRESETS.contains(&f.kind.as_str()) {
                        return Err(fail(
                            name,
                            format!("unknown field kind '{}', expected one of {FIELD_PRESETS:?}", f.kind),
                        ));
                    }
                    if matches!(f.kind.as_str(), "holder-lacunary" | "sobolev-bump") {
                        match f.alpha {
                            Some(a) if a > 0.0 && a < 1.0 => {}
                            _ => return Err(fail(name, "alpha required in (0, 1)")),
                        }
                    }
                }
            }
            ExperimentKind::CltHolder | ExperimentKind::CltSobolev => {
                if p.ns.len() < 4 {
                    return Err(fail(
                        "params.ns",
                        "distributional trend tests need at least four sizes",
                    ));
                }
                if p.n_paths < 1000 {
                    return Err(fail("params.n_paths", "at least 1000 paths required"));
                }
            }
            ExperimentKind::ZvonkinSweep => {
                if p.thetas.is_empty() || p.thetas.iter().any(|t| *t <= 0.0) {
                    return Err(fail("params.thetas", "positive theta list required"));
                }
            }
            ExperimentKind::AreaCheck => {
                if p.area_refinements.iter().any(|&m| m < 2) {
                    return Err(fail(
                        "params.area_refinements",
                        "identity check needs refinements of at least 2",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical TOML of the resolved configuration (defaults applied); the
    /// manifest stores exactly this text.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

/// FNV-1a hash of the canonical configuration text.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(
            r#"
experiment = "strong-rate"
seed = 42
"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.name(), "strong-rate");
        assert_eq!(cfg.params.refinement, 64);
        assert_eq!(cfg.model.drift, "smooth-tanh");
    }

    #[test]
    fn decreasing_ns_is_rejected_with_field_path() {
        let err = ExperimentConfig::parse(
            r#"
experiment = "strong-rate"
seed = 1
[params]
ns = [8, 4]
"#,
        )
        .unwrap_err();
        assert_eq!(err.field, "params.ns");
        assert!(err.to_string().contains("ns must be increasing"));
    }

    #[test]
    fn unknown_preset_is_rejected() {
        let err = ExperimentConfig::parse(
            r#"
experiment = "strong-rate"
seed = 1
[model]
drift = "polynomial"
"#,
        )
        .unwrap_err();
        assert_eq!(err.field, "model.drift");
    }

    #[test]
    fn holder_preset_requires_alpha() {
        let err = ExperimentConfig::parse(
            r#"
experiment = "strong-rate"
seed = 1
[model]
drift = "holder-lacunary"
"#,
        )
        .unwrap_err();
        assert_eq!(err.field, "model.alpha");
    }

    #[test]
    fn canonical_roundtrip_is_stable() {
        let cfg = ExperimentConfig::parse(
            r#"
experiment = "area-check"
seed = 7
"#,
        )
        .unwrap();
        let text = cfg.canonical_toml();
        let reparsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(text, reparsed.canonical_toml());
        assert_eq!(config_hash(&text), config_hash(&reparsed.canonical_toml()));
    }

    #[test]
    fn clt_requires_enough_sizes_and_paths() {
        let err = ExperimentConfig::parse(
            r#"
experiment = "clt-holder"
seed = 1
[params]
ns = [16, 64, 256]
"#,
        )
        .unwrap_err();
        assert_eq!(err.field, "params.ns");
    }
}
