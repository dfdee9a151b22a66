//! Named drift/diffusion presets and their regularity metadata.

use crate::config::{ConfigError, FieldConfig, ModelConfig};
use emclt_core::model::{DiffusionSpec, DriftSpec, ModelSpec, ScalarFieldSpec};
use emclt_core::model::{CuspBump, LacunarySeries};
use emclt_core::Real;

fn fail(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

pub fn build_drift(m: &ModelConfig) -> Result<DriftSpec<Real>, ConfigError> {
    let amp = m.drift_amplitude;
    match m.drift.as_str() {
        "zero" => Ok(DriftSpec::Zero),
        "constant" => Ok(DriftSpec::Constant(
            m.constant.clone().ok_or_else(|| fail("model.constant", "missing"))?,
        )),
        "linear" => Ok(DriftSpec::Linear(
            m.linear.clone().ok_or_else(|| fail("model.linear", "missing"))?,
        )),
        "smooth-tanh" => Ok(DriftSpec::smooth_tanh(amp)),
        "holder-lacunary" => DriftSpec::holder_lacunary(
            m.alpha.ok_or_else(|| fail("model.alpha", "missing"))?,
            amp,
        )
        .map_err(|e| fail("model.drift", e.to_string())),
        "sobolev-bump" => DriftSpec::sobolev_bump(
            m.alpha.ok_or_else(|| fail("model.alpha", "missing"))?,
            m.sobolev_m.unwrap_or(2),
            amp,
        )
        .map_err(|e| fail("model.drift", e.to_string())),
        other => Err(fail("model.drift", format!("unknown preset '{other}'"))),
    }
}

pub fn build_diffusion(m: &ModelConfig) -> Result<DiffusionSpec<Real>, ConfigError> {
    match m.sigma.as_str() {
        "identity" => Ok(DiffusionSpec::Identity),
        "constant-diag" => Ok(DiffusionSpec::ConstantDiag(
            m.sigma_diag
                .clone()
                .unwrap_or_else(|| vec![m.sigma_base; m.dim]),
        )),
        "tanh-diag" => DiffusionSpec::tanh_diag(m.sigma_base, m.sigma_amplitude)
            .map_err(|e| fail("model.sigma", e.to_string())),
        other => Err(fail("model.sigma", format!("unknown preset '{other}'"))),
    }
}

pub fn build_model(m: &ModelConfig) -> Result<ModelSpec<Real>, ConfigError> {
    let drift = build_drift(m)?;
    let diffusion = build_diffusion(m)?;
    let lambda = m.lambda.unwrap_or_else(|| diffusion.ellipticity() * 0.99);
    let x0 = m.x0.clone().unwrap_or_else(|| vec![0.0; m.dim]);
    let model = ModelSpec::new(m.dim, x0, drift, diffusion, lambda)
        .map_err(|e| fail("model", e.to_string()))?;
    model.validate().map_err(|e| fail("model", e.to_string()))?;
    Ok(model)
}

pub fn build_field(name: &str, f: &FieldConfig) -> Result<ScalarFieldSpec<Real>, ConfigError> {
    match f.kind.as_str() {
        "constant" => Ok(ScalarFieldSpec::Constant(f.value)),
        "smooth-cos" => Ok(ScalarFieldSpec::SmoothCos {
            amplitude: f.amplitude,
            frequency: f.frequency,
        }),
        "holder-lacunary" => {
            let alpha = f.alpha.ok_or_else(|| fail(name, "alpha required"))?;
            LacunarySeries::holder(alpha, f.amplitude, LacunarySeries::<Real>::DEFAULT_TERMS)
                .map(ScalarFieldSpec::Lacunary)
                .map_err(|e| fail(name, e.to_string()))
        }
        "sobolev-bump" => {
            let alpha = f.alpha.ok_or_else(|| fail(name, "alpha required"))?;
            CuspBump::new(alpha, f.sobolev_m.unwrap_or(2), f.amplitude)
                .map(ScalarFieldSpec::SobolevCusp)
                .map_err(|e| fail(name, e.to_string()))
        }
        other => Err(fail(name, format!("unknown field kind '{other}'"))),
    }
}

/// Stable listing of the coefficient presets with regularity metadata.
pub fn list_presets() -> String {
    let mut out = String::new();
    out.push_str("drift presets:\n");
    out.push_str("  zero                          b = 0 (C^inf)\n");
    out.push_str("  constant                      b = c (C^inf; set model.constant)\n");
    out.push_str("  linear                        b = A x (C^inf; set model.linear, row-major)\n");
    out.push_str("  smooth-tanh                   b_l = amplitude tanh(x_l) (C^inf, bounded derivatives)\n");
    out.push_str("  holder-lacunary(alpha=0.5)    damped lacunary Fourier series, Holder-alpha for alpha in (0,1); default alpha 0.5\n");
    out.push_str("  sobolev-bump(alpha=0.5, m=2)  compactly supported |sin|^alpha cusp profile in W^alpha_m; default (0.5, 2)\n");
    out.push_str("diffusion presets:\n");
    out.push_str("  identity                      sigma = I (lambda = 1)\n");
    out.push_str("  constant-diag                 constant diagonal sigma\n");
    out.push_str("  tanh-diag                     sigma_ll = base + amplitude tanh(x_l); elliptic with lambda = base - |amplitude|\n");
    out.push_str("quadrature field kinds: constant, smooth-cos (C^2), holder-lacunary(alpha), sobolev-bump(alpha, m)\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use emclt_core::model::DriftClass;

    #[test]
    fn listing_is_stable_and_documented() {
        let listing = list_presets();
        assert!(listing.contains("holder-lacunary(alpha=0.5)"));
        assert!(listing.contains("smooth-tanh"));
        assert!(listing.contains("C^inf"));
        assert!(listing.contains("sobolev-bump(alpha=0.5, m=2)"));
        assert!(listing.contains("compactly supported"));
    }

    #[test]
    fn model_construction_from_config() {
        let mut m = ModelConfig::default();
        m.drift = "holder-lacunary".into();
        m.alpha = Some(0.5);
        let model = build_model(&m).unwrap();
        assert!(matches!(model.drift_class(), DriftClass::Holder { .. }));
        assert!((model.lambda - 0.7 * 0.99).abs() < 1e-12);
    }
}
