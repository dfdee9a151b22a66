//! Experiment execution: wiring configurations to the library pipelines and
//! emitting results CSV, summary JSON and a reproducibility manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;

use crate::config::{config_hash, ConfigError, ExperimentConfig, ExperimentKind};
use crate::presets::{build_field, build_model};
use emclt_core::analysis::{
    area_check_experiment, clt_experiment, qx_stability_experiment, quadrature_experiment,
    strong_rate_experiment, CltReport, LimitCase, RateFit,
};
use emclt_core::model::DriftClass;
use emclt_core::zvonkin::{check_gradient_bound, solve_corrector_pde};
use emclt_core::Real;

pub const THREADS_ENV: &str = "EMCLT_THREADS";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Evaluate acceptance thresholds and signal violations in the exit code.
    pub check: bool,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<CheckResult>,
    pub summary: serde_json::Value,
}

impl RunOutcome {
    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Loads a TOML experiment configuration or a JSON manifest produced by an
/// earlier run (rerunning a manifest reproduces its outputs byte for byte).
pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let manifest: serde_json::Value =
            serde_json::from_str(&text).context("parsing manifest JSON")?;
        let resolved = manifest
            .get("resolved_config")
            .and_then(|v| v.as_str())
            .ok_or_else(|| anyhow!("manifest is missing the resolved_config field"))?;
        return ExperimentConfig::parse(resolved).map_err(schema_error);
    }
    ExperimentConfig::parse(&text).map_err(schema_error)
}

fn schema_error(e: ConfigError) -> anyhow::Error {
    anyhow!("config schema violation at {e}")
}

pub fn run(path: &Path, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    let cfg = load_config(path)?;
    run_config(cfg, opts)
}

pub fn run_config(mut cfg: ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(schema_error)?;

    let threads = opts.threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let out_dir = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.experiment.name()));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(k) = threads {
            builder = builder.num_threads(k);
        }
        builder.build().context("building thread pool")?
    };

    let mut emitter = Emitter::new(out_dir.clone());
    let result = pool.install(|| dispatch(&cfg, &mut emitter));
    match result {
        Ok((summary, checks)) => {
            let resolved = cfg.canonical_toml();
            let manifest = json!({
                "experiment": cfg.experiment.name(),
                "seed": cfg.seed,
                "config_hash": config_hash(&resolved),
                "code_version": env!("CARGO_PKG_VERSION"),
                "resolved_config": resolved,
            });
            if let Err(e) = emitter.write_json("manifest.json", &manifest) {
                emitter.cleanup();
                return Err(e);
            }
            if let Err(e) = emitter.write_json("summary.json", &summary) {
                emitter.cleanup();
                return Err(e);
            }
            Ok(RunOutcome {
                out_dir,
                artifacts: emitter.written,
                checks,
                summary,
            })
        }
        Err(e) => {
            // No partial outputs on failure.
            emitter.cleanup();
            Err(e)
        }
    }
}

struct Emitter {
    out_dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Emitter {
    fn new(out_dir: PathBuf) -> Self {
        Emitter {
            out_dir,
            written: Vec::new(),
        }
    }

    fn write_text(&mut self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn write_json(&mut self, name: &str, value: &serde_json::Value) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn note(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn cleanup(&mut self) {
        for path in self.written.drain(..) {
            let _ = std::fs::remove_file(path);
        }
    }
}

fn dispatch(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    match cfg.experiment {
        ExperimentKind::StrongRate => run_strong_rate(cfg, emitter),
        ExperimentKind::Quadrature => run_quadrature(cfg, emitter),
        ExperimentKind::QxStability => run_qx_stability(cfg, emitter),
        ExperimentKind::CltHolder | ExperimentKind::CltSobolev => run_clt(cfg, emitter),
        ExperimentKind::ZvonkinSweep => run_zvonkin(cfg, emitter),
        ExperimentKind::AreaCheck => run_area(cfg, emitter),
    }
}

fn rate_csv(fit: &RateFit<Real>) -> String {
    let mut csv = String::from("n,error,se\n");
    for p in &fit.points {
        let _ = writeln!(csv, "{},{},{}", p.n, p.error, p.se);
    }
    csv
}

fn rate_summary(name: &str, fit: &RateFit<Real>) -> serde_json::Value {
    match &fit.fit {
        Some(f) => json!({
            "experiment": name,
            "degenerate": false,
            "slope": f.slope,
            "intercept": f.intercept,
            "r_squared": f.r_squared,
            "slope_se": f.slope_se,
        }),
        None => json!({ "experiment": name, "degenerate": true }),
    }
}

fn slope_range_check(
    name: &str,
    fit: &RateFit<Real>,
    lo: Real,
    hi: Real,
) -> CheckResult {
    match &fit.fit {
        Some(f) => CheckResult {
            name: name.into(),
            passed: f.slope >= lo && f.slope <= hi,
            detail: format!("slope {:.4} target [{lo}, {hi}]", f.slope),
        },
        None => CheckResult {
            name: name.into(),
            passed: true,
            detail: "degenerate (identically zero errors)".into(),
        },
    }
}

fn slope_at_most_check(name: &str, fit: &RateFit<Real>, hi: Real) -> CheckResult {
    match &fit.fit {
        Some(f) => CheckResult {
            name: name.into(),
            passed: f.slope <= hi,
            detail: format!("slope {:.4} target <= {hi}", f.slope),
        },
        None => CheckResult {
            name: name.into(),
            passed: true,
            detail: "degenerate (identically zero errors)".into(),
        },
    }
}

fn run_strong_rate(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    let model = build_model(&cfg.model).map_err(schema_error)?;
    let p = &cfg.params;
    let fit = strong_rate_experiment(&model, &p.ns, p.p, p.n_paths, p.refinement, cfg.seed)?;
    emitter.write_text("results.csv", &rate_csv(&fit))?;
    let (lo, hi) = match model.drift_class() {
        DriftClass::Smooth => (-0.6, -0.4),
        _ => (-0.6, -0.35),
    };
    let checks = vec![slope_range_check("strong-rate slope", &fit, lo, hi)];
    Ok((rate_summary("strong-rate", &fit), checks))
}

fn run_quadrature(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    let model = build_model(&cfg.model).map_err(schema_error)?;
    let p = &cfg.params;
    let f = build_field("params.f", &p.f).map_err(schema_error)?;
    let g = build_field("params.g", &p.g).map_err(schema_error)?;
    let fit =
        quadrature_experiment(&model, &g, &f, &p.ns, p.p, p.n_paths, p.refinement, cfg.seed)?;
    emitter.write_text("results.csv", &rate_csv(&fit))?;
    // Threshold by function class: a rough g or a rough f carries the
    // half-order gain; a twice-differentiable f integrates at full order.
    let threshold = if p.g.kind == "sobolev-bump" || p.f.kind == "holder-lacunary" {
        -0.55
    } else {
        -0.9
    };
    let checks = vec![slope_at_most_check("quadrature slope", &fit, threshold)];
    let mut summary = rate_summary("quadrature", &fit);
    summary["f_kind"] = json!(p.f.kind);
    summary["g_kind"] = json!(p.g.kind);
    Ok((summary, checks))
}

fn run_qx_stability(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    let model = build_model(&cfg.model).map_err(schema_error)?;
    let p = &cfg.params;
    let n = *p.ns.last().expect("validated non-empty");
    let delta0 = p.delta0.unwrap_or_else(|| (n as Real).powf(-0.5));
    let report = qx_stability_experiment(
        &model,
        n,
        p.refinement,
        delta0,
        p.halvings,
        p.gamma,
        p.qx_paths,
        cfg.seed,
    )?;
    let mut csv = String::from("path,delta,seminorm,sup_distance_to_next\n");
    for (path_idx, semis) in report.seminorms.iter().enumerate() {
        for (k, semi) in semis.iter().enumerate() {
            let dist = report.distances[path_idx]
                .get(k)
                .map(|d| d.to_string())
                .unwrap_or_default();
            let _ = writeln!(csv, "{path_idx},{},{semi},{dist}", report.deltas[k]);
        }
    }
    emitter.write_text("results.csv", &csv)?;
    let ratio = report.max_seminorm_ratio();
    let cauchy = report.cauchy_decreasing();
    let checks = vec![
        CheckResult {
            name: "qx seminorm stability".into(),
            passed: ratio <= 2.0,
            detail: format!("max ratio {ratio:.4} target <= 2"),
        },
        CheckResult {
            name: "qx halving Cauchy".into(),
            passed: cauchy,
            detail: format!(
                "distances nonincreasing: {cauchy}, last gap {:.6}",
                report.max_last_distance()
            ),
        },
    ];
    let summary = json!({
        "experiment": "qx-stability",
        "n": n,
        "delta0": delta0,
        "gamma": report.gamma,
        "max_seminorm_ratio": ratio,
        "cauchy_decreasing": cauchy,
        "max_last_distance": report.max_last_distance(),
    });
    Ok((summary, checks))
}

fn clt_csv(report: &CltReport<Real>) -> String {
    let mut csv = String::from("n,time,coord,ks,w1,w1_se\n");
    for r in &report.reports {
        for row in &r.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.n, row.time, row.coord, row.ks, row.w1, row.w1_se
            );
        }
    }
    csv
}

fn run_clt(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    let model = build_model(&cfg.model).map_err(schema_error)?;
    let p = &cfg.params;
    let case = match cfg.experiment {
        ExperimentKind::CltHolder => LimitCase::Holder { delta: p.delta0 },
        ExperimentKind::CltSobolev => LimitCase::Sobolev {
            theta: p.theta,
            half_width: p.half_width,
            nx: p.nx,
            nt: p.nt,
        },
        _ => unreachable!(),
    };
    let report = clt_experiment(
        &model,
        &case,
        &p.ns,
        p.refinement,
        p.limit_steps,
        &p.times,
        p.n_paths,
        cfg.seed,
    )?;
    emitter.write_text("results.csv", &clt_csv(&report))?;

    let mut checks = Vec::new();
    for (t_idx, &time) in report.times.iter().enumerate() {
        for coord in 0..report.dim {
            let ok = report.w1_trend_nonincreasing(t_idx, coord);
            let first = report.reports.first().unwrap().w1_at(t_idx, report.dim, coord);
            let last = report.reports.last().unwrap().w1_at(t_idx, report.dim, coord);
            checks.push(CheckResult {
                name: format!("w1 trend t={time} coord={coord}"),
                passed: ok,
                detail: format!("w1 {:.5} -> {:.5}", first.w1, last.w1),
            });
        }
    }
    if matches!(cfg.experiment, ExperimentKind::CltHolder)
        && matches!(model.drift_class(), DriftClass::Smooth)
    {
        // The smooth preset must at least halve the terminal distance from
        // the smallest to the largest scheme size.
        let t_idx = report.times.len() - 1;
        let first = report.reports.first().unwrap().w1_at(t_idx, report.dim, 0);
        let last = report.reports.last().unwrap().w1_at(t_idx, report.dim, 0);
        checks.push(CheckResult {
            name: "w1 halving (smooth)".into(),
            passed: last.w1 <= 0.5 * first.w1,
            detail: format!("w1 {:.5} -> {:.5}", first.w1, last.w1),
        });
    }
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "times": report.times,
        "ns": p.ns,
        "w1_terminal": report
            .reports
            .iter()
            .map(|r| r.w1_at(report.times.len() - 1, report.dim, 0).w1)
            .collect::<Vec<_>>(),
    });
    Ok((summary, checks))
}

fn run_zvonkin(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    let model = build_model(&cfg.model).map_err(schema_error)?;
    let p = &cfg.params;
    let sweep = check_gradient_bound(&model, &p.thetas, p.half_width, p.nx, p.nt)?;
    let mut csv = String::from("theta,sup_grad,sup_u,residual\n");
    for row in &sweep.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.theta, row.sup_grad, row.sup_u, row.residual
        );
    }
    emitter.write_text("results.csv", &csv)?;
    if p.dump_fields {
        let dir = emitter.out_dir.join("fields");
        std::fs::create_dir_all(&dir)?;
        for row in &sweep.rows {
            let sol = solve_corrector_pde(&model, row.theta, p.half_width, p.nx, p.nt)?;
            let prefix = dir.join(format!("theta_{}", row.theta));
            sol.dump(&prefix)?;
            for suffix in ["_u.bin", "_grad.bin", "_meta.json"] {
                emitter.note(dir.join(format!("theta_{}{suffix}", row.theta)));
            }
        }
    }
    let max_residual = sweep
        .rows
        .iter()
        .map(|r| r.residual)
        .fold(0.0_f64, f64::max);
    let checks = vec![
        match sweep.slope {
            Some(slope) => CheckResult {
                name: "gradient-bound slope".into(),
                passed: slope <= -0.3,
                detail: format!("slope {slope:.4} target <= -0.3"),
            },
            None => CheckResult {
                name: "gradient-bound slope".into(),
                passed: sweep.rows.iter().all(|r| r.sup_grad == 0.0),
                detail: "degenerate (zero gradients)".into(),
            },
        },
        CheckResult {
            name: "pde residual".into(),
            passed: max_residual < 1e-6,
            detail: format!("max relative residual {max_residual:.2e} target < 1e-6"),
        },
    ];
    let summary = json!({
        "experiment": "zvonkin-sweep",
        "thetas": sweep.rows.iter().map(|r| r.theta).collect::<Vec<_>>(),
        "sup_grads": sweep.rows.iter().map(|r| r.sup_grad).collect::<Vec<_>>(),
        "slope": sweep.slope,
        "max_residual": max_residual,
    });
    Ok((summary, checks))
}

fn run_area(
    cfg: &ExperimentConfig,
    emitter: &mut Emitter,
) -> anyhow::Result<(serde_json::Value, Vec<CheckResult>)> {
    let p = &cfg.params;
    let report = area_check_experiment::<Real>(
        p.area_dim,
        p.area_n,
        &p.area_refinements,
        p.identity_paths,
        p.variance_refinement,
        p.variance_paths,
        cfg.seed,
    )?;
    let mut csv = String::from("record,key,value\n");
    for (m, rms) in &report.identity {
        let _ = writeln!(csv, "identity_rms,{m},{rms}");
    }
    for (e, v) in report.variances.iter().enumerate() {
        let _ = writeln!(csv, "terminal_variance,{}_{},{v}", e / p.area_dim, e % p.area_dim);
    }
    emitter.write_text("results.csv", &csv)?;
    let max_var_gap = report
        .variances
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0_f64, f64::max);
    let slope = report.identity_slope.unwrap_or(f64::NAN);
    let checks = vec![
        CheckResult {
            name: "area variance".into(),
            passed: max_var_gap <= 0.03,
            detail: format!("max |Var - 1| = {max_var_gap:.4} target <= 0.03"),
        },
        CheckResult {
            name: "area identity decay".into(),
            passed: (-0.65..=-0.35).contains(&slope),
            detail: format!("slope {slope:.4} target about -0.5"),
        },
    ];
    let summary = json!({
        "experiment": "area-check",
        "identity": report.identity,
        "identity_slope": report.identity_slope,
        "variances": report.variances,
        "variance_refinement": report.variance_refinement,
    });
    Ok((summary, checks))
}
