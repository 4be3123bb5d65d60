//! `mnar`: recovery-design search and Monte Carlo studies from JSON configs.
//!
//! Exit status is 0 on success, 1 for configuration or input errors and 2 when a numerical
//! routine fails.

mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mnar_core::augmentation::{required_c2, RecoveryDesign};
use mnar_core::design::{optimize_region, LinkMode, SearchOptions};
use mnar_core::exec::{with_jobs, Execution};
use mnar_core::model::Region;
use mnar_core::power::{approx_power, asymptotic_variance, noncentrality};
use mnar_core::presets::RealScenario;
use mnar_core::sim::{
    preflight_missing_fraction, run_bootstrap_real, run_power_mse, run_robustness, run_type_one,
    write_curve_csv, CurveResult, ExperimentConfig, Manifest, RealDataConfig, MISSING_FRACTION_WARNING,
};
use serde_json::{json, Value};

use config::{design_config, parse, read_document, study_scenario, to_value, DesignConfig};

/// Bad input from the user; maps to exit status 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(name = "mnar", version, about = "Optimal recovery designs for testing MNAR missingness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise the recovery region for each c1.
    Design(Common),
    /// Monte Carlo power and MSE curves.
    PowerCurve(Common),
    /// Monte Carlo Type I error curves under a MAR model.
    TypeOne(Common),
    /// Power of designs optimised for misspecified models.
    Robustness(Common),
    /// Bootstrap study on a complete-case CSV.
    RealData(RealArgs),
    /// Noncentrality and asymptotic variance of a given design.
    CriterionEval(Common),
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// JSON config or a manifest written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Recovery fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    c1: Vec<f64>,
    /// Fitted mechanism (s1, s2) or, for real data, the mechanism scenario (A, B).
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args, Clone, Debug)]
struct RealArgs {
    #[command(flatten)]
    common: Common,
    /// Complete-case CSV; overrides the config's path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Covariate columns, comma separated; defaults to every column but the outcome.
    #[arg(long, value_delimiter = ',')]
    x_columns: Vec<String>,
    /// Outcome column; defaults to the last column.
    #[arg(long)]
    y_column: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<mnar_core::Error>() {
            return if e.is_config() { 1 } else { 2 };
        }
    }
    2
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Design(c) => design(&c),
        Command::CriterionEval(c) => criterion_eval(&c),
        Command::PowerCurve(c) => study(&c, StudyKind::PowerCurve),
        Command::TypeOne(c) => study(&c, StudyKind::TypeOne),
        Command::Robustness(c) => study(&c, StudyKind::Robustness),
        Command::RealData(r) => real_data(&r),
    }
}

/// Collects output files and the manifest describing them.
struct Output {
    dir: Option<PathBuf>,
    manifest: Manifest,
}

impl Output {
    fn new(dir: Option<PathBuf>, manifest: Manifest) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir, manifest })
    }

    fn warn(&mut self, message: String) {
        eprintln!("warning: {message}");
        self.manifest.warnings.push(message);
    }

    /// Writes `bytes` to `name` in the output directory, or to stdout when `primary`.
    fn emit(&mut self, name: &str, bytes: &[u8], primary: bool) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
                self.manifest.outputs.push(name.to_string());
            }
            None if primary => std::io::stdout().write_all(bytes)?,
            None => {}
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        if let Some(d) = &self.dir {
            self.manifest.outputs.push("manifest.json".into());
            let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
            let path = d.join("manifest.json");
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

fn require_config(c: &Common) -> Result<&Path> {
    c.config
        .as_deref()
        .ok_or_else(|| ConfigError("--config is required".into()).into())
}

fn reject(flag: &str, given: bool, command: &str) -> Result<()> {
    if given {
        return Err(ConfigError(format!("{flag} does not apply to {command}")).into());
    }
    Ok(())
}

fn load_design(c: &Common, command: &str) -> Result<DesignConfig> {
    reject("--reps", c.reps.is_some(), command)?;
    reject("--scenario", c.scenario.is_some(), command)?;
    let mut cfg = design_config(read_document(require_config(c)?, command)?)?;
    if !c.c1.is_empty() {
        cfg.c1_grid = c.c1.clone();
    }
    if let Some(s) = c.seed {
        cfg.search.seed = s;
    }
    if cfg.c1_grid.is_empty() {
        return Err(ConfigError("no c1 given; use --c1 or c1_grid".into()).into());
    }
    if let Some(bad) = cfg.c1_grid.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(ConfigError(format!("c1 values must lie in (0, 1], got {bad}")).into());
    }
    Ok(cfg)
}

fn design(c: &Common) -> Result<()> {
    let cfg = load_design(c, "design")?;
    let mut out = Output::new(
        c.out.clone(),
        Manifest::new("design", to_value(&cfg)?, cfg.search.seed, None),
    )?;
    let opts = SearchOptions {
        n: cfg.n,
        starts: cfg.search.starts,
        seed: cfg.search.seed,
        execution: Execution::default(),
        alpha: cfg.alpha,
        ..Default::default()
    };
    let results = with_jobs(c.jobs, || {
        cfg.c1_grid
            .iter()
            .map(|&c1| optimize_region(&cfg.model, c1, cfg.criterion, cfg.link_mode, &opts))
            .collect::<mnar_core::Result<Vec<_>>>()
    })?;
    let doc = if results.len() == 1 { to_value(&results[0])? } else { to_value(&results)? };
    out.emit("design.json", &pretty(&doc)?, true)?;
    out.finish()
}

fn criterion_eval(c: &Common) -> Result<()> {
    let cfg = load_design(c, "criterion-eval")?;
    let mut out = Output::new(
        c.out.clone(),
        Manifest::new("criterion-eval", to_value(&cfg)?, cfg.search.seed, None),
    )?;
    let model = &cfg.model;
    let region = cfg.region.clone().unwrap_or_else(|| Region::unbounded(model.p()));
    let mut rows = Vec::new();
    for &c1 in &cfg.c1_grid {
        let c2 = match (cfg.c2, cfg.link_mode) {
            (Some(c2), _) => c2,
            (None, LinkMode::Logit) => 1.0,
            (None, LinkMode::General) => required_c2(model, c1, &region)?,
        };
        let design = RecoveryDesign::new(c1, c2, region.clone());
        design.validate_parameters(model.p()).map_err(|e| ConfigError(e.to_string()))?;
        let check = design.check(model)?;
        let ncp = noncentrality(model, &design, cfg.n)?;
        let power = approx_power(ncp.gamma, model.mechanism.s(), cfg.alpha)?;
        let variance = if model.mechanism.s() == 1 {
            Some(asymptotic_variance(model, &design, cfg.n)?.target_variance)
        } else {
            None
        };
        rows.push(json!({
            "c1": c1,
            "c2": c2,
            "region": region,
            "slack": check.slack,
            "probabilities": check.probabilities,
            "approx_power": power,
            "asymptotic_variance": variance,
            "noncentrality": ncp,
        }));
    }
    let doc = if rows.len() == 1 { rows.remove(0) } else { Value::Array(rows) };
    out.emit("criterion_eval.json", &pretty(&doc)?, true)?;
    out.finish()
}

#[derive(Clone, Copy)]
enum StudyKind {
    PowerCurve,
    TypeOne,
    Robustness,
}

impl StudyKind {
    fn command(self) -> &'static str {
        match self {
            StudyKind::PowerCurve => "power-curve",
            StudyKind::TypeOne => "type-one",
            StudyKind::Robustness => "robustness",
        }
    }

    fn stem(self) -> &'static str {
        match self {
            StudyKind::PowerCurve => "power_curve",
            StudyKind::TypeOne => "type_one",
            StudyKind::Robustness => "robustness",
        }
    }
}

fn study(c: &Common, kind: StudyKind) -> Result<()> {
    let mut cfg: ExperimentConfig = parse(read_document(require_config(c)?, kind.command())?, "experiment")?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.reps {
        cfg.replications = r;
    }
    if !c.c1.is_empty() {
        cfg.c1_grid = c.c1.clone();
    }
    if let Some(s) = &c.scenario {
        cfg.scenario = Some(study_scenario(s)?);
    }
    cfg.validate()?;
    let mut out = Output::new(
        c.out.clone(),
        Manifest::new(kind.command(), to_value(&cfg)?, cfg.seed, Some(cfg.replications)),
    )?;
    if let Some(expected) = cfg.expected_missing_fraction {
        if let Some(w) = preflight_missing_fraction(&cfg.model, expected) {
            out.warn(w);
        }
    }
    let result = with_jobs(c.jobs, || match kind {
        StudyKind::PowerCurve => run_power_mse(&cfg, Execution::default()),
        StudyKind::TypeOne => run_type_one(&cfg, Execution::default()),
        StudyKind::Robustness => run_robustness(&cfg, Execution::default()),
    })?;
    emit_curve(&mut out, kind.stem(), &result, &to_value(&result)?)?;
    out.finish()
}

fn emit_curve(out: &mut Output, stem: &str, curve: &CurveResult, detail: &Value) -> Result<()> {
    let mut csv = Vec::new();
    write_curve_csv(curve, &mut csv)?;
    out.emit(&format!("{stem}.csv"), &csv, true)?;
    out.emit(&format!("{stem}.json"), &pretty(detail)?, false)
}

fn default_grid() -> Vec<f64> {
    (1..=10).map(|i| f64::from(i) / 10.0).collect()
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| ConfigError(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok(header.iter().map(str::to_string).collect())
}

fn load_real(r: &RealArgs) -> Result<RealDataConfig> {
    let c = &r.common;
    let mut value = match &c.config {
        Some(path) => {
            let mut v = read_document(path, "real-data")?;
            // A relative CSV path in a config file is taken relative to that file.
            if let (Some(rel), Some(base)) = (v.get("csv").and_then(Value::as_str), path.parent()) {
                let p = Path::new(rel);
                if p.is_relative() {
                    v["csv"] = json!(base.join(p));
                }
            }
            v
        }
        None => {
            let csv = r
                .csv
                .as_ref()
                .ok_or_else(|| ConfigError("real-data needs --config or --csv".into()))?;
            json!({ "csv": csv, "x_columns": [], "y_column": "", "c1_grid": default_grid(), "replications": 1000 })
        }
    };
    if let Some(csv) = &r.csv {
        value["csv"] = json!(csv);
    }
    let mut cfg: RealDataConfig = parse(value, "real-data")?;
    if cfg.y_column.is_empty() || cfg.x_columns.is_empty() || r.y_column.is_some() || !r.x_columns.is_empty() {
        let header = csv_header(&cfg.csv)?;
        if let Some(y) = &r.y_column {
            cfg.y_column = y.clone();
        } else if cfg.y_column.is_empty() {
            cfg.y_column = header.last().cloned().unwrap_or_default();
        }
        if !r.x_columns.is_empty() {
            cfg.x_columns = r.x_columns.clone();
        } else if cfg.x_columns.is_empty() {
            cfg.x_columns = header.iter().filter(|h| **h != cfg.y_column).cloned().collect();
        }
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.reps {
        cfg.replications = n;
    }
    if !c.c1.is_empty() {
        cfg.c1_grid = c.c1.clone();
    }
    if let Some(s) = &c.scenario {
        let scenario: RealScenario = s.parse().map_err(ConfigError)?;
        cfg.scenario = Some(scenario);
        cfg.mechanism = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn real_data(r: &RealArgs) -> Result<()> {
    let cfg = load_real(r)?;
    let mut out = Output::new(
        r.common.out.clone(),
        Manifest::new("real-data", to_value(&cfg)?, cfg.seed, Some(cfg.replications)),
    )?;
    let result = with_jobs(r.common.jobs, || run_bootstrap_real(&cfg, Execution::default()))?;
    if let Some(expected) = cfg.expected_missing_fraction {
        let pm = result.model_missing_fraction;
        if (pm - expected).abs() > MISSING_FRACTION_WARNING {
            out.warn(format!(
                "design model gives Pr(M=1) = {pm:.4}, declared missing fraction is {expected:.4}"
            ));
        }
    }
    emit_curve(&mut out, "real_data", &result.curve, &to_value(&result)?)?;
    out.finish()
}
