//! Loading of JSON configs, including configs embedded in a run manifest.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mnar_core::design::{Criterion, LinkMode};
use mnar_core::model::{ModelSpec, Region};
use mnar_core::sim::{ExperimentConfig, Manifest, Scheme, SearchSettings};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ConfigError;

/// Config of the `design` and `criterion-eval` commands.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub c1_grid: Vec<f64>,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    #[serde(default = "default_link_mode")]
    pub link_mode: LinkMode,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub search: SearchSettings,
    /// Region scored by `criterion-eval`; all of `R^p` when absent.
    #[serde(default)]
    pub region: Option<Region>,
    /// Fixed `c2` for `criterion-eval`; chosen per `link_mode` when absent.
    #[serde(default)]
    pub c2: Option<f64>,
}

fn default_criterion() -> Criterion {
    Criterion::Ncp
}

fn default_link_mode() -> LinkMode {
    LinkMode::Logit
}

fn default_n() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.05
}

impl DesignConfig {
    fn from_model(model: ModelSpec) -> Self {
        Self {
            model,
            c1_grid: Vec::new(),
            criterion: default_criterion(),
            link_mode: default_link_mode(),
            n: default_n(),
            alpha: default_alpha(),
            search: SearchSettings::default(),
            region: None,
            c2: None,
        }
    }

    /// Takes the model, grid and search settings of a study config, and the first optimal
    /// scheme's criterion if there is one.
    fn from_experiment(exp: ExperimentConfig) -> Self {
        let mut cfg = Self::from_model(exp.model);
        cfg.c1_grid = exp.c1_grid;
        cfg.n = exp.n;
        cfg.alpha = exp.alpha;
        cfg.search = exp.search;
        if let Some(Scheme::Optimal { criterion, link_mode }) =
            exp.schemes.iter().find(|s| matches!(s, Scheme::Optimal { .. }))
        {
            cfg.criterion = *criterion;
            cfg.link_mode = *link_mode;
        }
        cfg
    }
}

/// Reads a JSON file; a manifest yields its embedded config after checking the command.
pub fn read_document(path: &Path, command: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    if value.get("manifest_version").is_some() {
        let manifest: Manifest = serde_json::from_value(value)
            .map_err(|e| ConfigError(format!("{}: malformed manifest: {e}", path.display())))?;
        if manifest.command != command {
            return Err(ConfigError(format!(
                "manifest was written by '{}', not '{command}'",
                manifest.command
            ))
            .into());
        }
        return Ok(manifest.config);
    }
    Ok(value)
}

pub fn parse<T: serde::de::DeserializeOwned>(value: Value, what: &str) -> Result<T> {
    serde_json::from_value(value).map_err(|e| ConfigError(format!("invalid {what} config: {e}")).into())
}

/// Accepts a design config, a bare model, or a study config.
pub fn design_config(value: Value) -> Result<DesignConfig> {
    if value.get("regression").is_some() {
        return Ok(DesignConfig::from_model(parse(value, "model")?));
    }
    if value.get("replications").is_some() {
        return Ok(DesignConfig::from_experiment(parse(value, "experiment")?));
    }
    parse(value, "design")
}

/// `--scenario` for synthetic studies: `1`, `2`, `s1` or `s2`.
pub fn study_scenario(s: &str) -> Result<mnar_core::sim::Scenario> {
    use mnar_core::sim::Scenario;
    match s.to_ascii_lowercase().as_str() {
        "1" | "s1" => Ok(Scenario::S1),
        "2" | "s2" => Ok(Scenario::S2),
        other => bail!(ConfigError(format!("unknown scenario '{other}', expected s1 or s2"))),
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).context("serializing config")
}
