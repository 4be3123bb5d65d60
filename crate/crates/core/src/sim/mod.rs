//! Monte Carlo studies: Type I error, power and MSE curves, robustness to a misspecified design
//! model, and the bootstrap study on complete-case data.
//!
//! Replication `r` draws its data from seed `seed + r` and reuses that dataset for every
//! `(c1, design)` cell, so curves share common random numbers. Results do not depend on the
//! number of worker threads.

mod output;
mod real;

use serde::{Deserialize, Serialize};

use crate::augmentation::{assemble_augmented, assemble_ranked, ObservedSubsampling, RankEnd, RecoveryDesign};
use crate::design::{optimize_region, Criterion, LinkMode, SearchOptions};
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::glm::lrt_mnar;
use crate::model::{generate_dataset, GeneratedData, ModelSpec, Region, TermShape};
use crate::quadrature::prob_missing;

pub use output::{write_curve_csv, Manifest};
pub use real::{
    ols, read_complete_cases, run_bootstrap_on, run_bootstrap_real, CompleteCases, CovariateModel, OlsFit, RealDataConfig,
    RealDataResult,
};

/// Largest tolerated gap between the model's `Pr(M=1)` and a declared target fraction.
pub const MISSING_FRACTION_WARNING: f64 = 0.03;

/// Features entering the fitted mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// `w = (1, x)`, `z = y`.
    S1,
    /// `w = (1, x)`, `z = (x y, y)`; single covariate only.
    S2,
}

impl Scenario {
    pub fn shape(self, p: usize) -> Result<TermShape> {
        match self {
            Scenario::S1 => Ok(TermShape::scenario1(p)),
            Scenario::S2 if p == 1 => Ok(TermShape::scenario2()),
            Scenario::S2 => Err(Error::Config(format!("scenario s2 needs one covariate, model has {p}"))),
        }
    }
}

/// How the recovered rows are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    /// Uniformly from all missing rows, keeping every observed row.
    Random,
    /// Uniformly inside a region found by the design search for each `c1`.
    Optimal {
        #[serde(default = "default_criterion")]
        criterion: Criterion,
        #[serde(default = "default_link_mode")]
        link_mode: LinkMode,
    },
    /// Uniformly inside a fixed region.
    Region {
        region: Region,
        #[serde(default = "one")]
        c2: f64,
    },
    /// The missing rows with the highest first covariate.
    TopK,
    /// The missing rows with the lowest first covariate.
    BottomK,
}

fn default_criterion() -> Criterion {
    Criterion::Ncp
}

fn default_link_mode() -> LinkMode {
    LinkMode::Logit
}

fn one() -> f64 {
    1.0
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Random => "random",
            Scheme::Optimal { .. } => "optimal",
            Scheme::Region { .. } => "region",
            Scheme::TopK => "top_k",
            Scheme::BottomK => "bottom_k",
        }
    }
}

/// Design-search settings used by `optimal` schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub starts: usize,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { starts: 20, seed: 0 }
    }
}

/// A design-model perturbation for the robustness study. Unset fields keep the true value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub label: String,
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub psi: Option<Vec<f64>>,
    #[serde(default)]
    pub beta0: Option<f64>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
}

impl Perturbation {
    pub fn apply(&self, model: &ModelSpec) -> Result<ModelSpec> {
        let mut m = model.clone();
        if let Some(l) = &self.lambda {
            m.mechanism.lambda = l.clone();
        }
        if let Some(p) = &self.psi {
            m.mechanism.psi = p.clone();
        }
        if let Some(b) = self.beta0 {
            m.regression.beta0 = b;
        }
        if let Some(b) = &self.beta {
            m.regression.beta = b.clone();
        }
        m.validate()?;
        Ok(m)
    }
}

/// A simulation study on a fully specified model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Fitted mechanism features; defaults to the model's own mechanism terms.
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub c1_grid: Vec<f64>,
    pub replications: usize,
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subsampling: ObservedSubsampling,
    #[serde(default)]
    pub search: SearchSettings,
    /// Declared missing fraction, checked against the model before running.
    #[serde(default)]
    pub expected_missing_fraction: Option<f64>,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Random]
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, c1_grid: Vec<f64>, replications: usize, n: usize) -> Self {
        Self {
            model,
            scenario: None,
            schemes: default_schemes(),
            c1_grid,
            replications,
            n,
            alpha: 0.05,
            seed: 0,
            subsampling: ObservedSubsampling::default(),
            search: SearchSettings::default(),
            expected_missing_fraction: None,
            perturbations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.c1_grid.is_empty() {
            return Err(Error::Config("c1_grid is empty".into()));
        }
        if let Some(c) = self.c1_grid.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
            return Err(Error::Config(format!("c1 values must lie in (0, 1], got {c}")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.schemes.is_empty() && self.perturbations.is_empty() {
            return Err(Error::Config("no schemes to run".into()));
        }
        for s in &self.schemes {
            if let Scheme::Region { region, c2 } = s {
                RecoveryDesign::new(0.5, *c2, region.clone())
                    .validate_parameters(self.model.p())
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.analysis_shape()?;
        Ok(())
    }

    pub fn analysis_shape(&self) -> Result<TermShape> {
        match self.scenario {
            Some(s) => s.shape(self.model.p()),
            None => Ok(self.model.mechanism.shape.clone()),
        }
    }

    /// True outcome coefficients in the fitted parameterisation, when they are known.
    fn true_psi(&self, shape: &TermShape) -> Option<Vec<f64>> {
        if *shape == self.model.mechanism.shape {
            Some(self.model.mechanism.psi.clone())
        } else if self.model.mechanism.is_mar() {
            Some(vec![0.0; shape.s()])
        } else {
            None
        }
    }

    fn search_options(&self, execution: Execution) -> SearchOptions {
        SearchOptions {
            n: self.n,
            starts: self.search.starts,
            seed: self.search.seed,
            execution,
            alpha: self.alpha,
            ..Default::default()
        }
    }
}

/// A warning when the model's `Pr(M=1)` is far from the declared fraction.
pub fn preflight_missing_fraction(model: &ModelSpec, expected: f64) -> Option<String> {
    let pm = prob_missing(model);
    ((pm - expected).abs() > MISSING_FRACTION_WARNING).then(|| {
        format!("model gives Pr(M=1) = {pm:.4}, declared missing fraction is {expected:.4}")
    })
}

/// One `(c1, design)` point of a curve.
#[derive(Clone, Debug, Serialize)]
pub struct CurveRow {
    pub c1: f64,
    pub design: String,
    pub rejection_rate: f64,
    pub mc_standard_error: f64,
    /// Per outcome coefficient; `NaN` when the true values are unknown.
    pub mse_psi: Vec<f64>,
    /// Mean of the full-model estimates `(lambda, psi)` over kept replications.
    pub mean_estimates: Vec<f64>,
    pub kept: usize,
    pub discarded: usize,
    /// Replications whose region was enlarged to hold `n*` missing rows.
    pub enlarged: usize,
    pub bounds: Option<Vec<(Option<f64>, Option<f64>)>>,
    pub c2: Option<f64>,
    /// Analytic power of the design, when it came from the noncentrality search.
    pub approx_power: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveResult {
    pub rows: Vec<CurveRow>,
    pub replications: usize,
    pub seed: u64,
    /// Fraction of missing outcomes across all generated datasets.
    pub missing_fraction: f64,
}

impl CurveResult {
    pub fn row(&self, design: &str, c1: f64) -> Option<&CurveRow> {
        self.rows
            .iter()
            .find(|r| r.design == design && (r.c1 - c1).abs() < 1e-12)
    }
}

/// A design ready to be applied to simulated data.
#[derive(Clone, Debug)]
pub enum Prepared {
    Design(RecoveryDesign),
    Ranked { c1: f64, end: RankEnd },
}

/// One cell of a study: a label, `c1` and the design to apply.
#[derive(Clone, Debug)]
pub struct Cell {
    pub label: String,
    pub c1: f64,
    pub prepared: Prepared,
    pub approx_power: Option<f64>,
}

impl Cell {
    fn bounds(&self) -> Option<Vec<(Option<f64>, Option<f64>)>> {
        match &self.prepared {
            Prepared::Design(d) => d.region.bounds().map(|b| {
                b.into_iter()
                    .map(|(lo, hi)| (lo.is_finite().then_some(lo), hi.is_finite().then_some(hi)))
                    .collect()
            }),
            Prepared::Ranked { .. } => None,
        }
    }

    fn c2(&self) -> Option<f64> {
        match &self.prepared {
            Prepared::Design(d) => Some(d.c2),
            Prepared::Ranked { .. } => None,
        }
    }
}

/// Turns schemes into cells, running the design search for `optimal` schemes.
pub fn prepare_cells(
    design_model: &ModelSpec,
    schemes: &[Scheme],
    c1_grid: &[f64],
    search: &SearchOptions,
    label_prefix: Option<&str>,
) -> Result<Vec<Cell>> {
    let p = design_model.p();
    let mut cells = Vec::new();
    for scheme in schemes {
        let label = match label_prefix {
            Some(pre) => pre.to_string(),
            None => scheme.label().to_string(),
        };
        for &c1 in c1_grid {
            let (prepared, approx_power) = match scheme {
                Scheme::Random => (Prepared::Design(RecoveryDesign::random(c1, p)), None),
                Scheme::Region { region, c2 } => (Prepared::Design(RecoveryDesign::new(c1, *c2, region.clone())), None),
                Scheme::TopK => (Prepared::Ranked { c1, end: RankEnd::Highest }, None),
                Scheme::BottomK => (Prepared::Ranked { c1, end: RankEnd::Lowest }, None),
                Scheme::Optimal { criterion, link_mode } => {
                    let r = optimize_region(design_model, c1, *criterion, *link_mode, search)?;
                    (Prepared::Design(r.design()), r.approx_power)
                }
            };
            cells.push(Cell {
                label: label.clone(),
                c1,
                prepared,
                approx_power,
            });
        }
    }
    Ok(cells)
}

enum Outcome {
    Kept { reject: bool, estimates: Vec<f64>, enlarged: bool },
    Discarded,
}

/// Mixes the replication seed with the cell index for the recovery draw.
fn cell_seed(seed: u64, cell: usize) -> u64 {
    let mut z = seed ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_cell(
    data: &GeneratedData,
    cell: &Cell,
    seed: u64,
    shape: &TermShape,
    model: &ModelSpec,
    alpha: f64,
    subsampling: ObservedSubsampling,
) -> Result<Outcome> {
    let sample = match &cell.prepared {
        Prepared::Design(d) => assemble_augmented(&data.dataset, d, data.oracle(), seed, subsampling),
        Prepared::Ranked { c1, end } => assemble_ranked(&data.dataset, *c1, *end, data.oracle()),
    };
    let sample = match sample {
        Ok(s) => s,
        Err(Error::DegenerateSample(_)) => return Ok(Outcome::Discarded),
        Err(e) => return Err(e),
    };
    match lrt_mnar(&sample, shape, model.mechanism.link) {
        Ok(t) => Ok(Outcome::Kept {
            reject: t.rejects(alpha),
            estimates: t.full_fit.coefficients.clone(),
            enlarged: sample.enlarged,
        }),
        Err(Error::FitNotConverged { .. }) | Err(Error::DegenerateSample(_)) => Ok(Outcome::Discarded),
        Err(e) => Err(e),
    }
}

/// Everything a Monte Carlo run needs besides the data source.
pub struct StudyPlan<'a> {
    pub model: &'a ModelSpec,
    pub shape: TermShape,
    pub true_psi: Option<Vec<f64>>,
    pub cells: Vec<Cell>,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub subsampling: ObservedSubsampling,
    pub execution: Execution,
}

/// Runs every cell on every replication. `source(seed)` produces the replication's data.
pub fn run_study<S>(plan: &StudyPlan<'_>, source: S) -> Result<CurveResult>
where
    S: Fn(u64) -> Result<GeneratedData> + Sync + Send,
{
    let per_rep: Vec<Result<(Vec<Outcome>, usize, usize)>> = map_indices(plan.execution, plan.replications, |r| {
        let seed = plan.seed.wrapping_add(r as u64);
        let data = source(seed)?;
        let mut out = Vec::with_capacity(plan.cells.len());
        for (ci, cell) in plan.cells.iter().enumerate() {
            out.push(run_cell(
                &data,
                cell,
                cell_seed(seed, ci),
                &plan.shape,
                plan.model,
                plan.alpha,
                plan.subsampling,
            )?);
        }
        Ok((out, data.dataset.n_miss(), data.dataset.n()))
    });

    let k = plan.shape.q() + plan.shape.s();
    let q = plan.shape.q();
    let s = plan.shape.s();
    let mut rows: Vec<CurveRow> = plan
        .cells
        .iter()
        .map(|c| CurveRow {
            c1: c.c1,
            design: c.label.clone(),
            rejection_rate: 0.0,
            mc_standard_error: 0.0,
            mse_psi: vec![0.0; s],
            mean_estimates: vec![0.0; k],
            kept: 0,
            discarded: 0,
            enlarged: 0,
            bounds: c.bounds(),
            c2: c.c2(),
            approx_power: c.approx_power,
        })
        .collect();
    let mut rejections = vec![0usize; rows.len()];
    let (mut missing, mut total) = (0usize, 0usize);
    for rep in per_rep {
        let (outcomes, n_miss, n) = rep?;
        missing += n_miss;
        total += n;
        for (ci, o) in outcomes.into_iter().enumerate() {
            let row = &mut rows[ci];
            match o {
                Outcome::Discarded => row.discarded += 1,
                Outcome::Kept { reject, estimates, enlarged } => {
                    row.kept += 1;
                    rejections[ci] += reject as usize;
                    row.enlarged += enlarged as usize;
                    for (m, e) in row.mean_estimates.iter_mut().zip(&estimates) {
                        *m += e;
                    }
                    if let Some(psi) = &plan.true_psi {
                        for j in 0..s {
                            row.mse_psi[j] += (estimates[q + j] - psi[j]).powi(2);
                        }
                    }
                }
            }
        }
    }
    for (row, rej) in rows.iter_mut().zip(rejections) {
        if row.kept == 0 {
            row.rejection_rate = f64::NAN;
            row.mc_standard_error = f64::NAN;
            row.mse_psi.iter_mut().for_each(|v| *v = f64::NAN);
            row.mean_estimates.iter_mut().for_each(|v| *v = f64::NAN);
            continue;
        }
        let kept = row.kept as f64;
        let rate = rej as f64 / kept;
        row.rejection_rate = rate;
        row.mc_standard_error = (rate * (1.0 - rate) / kept).sqrt();
        row.mean_estimates.iter_mut().for_each(|v| *v /= kept);
        if plan.true_psi.is_some() {
            row.mse_psi.iter_mut().for_each(|v| *v /= kept);
        } else {
            row.mse_psi.iter_mut().for_each(|v| *v = f64::NAN);
        }
    }
    Ok(CurveResult {
        rows,
        replications: plan.replications,
        seed: plan.seed,
        missing_fraction: if total > 0 { missing as f64 / total as f64 } else { f64::NAN },
    })
}

fn simulate(config: &ExperimentConfig, cells: Vec<Cell>, execution: Execution) -> Result<CurveResult> {
    let shape = config.analysis_shape()?;
    let plan = StudyPlan {
        model: &config.model,
        true_psi: config.true_psi(&shape),
        shape,
        cells,
        replications: config.replications,
        seed: config.seed,
        alpha: config.alpha,
        subsampling: config.subsampling,
        execution,
    };
    let model = &config.model;
    let n = config.n;
    run_study(&plan, |seed| Ok(generate_dataset(model, n, seed)))
}

/// Rejection rates of the MNAR test when the data are MAR.
pub fn run_type_one(config: &ExperimentConfig, execution: Execution) -> Result<CurveResult> {
    config.validate()?;
    if !config.model.mechanism.is_mar() {
        return Err(Error::Config("type-one study needs a MAR model (all psi equal to zero)".into()));
    }
    let cells = prepare_cells(&config.model, &config.schemes, &config.c1_grid, &config.search_options(execution), None)?;
    simulate(config, cells, execution)
}

/// Power of the test and MSE of the outcome coefficients for each scheme and `c1`.
pub fn run_power_mse(config: &ExperimentConfig, execution: Execution) -> Result<CurveResult> {
    config.validate()?;
    let cells = prepare_cells(&config.model, &config.schemes, &config.c1_grid, &config.search_options(execution), None)?;
    simulate(config, cells, execution)
}

/// Power under the true model of designs optimised for perturbed models, alongside the
/// configured schemes.
pub fn run_robustness(config: &ExperimentConfig, execution: Execution) -> Result<CurveResult> {
    config.validate()?;
    let search = config.search_options(execution);
    let mut cells = prepare_cells(&config.model, &config.schemes, &config.c1_grid, &search, None)?;
    let optimal = config
        .schemes
        .iter()
        .find(|s| matches!(s, Scheme::Optimal { .. }))
        .cloned()
        .unwrap_or(Scheme::Optimal {
            criterion: Criterion::Ncp,
            link_mode: LinkMode::Logit,
        });
    for pert in &config.perturbations {
        let design_model = pert.apply(&config.model).map_err(|e| Error::Config(format!("{}: {e}", pert.label)))?;
        cells.extend(prepare_cells(
            &design_model,
            std::slice::from_ref(&optimal),
            &config.c1_grid,
            &search,
            Some(&pert.label),
        )?);
    }
    simulate(config, cells, execution)
}
