//! Bootstrap study on complete-case data: rows are resampled, missingness is re-imposed by a
//! known mechanism, and random and optimised recovery are compared.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::PathBuf;

use super::{prepare_cells, run_study, CurveResult, Scheme, SearchSettings, StudyPlan};
use crate::augmentation::ObservedSubsampling;
use crate::design::{Criterion, LinkMode, SearchOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::dataset::inject_missingness;
use crate::model::{CovariateDistribution, Marginal, MechanismSpec, ModelSpec, RegressionSpec};
use crate::presets::RealScenario;
use crate::quadrature::prob_missing;

/// Fewest complete cases accepted for the bootstrap.
pub const MIN_COMPLETE_CASES: usize = 100;

/// Complete cases read from a CSV: covariates row-major and outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct CompleteCases {
    pub p: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Rows skipped because a field was empty.
    pub incomplete: usize,
}

impl CompleteCases {
    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.xs.iter().skip(j).step_by(self.p).copied().collect()
    }
}

/// Reads the named columns; an empty field marks a missing value and drops the row.
pub fn read_complete_cases<R: Read>(reader: R, x_columns: &[String], y_column: &str) -> Result<CompleteCases> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found; header has {:?}", headers.iter().collect::<Vec<_>>())))
    };
    if x_columns.is_empty() {
        return Err(Error::Schema("at least one covariate column is required".into()));
    }
    let x_idx: Vec<usize> = x_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let y_idx = find(y_column)?;
    let mut out = CompleteCases {
        p: x_idx.len(),
        xs: Vec::new(),
        ys: Vec::new(),
        incomplete: 0,
    };
    let mut row = Vec::with_capacity(x_idx.len());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |i: usize| -> Result<Option<f64>> {
            let field = rec.get(i).unwrap_or("");
            if field.is_empty() {
                return Ok(None);
            }
            let v: f64 = field.parse().map_err(|_| Error::Csv {
                line,
                message: format!("column '{}' has non-numeric value '{field}'", &headers[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    message: format!("column '{}' has non-finite value '{field}'", &headers[i]),
                });
            }
            Ok(Some(v))
        };
        row.clear();
        let mut complete = true;
        for &i in &x_idx {
            match parse(i)? {
                Some(v) => row.push(v),
                None => complete = false,
            }
        }
        let y = parse(y_idx)?;
        match (complete, y) {
            (true, Some(y)) => {
                out.xs.extend_from_slice(&row);
                out.ys.push(y);
            }
            _ => out.incomplete += 1,
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OlsFit {
    pub beta0: f64,
    pub beta: Vec<f64>,
    /// Residual standard deviation with `n - p - 1` degrees of freedom.
    pub sigma: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `(1, x)`.
pub fn ols(data: &CompleteCases) -> Result<OlsFit> {
    let (n, p) = (data.n(), data.p);
    if n <= p + 1 {
        return Err(Error::DegenerateSample(format!("{n} complete cases cannot fit {} coefficients", p + 1)));
    }
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { data.xs[i * p + j - 1] });
    let y = DVector::from_column_slice(&data.ys);
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::DegenerateSample(e.to_string()))?;
    let resid = &y - &x * &coef;
    let sigma = (resid.norm_squared() / (n - p - 1) as f64).sqrt();
    Ok(OlsFit {
        beta0: coef[0],
        beta: coef.iter().skip(1).copied().collect(),
        sigma,
        n,
    })
}

/// Covariate law assumed by the design search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateModel {
    /// The observed covariates themselves.
    Empirical,
    /// One marginal per covariate.
    Given(Vec<Marginal>),
}

impl Default for CovariateModel {
    fn default() -> Self {
        CovariateModel::Empirical
    }
}

fn default_real_schemes() -> Vec<Scheme> {
    vec![
        Scheme::Random,
        Scheme::Optimal {
            criterion: Criterion::Ncp,
            link_mode: LinkMode::Logit,
        },
    ]
}

/// Bootstrap study on a complete-case CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    pub csv: PathBuf,
    pub x_columns: Vec<String>,
    pub y_column: String,
    /// Named mechanism for the income/maths-score data; ignored when `mechanism` is set.
    #[serde(default)]
    pub scenario: Option<RealScenario>,
    #[serde(default)]
    pub mechanism: Option<MechanismSpec>,
    #[serde(default)]
    pub covariates: CovariateModel,
    #[serde(default = "default_real_schemes")]
    pub schemes: Vec<Scheme>,
    pub c1_grid: Vec<f64>,
    pub replications: usize,
    /// Bootstrap sample size; defaults to the number of complete cases.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "super::default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subsampling: ObservedSubsampling,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub expected_missing_fraction: Option<f64>,
}

impl RealDataConfig {
    pub fn mechanism(&self) -> Result<MechanismSpec> {
        match (&self.mechanism, self.scenario) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(s)) => Ok(s.mechanism()),
            (None, None) => Err(Error::Config("real-data config needs a scenario or a mechanism".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.c1_grid.is_empty() || self.c1_grid.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return Err(Error::Config("c1_grid must be non-empty with values in (0, 1]".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.mechanism()?.validate(self.x_columns.len()).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RealDataResult {
    pub ols: OlsFit,
    /// Model used by the design search: OLS regression, assumed covariate law, scenario mechanism.
    pub design_model: ModelSpec,
    /// `Pr(M=1)` of the design model.
    pub model_missing_fraction: f64,
    pub curve: CurveResult,
}

/// Reads `config.csv` and runs [`run_bootstrap_on`].
pub fn run_bootstrap_real(config: &RealDataConfig, execution: Execution) -> Result<RealDataResult> {
    config.validate()?;
    let file = std::fs::File::open(&config.csv)?;
    let data = read_complete_cases(file, &config.x_columns, &config.y_column)?;
    run_bootstrap_on(config, &data, execution)
}

pub fn run_bootstrap_on(config: &RealDataConfig, data: &CompleteCases, execution: Execution) -> Result<RealDataResult> {
    config.validate()?;
    if data.n() < MIN_COMPLETE_CASES {
        return Err(Error::DegenerateSample(format!(
            "{} complete cases, at least {MIN_COMPLETE_CASES} needed",
            data.n()
        )));
    }
    if data.p != config.x_columns.len() {
        return Err(Error::Schema("covariate count does not match x_columns".into()));
    }
    let fit = ols(data)?;
    let marginals = match &config.covariates {
        CovariateModel::Empirical => (0..data.p).map(|j| Marginal::empirical(data.column(j))).collect(),
        CovariateModel::Given(m) if m.len() == data.p => m.clone(),
        CovariateModel::Given(m) => {
            return Err(Error::Config(format!("{} covariate marginals given for {} columns", m.len(), data.p)))
        }
    };
    let design_model = ModelSpec::new(
        RegressionSpec::new(fit.beta0, fit.beta.clone(), fit.sigma),
        CovariateDistribution::new(marginals),
        config.mechanism()?,
    )?;
    let search = SearchOptions {
        n: config.n.unwrap_or(data.n()),
        starts: config.search.starts,
        seed: config.search.seed,
        execution,
        alpha: config.alpha,
        ..Default::default()
    };
    let cells = prepare_cells(&design_model, &config.schemes, &config.c1_grid, &search, None)?;
    let shape = design_model.mechanism.shape.clone();
    let plan = StudyPlan {
        model: &design_model,
        true_psi: Some(design_model.mechanism.psi.clone()),
        shape,
        cells,
        replications: config.replications,
        seed: config.seed,
        alpha: config.alpha,
        subsampling: config.subsampling,
        execution,
    };
    let n = search.n;
    let p = data.p;
    let curve = run_study(&plan, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n * p);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.random_range(0..data.n());
            xs.extend_from_slice(&data.xs[i * p..(i + 1) * p]);
            ys.push(data.ys[i]);
        }
        Ok(inject_missingness(&design_model, &xs, &ys, &mut rng))
    })?;
    Ok(RealDataResult {
        ols: fit,
        model_missing_fraction: prob_missing(&design_model),
        design_model,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reads_complete_cases() {
        let text = "id,x,y\n1,1.5,2\n2,,3\n3,2.5,\n4,3.5,4.25\n";
        let d = read_complete_cases(text.as_bytes(), &cols(&["x"]), "y").unwrap();
        assert_eq!(d.xs, vec![1.5, 3.5]);
        assert_eq!(d.ys, vec![2.0, 4.25]);
        assert_eq!(d.incomplete, 2);
    }

    #[test]
    fn reports_line_of_bad_value() {
        let text = "x,y\n1,2\n2,3\n3,abc\n";
        match read_complete_cases(text.as_bytes(), &cols(&["x"]), "y") {
            Err(Error::Csv { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        let ragged = "x,y\n1,2\n2,3,4\n";
        assert!(matches!(
            read_complete_cases(ragged.as_bytes(), &cols(&["x"]), "y"),
            Err(Error::Csv { line: 3, .. })
        ));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "x,y\n1,2\n";
        assert!(matches!(
            read_complete_cases(text.as_bytes(), &cols(&["income"]), "y"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ols_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut d = CompleteCases {
            p: 2,
            xs: vec![],
            ys: vec![],
            incomplete: 0,
        };
        for _ in 0..20_000 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            d.xs.extend([a, b]);
            d.ys.push(1.0 + 2.0 * a - 3.0 * b + noise.sample(&mut rng));
        }
        let f = ols(&d).unwrap();
        assert!((f.beta0 - 1.0).abs() < 0.03);
        assert!((f.beta[0] - 2.0).abs() < 0.03 && (f.beta[1] + 3.0).abs() < 0.03);
        assert!((f.sigma - 0.5).abs() < 0.01);
    }

    #[test]
    fn exact_line_fit() {
        let d = CompleteCases {
            p: 1,
            xs: vec![0.0, 1.0, 2.0, 3.0],
            ys: vec![1.0, 3.0, 5.0, 7.5],
            incomplete: 0,
        };
        let f = ols(&d).unwrap();
        // Closed form: slope = Sxy / Sxx.
        assert!((f.beta[0] - 2.15).abs() < 1e-12);
        assert!((f.beta0 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn small_bootstrap_runs() {
        let m = crate::presets::real_data_skew(RealScenario::A);
        let g = crate::model::generate_dataset(&m, 400, 3);
        let d = CompleteCases {
            p: 1,
            xs: (0..g.dataset.n()).flat_map(|i| g.dataset.x(i).to_vec()).collect(),
            ys: g.complete_y.clone(),
            incomplete: 0,
        };
        let cfg = RealDataConfig {
            csv: PathBuf::new(),
            x_columns: cols(&["x"]),
            y_column: "y".into(),
            scenario: Some(RealScenario::A),
            mechanism: None,
            covariates: CovariateModel::Empirical,
            schemes: vec![Scheme::Random],
            c1_grid: vec![0.5],
            replications: 6,
            n: None,
            alpha: 0.05,
            seed: 9,
            subsampling: ObservedSubsampling::Bernoulli,
            search: SearchSettings::default(),
            expected_missing_fraction: None,
        };
        let r = run_bootstrap_on(&cfg, &d, Execution::Sequential).unwrap();
        assert_eq!(r.curve.rows.len(), 1);
        assert_eq!(r.curve.rows[0].kept + r.curve.rows[0].discarded, 6);
        assert!(r.curve.missing_fraction > 0.2 && r.curve.missing_fraction < 0.8);
    }
}
