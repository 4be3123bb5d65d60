//! Domain types: the outcome regression, covariate law, missing mechanism and regions.

pub mod covariates;
pub mod dataset;
pub mod link;
pub mod mechanism;
pub mod region;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use covariates::{CovariateDistribution, Marginal};
pub use dataset::{generate_dataset, Dataset, GeneratedData};
pub use link::LinkFunction;
pub use mechanism::{MechanismSpec, TermShape, WTerm, ZTerm};
pub use region::{DimRange, Interval, Region};

/// `Y | X = x ~ N(beta0 + beta'x, sigma_y^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma_y: f64,
}

impl RegressionSpec {
    pub fn new(beta0: f64, beta: Vec<f64>, sigma_y: f64) -> Self {
        Self { beta0, beta, sigma_y }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    #[inline]
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.beta0 + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() {
            return Err(Error::Spec("regression needs at least one covariate".into()));
        }
        if !(self.sigma_y > 0.0) || !self.sigma_y.is_finite() {
            return Err(Error::Spec(format!("sigma_y must be positive, got {}", self.sigma_y)));
        }
        if !self.beta0.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Spec("regression coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Full data-generating model: regression, covariates and missing mechanism.
///
/// JSON form:
///
/// ```json
/// {
///   "regression": {"beta0": 2.0, "beta": [-2.0], "sigma_y": 2.0},
///   "covariates": [{"type": "normal", "mean": 0.0, "sd": 4.0}],
///   "mechanism": {"w_terms": ["one", {"x": 0}], "z_terms": ["y"],
///                 "lambda": [-2.0, 0.4], "psi": [-0.15]},
///   "link": "logit"
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct ModelSpec {
    pub regression: RegressionSpec,
    pub covariates: CovariateDistribution,
    pub mechanism: MechanismSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    regression: RegressionSpec,
    covariates: CovariateDistribution,
    mechanism: MechanismDocument,
    link: LinkFunction,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanismDocument {
    w_terms: Vec<WTerm>,
    z_terms: Vec<ZTerm>,
    lambda: Vec<f64>,
    psi: Vec<f64>,
}

impl TryFrom<ModelDocument> for ModelSpec {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let mut covariates = doc.covariates;
        for m in &mut covariates.marginals {
            if let Marginal::Empirical { sample } = m {
                sample.sort_by(f64::total_cmp);
            }
        }
        let spec = ModelSpec {
            regression: doc.regression,
            covariates,
            mechanism: MechanismSpec {
                link: doc.link,
                shape: TermShape {
                    w_terms: doc.mechanism.w_terms,
                    z_terms: doc.mechanism.z_terms,
                },
                lambda: doc.mechanism.lambda,
                psi: doc.mechanism.psi,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ModelSpec> for ModelDocument {
    fn from(m: ModelSpec) -> Self {
        ModelDocument {
            regression: m.regression,
            covariates: m.covariates,
            link: m.mechanism.link,
            mechanism: MechanismDocument {
                w_terms: m.mechanism.shape.w_terms,
                z_terms: m.mechanism.shape.z_terms,
                lambda: m.mechanism.lambda,
                psi: m.mechanism.psi,
            },
        }
    }
}

impl ModelSpec {
    pub fn new(
        regression: RegressionSpec,
        covariates: CovariateDistribution,
        mechanism: MechanismSpec,
    ) -> Result<Self> {
        let spec = Self {
            regression,
            covariates,
            mechanism,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn p(&self) -> usize {
        self.regression.p()
    }

    pub fn validate(&self) -> Result<()> {
        self.regression.validate()?;
        self.covariates.validate()?;
        if self.covariates.dim() != self.p() {
            return Err(Error::Spec(format!(
                "{} covariate marginals for {} regression coefficients",
                self.covariates.dim(),
                self.p()
            )));
        }
        self.mechanism.validate(self.p())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The same model with the mechanism's outcome coefficients set to zero.
    pub fn with_mar_mechanism(&self) -> Self {
        let mut m = self.clone();
        m.mechanism.psi.iter_mut().for_each(|v| *v = 0.0);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn json_round_trip() {
        for m in [presets::example1(), presets::example2(), presets::example3(), presets::real_data_skew(presets::RealScenario::A)] {
            let text = m.to_json().unwrap();
            assert_eq!(ModelSpec::from_json(&text).unwrap(), m);
        }
    }

    #[test]
    fn documented_schema_parses() {
        let text = r#"{
          "regression": {"beta0": 2.0, "beta": [-2.0], "sigma_y": 2.0},
          "covariates": [{"type": "normal", "mean": 0.0, "sd": 4.0}],
          "mechanism": {"w_terms": ["one", {"x": 0}], "z_terms": ["y"],
                        "lambda": [-2.0, 0.4], "psi": [-0.15]},
          "link": "logit"
        }"#;
        assert_eq!(ModelSpec::from_json(text).unwrap(), presets::example1());
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let bad_sigma = r#"{"regression": {"beta0": 0, "beta": [1], "sigma_y": 0},
          "covariates": [{"type": "normal", "mean": 0, "sd": 1}],
          "mechanism": {"w_terms": ["one"], "z_terms": ["y"], "lambda": [0], "psi": [0]},
          "link": "probit"}"#;
        assert!(ModelSpec::from_json(bad_sigma).is_err());
        let bad_len = r#"{"regression": {"beta0": 0, "beta": [1], "sigma_y": 1},
          "covariates": [{"type": "normal", "mean": 0, "sd": 1}],
          "mechanism": {"w_terms": ["one", {"x": 0}], "z_terms": ["y"], "lambda": [0], "psi": [0]},
          "link": "cloglog"}"#;
        assert!(ModelSpec::from_json(bad_len).is_err());
    }

    #[test]
    fn regression_mean() {
        let r = RegressionSpec::new(2.0, vec![-2.0, 2.0], 2.0);
        assert_eq!(r.mean(&[1.0, 3.0]), 6.0);
    }
}
