//! Missing-data mechanism `Pr(M=1 | x, y) = g^{-1}(w'lambda + z'psi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::link::LinkFunction;

/// A term of the `y`-free feature vector `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WTerm {
    One,
    /// Covariate `x_j` (zero-based).
    X(usize),
}

/// A term of the outcome-dependent feature vector `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZTerm {
    Y,
    /// Interaction `x_j * y` (zero-based).
    Xy(usize),
}

impl WTerm {
    #[inline]
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            WTerm::One => 1.0,
            WTerm::X(j) => x[j],
        }
    }
}

impl ZTerm {
    #[inline]
    pub fn eval(self, x: &[f64], y: f64) -> f64 {
        match self {
            ZTerm::Y => y,
            ZTerm::Xy(j) => x[j] * y,
        }
    }
}

/// Ordered feature terms of a mechanism, without coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermShape {
    pub w_terms: Vec<WTerm>,
    pub z_terms: Vec<ZTerm>,
}

impl TermShape {
    /// `w = (1, x_1, ..., x_p)`, `z = (y)`.
    pub fn scenario1(p: usize) -> Self {
        let mut w_terms = vec![WTerm::One];
        w_terms.extend((0..p).map(WTerm::X));
        Self {
            w_terms,
            z_terms: vec![ZTerm::Y],
        }
    }

    /// `w = (1, x_1)`, `z = (x_1 y, y)`.
    pub fn scenario2() -> Self {
        Self {
            w_terms: vec![WTerm::One, WTerm::X(0)],
            z_terms: vec![ZTerm::Xy(0), ZTerm::Y],
        }
    }

    pub fn q(&self) -> usize {
        self.w_terms.len()
    }

    pub fn s(&self) -> usize {
        self.z_terms.len()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.w_terms.first() != Some(&WTerm::One) {
            return Err(Error::Spec("the first w term must be the intercept".into()));
        }
        if self.w_terms[1..].contains(&WTerm::One) {
            return Err(Error::Spec("the intercept may appear only once in w".into()));
        }
        if self.z_terms.is_empty() {
            return Err(Error::Spec("at least one z term is required".into()));
        }
        for t in &self.w_terms {
            if let WTerm::X(j) = t {
                if *j >= p {
                    return Err(Error::Spec(format!("w term x{} references dimension >= p={p}", j + 1)));
                }
            }
        }
        for t in &self.z_terms {
            if let ZTerm::Xy(j) = t {
                if *j >= p {
                    return Err(Error::Spec(format!("z term x{}*y references dimension >= p={p}", j + 1)));
                }
            }
        }
        Ok(())
    }

    /// Writes `(w, z)` (or `w` alone when `include_z` is false) into `out`.
    #[inline]
    pub fn fill(&self, x: &[f64], y: f64, include_z: bool, out: &mut [f64]) {
        let q = self.w_terms.len();
        for (slot, t) in out.iter_mut().zip(&self.w_terms) {
            *slot = t.eval(x);
        }
        if include_z {
            for (slot, t) in out[q..].iter_mut().zip(&self.z_terms) {
                *slot = t.eval(x, y);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub link: LinkFunction,
    #[serde(flatten)]
    pub shape: TermShape,
    pub lambda: Vec<f64>,
    pub psi: Vec<f64>,
}

impl MechanismSpec {
    pub fn new(link: LinkFunction, shape: TermShape, lambda: Vec<f64>, psi: Vec<f64>) -> Self {
        Self {
            link,
            shape,
            lambda,
            psi,
        }
    }

    pub fn q(&self) -> usize {
        self.shape.q()
    }

    pub fn s(&self) -> usize {
        self.shape.s()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.shape.validate(p)?;
        if self.lambda.len() != self.q() {
            return Err(Error::Spec(format!(
                "lambda has {} entries but there are {} w terms",
                self.lambda.len(),
                self.q()
            )));
        }
        if self.psi.len() != self.s() {
            return Err(Error::Spec(format!(
                "psi has {} entries but there are {} z terms",
                self.psi.len(),
                self.s()
            )));
        }
        if self.lambda.iter().chain(&self.psi).any(|v| !v.is_finite()) {
            return Err(Error::Spec("mechanism coefficients must be finite".into()));
        }
        Ok(())
    }

    /// True when the mechanism is missing at random (`psi = 0`).
    pub fn is_mar(&self) -> bool {
        self.psi.iter().all(|v| *v == 0.0)
    }

    /// Feature vectors `(w, z)` at `(x, y)`.
    pub fn eval_features(&self, x: &[f64], y: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.shape.validate(x.len())?;
        let w = self.shape.w_terms.iter().map(|t| t.eval(x)).collect();
        let z = self.shape.z_terms.iter().map(|t| t.eval(x, y)).collect();
        Ok((w, z))
    }

    /// `w'lambda`, the part of the predictor that does not involve `y`.
    #[inline]
    pub fn w_predictor(&self, x: &[f64]) -> f64 {
        self.shape
            .w_terms
            .iter()
            .zip(&self.lambda)
            .map(|(t, c)| t.eval(x) * c)
            .sum()
    }

    #[inline]
    pub fn linear_predictor(&self, x: &[f64], y: f64) -> f64 {
        self.w_predictor(x)
            + self
                .shape
                .z_terms
                .iter()
                .zip(&self.psi)
                .map(|(t, c)| t.eval(x, y) * c)
                .sum::<f64>()
    }

    /// `Pr(M = 1 | X = x, Y = y)`.
    #[inline]
    pub fn prob(&self, x: &[f64], y: f64) -> f64 {
        self.link.inverse(self.linear_predictor(x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::link::expit;

    #[test]
    fn scenario_features() {
        let s2 = MechanismSpec::new(LinkFunction::Logit, TermShape::scenario2(), vec![0.0; 2], vec![0.0; 2]);
        assert_eq!(s2.eval_features(&[3.0], 2.0).unwrap(), (vec![1.0, 3.0], vec![6.0, 2.0]));

        let s1 = MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(2), vec![0.0; 3], vec![0.0]);
        assert_eq!(s1.eval_features(&[1.0, -1.0], 0.0).unwrap(), (vec![1.0, 1.0, -1.0], vec![0.0]));

        let s1 = MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(1), vec![0.0; 2], vec![0.0]);
        assert_eq!(s1.eval_features(&[0.0], 5.0).unwrap(), (vec![1.0, 0.0], vec![5.0]));
    }

    #[test]
    fn out_of_range_term_is_rejected() {
        let m = MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(2), vec![0.0; 3], vec![0.0]);
        assert!(matches!(m.eval_features(&[1.0], 0.0), Err(Error::Spec(_))));
        assert!(m.validate(1).is_err());
        assert!(m.validate(2).is_ok());
    }

    #[test]
    fn probabilities() {
        let zero = MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(1), vec![0.0, 0.0], vec![0.0]);
        assert_eq!(zero.prob(&[1.0], 1.0), 0.5);
        let probit = MechanismSpec { link: LinkFunction::Probit, ..zero };
        assert!((probit.prob(&[1.0], 1.0) - 0.5).abs() < 1e-15);

        let ex1 = MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(1), vec![-2.0, 0.4], vec![-0.15]);
        let p = ex1.prob(&[0.0], 2.0);
        assert!((p - expit(-2.3)).abs() < 1e-15);
        assert!((p - 0.091_122_961).abs() < 1e-9);
    }

    #[test]
    fn shape_validation() {
        let bad = TermShape {
            w_terms: vec![WTerm::X(0)],
            z_terms: vec![ZTerm::Y],
        };
        assert!(bad.validate(1).is_err());
        let no_z = TermShape {
            w_terms: vec![WTerm::One],
            z_terms: vec![],
        };
        assert!(no_z.validate(1).is_err());
    }

    #[test]
    fn json_term_syntax() {
        let shape: TermShape =
            serde_json::from_str(r#"{"w_terms":["one",{"x":0}],"z_terms":[{"xy":0},"y"]}"#).unwrap();
        assert_eq!(shape, TermShape::scenario2());
    }
}
