//! The worked example models used throughout the documentation and test suites.

use crate::model::{
    CovariateDistribution, LinkFunction, Marginal, MechanismSpec, ModelSpec, RegressionSpec,
    TermShape,
};

fn build(reg: RegressionSpec, cov: Vec<Marginal>, mech: MechanismSpec) -> ModelSpec {
    ModelSpec::new(reg, CovariateDistribution::new(cov), mech).expect("preset models are valid")
}

/// `Y|x ~ N(2 - 2x, 4)`, `X ~ N(0, 16)`, logit mechanism `-2 + 0.4x - 0.15y` (about 30% missing).
pub fn example1() -> ModelSpec {
    build(
        RegressionSpec::new(2.0, vec![-2.0], 2.0),
        vec![Marginal::normal(0.0, 4.0)],
        MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(1), vec![-2.0, 0.4], vec![-0.15]),
    )
}

/// Example 1 regression with the probit mechanism `Phi(-1.14 + 0.23x - 0.09y)`.
pub fn example1_probit() -> ModelSpec {
    build(
        RegressionSpec::new(2.0, vec![-2.0], 2.0),
        vec![Marginal::normal(0.0, 4.0)],
        MechanismSpec::new(
            LinkFunction::Probit,
            TermShape::scenario1(1),
            vec![-1.14, 0.23],
            vec![-0.09],
        ),
    )
}

/// Two covariates: `Y|x ~ N(2 - 2x1 + 2x2, 4)`, `X1 ~ N(0,16)`, `X2 ~ N(2,4)`.
pub fn example2() -> ModelSpec {
    build(
        RegressionSpec::new(2.0, vec![-2.0, 2.0], 2.0),
        vec![Marginal::normal(0.0, 4.0), Marginal::normal(2.0, 2.0)],
        MechanismSpec::new(
            LinkFunction::Logit,
            TermShape::scenario1(2),
            vec![-2.0, 0.4, 0.2],
            vec![-0.15],
        ),
    )
}

fn interaction_model(lambda: [f64; 2], psi_xy: f64, psi_y: f64) -> ModelSpec {
    build(
        RegressionSpec::new(2.0, vec![-0.5], 2.0),
        vec![Marginal::normal(1.0, 2.0)],
        MechanismSpec::new(
            LinkFunction::Logit,
            TermShape::scenario2(),
            lambda.to_vec(),
            vec![psi_xy, psi_y],
        ),
    )
}

/// Interaction mechanism `-1 - 0.5x + 0.1y + 0.05xy`.
pub fn example3() -> ModelSpec {
    interaction_model([-1.0, -0.5], 0.05, 0.1)
}

/// Interaction mechanism `-2 + 0.5x + 0.04y + 0.03xy`.
pub fn example4() -> ModelSpec {
    interaction_model([-2.0, 0.5], 0.03, 0.04)
}

/// MAR version of Example 1 analysed with `z = (y)`.
pub fn type_one_scenario1() -> ModelSpec {
    example1().with_mar_mechanism()
}

/// MAR version of Example 1 analysed with `z = (x y, y)`.
pub fn type_one_scenario2() -> ModelSpec {
    build(
        RegressionSpec::new(2.0, vec![-2.0], 2.0),
        vec![Marginal::normal(0.0, 4.0)],
        MechanismSpec::new(LinkFunction::Logit, TermShape::scenario2(), vec![-2.0, 0.4], vec![0.0, 0.0]),
    )
}

/// Mechanism scenarios for the income/maths-score application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RealScenario {
    A,
    B,
}

impl RealScenario {
    /// `(alpha0, alpha1, alpha2)` of the logit mechanism `alpha0 + alpha1 x + alpha2 y`.
    pub fn coefficients(self) -> [f64; 3] {
        match self {
            RealScenario::A => [50.0, -5.0, 0.016],
            RealScenario::B => [-52.0, 5.0, -0.017],
        }
    }

    pub fn mechanism(self) -> MechanismSpec {
        let [a0, a1, a2] = self.coefficients();
        MechanismSpec::new(LinkFunction::Logit, TermShape::scenario1(1), vec![a0, a1], vec![a2])
    }
}

impl std::str::FromStr for RealScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(RealScenario::A),
            "B" | "b" => Ok(RealScenario::B),
            other => Err(format!("unknown scenario '{other}', expected A or B")),
        }
    }
}

/// Regression `69.06 + 3.14 x`, `sigma = 13.14`, skew-normal log income `(11.3, 1.4, -3)`.
pub fn real_data_skew(scenario: RealScenario) -> ModelSpec {
    build(
        RegressionSpec::new(69.06, vec![3.14], 13.14),
        vec![Marginal::skew_normal(11.3, 1.4, -3.0)],
        scenario.mechanism(),
    )
}
