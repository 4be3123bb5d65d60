//! Deterministic expectations over `(X, Y)`.
//!
//! Every population-level quantity (missingness probabilities, the recovered/observed joint
//! laws, design criteria) is a weighted sum over a [`Grid`]. Unrestricted Normal covariates use
//! Gauss-Hermite nodes; covariates restricted to intervals use Gauss-Legendre panels on each
//! interval so the region indicator never cuts through a panel. Skew-normal and empirical
//! covariates use the same panels on a truncated range, with the panel width tied to how fast
//! their density varies. `Y | X` always uses Gauss-Hermite nodes.

pub mod grid;
pub mod rules;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::link::std_normal_pdf;
use crate::model::{ModelSpec, Region};

pub use grid::{Grid, QuadratureConfig};

/// `E[f(X, Y) 1{X in region}]` with the default grid.
pub fn expect<F: FnMut(&[f64], f64) -> f64>(f: F, region: &Region, model: &ModelSpec) -> Result<f64> {
    Grid::build(model, region, &QuadratureConfig::default())?.expect(f)
}

/// `Pr(M = 1)`.
pub fn prob_missing(model: &ModelSpec) -> f64 {
    prob_missing_with(model, &QuadratureConfig::default())
}

pub fn prob_missing_with(model: &ModelSpec, cfg: &QuadratureConfig) -> f64 {
    let grid = Grid::build(model, &Region::unbounded(model.p()), cfg).expect("unbounded region is valid");
    let mut total = 0.0;
    grid.for_each(|x, y, w| total += w * model.mechanism.prob(x, y));
    total
}

/// `Pr(M = 0, X in region)`.
pub fn prob_mo(model: &ModelSpec, region: &Region) -> Result<f64> {
    Ok(RegionProbabilities::compute(model, region)?.prob_mo)
}

/// `Pr(M = 1, X in region)`.
pub fn prob_mr(model: &ModelSpec, region: &Region) -> Result<f64> {
    Ok(RegionProbabilities::compute(model, region)?.prob_mr)
}

/// The three probabilities every design quantity is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProbabilities {
    /// `Pr(M = 1)`.
    pub prob_missing: f64,
    /// `Pr(M = 0, X in C)`.
    pub prob_mo: f64,
    /// `Pr(M = 1, X in C)`.
    pub prob_mr: f64,
}

impl RegionProbabilities {
    pub fn compute(model: &ModelSpec, region: &Region) -> Result<Self> {
        let cfg = QuadratureConfig::default();
        let grid = Grid::build(model, region, &cfg)?;
        Ok(Self::from_grid(model, &grid, prob_missing_with(model, &cfg)))
    }

    /// Region probabilities from a prebuilt grid and a known `Pr(M = 1)`.
    pub fn from_grid(model: &ModelSpec, grid: &Grid, prob_missing: f64) -> Self {
        let mut mr = 0.0;
        let mut mo = 0.0;
        grid.for_each(|x, y, w| {
            let eta = model.mechanism.linear_predictor(x, y);
            mr += w * model.mechanism.link.inverse(eta);
            mo += w * model.mechanism.link.inverse_complement(eta);
        });
        Self {
            prob_missing,
            prob_mo: mo,
            prob_mr: mr,
        }
    }
}

/// Joint densities of `(X_R, Y_R)` and `(X_O, Y_O)`, the recovered and observed parts of the
/// augmented data.
#[derive(Clone, Debug)]
pub struct JointDensities<'a> {
    model: &'a ModelSpec,
    region: &'a Region,
    pub probabilities: RegionProbabilities,
}

impl<'a> JointDensities<'a> {
    pub fn new(model: &'a ModelSpec, region: &'a Region) -> Result<Self> {
        let probabilities = RegionProbabilities::compute(model, region)?;
        if !(probabilities.prob_mr > 0.0) {
            return Err(Error::DegenerateDesign(
                "Pr(M=1, X in C) is zero; the recovered law is undefined".into(),
            ));
        }
        if !(probabilities.prob_mo > 0.0) {
            return Err(Error::DegenerateDesign(
                "Pr(M=0, X in C) is zero; the observed law is undefined".into(),
            ));
        }
        Ok(Self {
            model,
            region,
            probabilities,
        })
    }

    fn base(&self, x: &[f64], y: f64) -> f64 {
        let sigma = self.model.regression.sigma_y;
        let fy = std_normal_pdf((y - self.model.regression.mean(x)) / sigma) / sigma;
        fy * self.model.covariates.density(x)
    }

    /// Density of `(X_R, Y_R)` at `(x, y)`; zero outside the region.
    pub fn recovered(&self, x: &[f64], y: f64) -> f64 {
        if !self.region.contains(x) {
            return 0.0;
        }
        self.model.mechanism.prob(x, y) * self.base(x, y) / self.probabilities.prob_mr
    }

    /// Density of `(X_O, Y_O)` at `(x, y)`; zero outside the region.
    pub fn observed(&self, x: &[f64], y: f64) -> f64 {
        if !self.region.contains(x) {
            return 0.0;
        }
        let eta = self.model.mechanism.linear_predictor(x, y);
        self.model.mechanism.link.inverse_complement(eta) * self.base(x, y) / self.probabilities.prob_mo
    }
}

pub fn joint_density_r(model: &ModelSpec, region: &Region, x: &[f64], y: f64) -> Result<f64> {
    Ok(JointDensities::new(model, region)?.recovered(x, y))
}

pub fn joint_density_o(model: &ModelSpec, region: &Region, x: &[f64], y: f64) -> Result<f64> {
    Ok(JointDensities::new(model, region)?.observed(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::link::expit;
    use crate::model::{generate_dataset, LinkFunction};
    use crate::presets;
    use crate::quadrature::rules::adaptive_simpson;

    #[test]
    fn total_mass_and_linearity() {
        let m = presets::example1();
        let r = Region::unbounded(1);
        assert!((expect(|_, _| 1.0, &r, &m).unwrap() - 1.0).abs() < 1e-8);
        assert!((expect(|_, y| y, &r, &m).unwrap() - 2.0).abs() < 1e-6);
        let m2 = presets::example2();
        // E[Y] = 2 - 2*0 + 2*2
        assert!((expect(|_, y| y, &Region::unbounded(2), &m2).unwrap() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_integrand_reports_location() {
        let m = presets::example1();
        let err = expect(|x, _| if x[0] > 0.0 { f64::NAN } else { 0.0 }, &Region::unbounded(1), &m).unwrap_err();
        match err {
            Error::NonFinite { x, .. } => assert!(x[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_region_identities() {
        let m = presets::example1();
        let pm = prob_missing(&m);
        let probs = RegionProbabilities::compute(&m, &Region::unbounded(1)).unwrap();
        assert!((probs.prob_mr - pm).abs() < 1e-12);
        assert!((probs.prob_mr + probs.prob_mo - 1.0).abs() < 1e-10);
    }

    #[test]
    fn half_line_splits_mass() {
        let m = presets::example1();
        let probs = RegionProbabilities::compute(&m, &Region::cuboid(&[(0.0, f64::INFINITY)])).unwrap();
        assert!((probs.prob_mr + probs.prob_mo - 0.5).abs() < 1e-6);
    }

    #[test]
    fn region_outside_support_has_no_mass() {
        let m = presets::example1();
        let probs = RegionProbabilities::compute(&m, &Region::cuboid(&[(100.0, 200.0)])).unwrap();
        assert_eq!(probs.prob_mr, 0.0);
        assert_eq!(probs.prob_mo, 0.0);
        assert!(JointDensities::new(&m, &Region::cuboid(&[(100.0, 200.0)])).is_err());
    }

    #[test]
    fn missing_fraction_matches_monte_carlo() {
        let m = presets::example1();
        let pm = prob_missing(&m);
        let n = 1_000_000;
        let g = generate_dataset(&m, n, 2024);
        let frac = g.dataset.n_miss() as f64 / n as f64;
        let se = (pm * (1.0 - pm) / n as f64).sqrt();
        assert!((frac - pm).abs() < 4.0 * se, "quadrature {pm} vs mc {frac}");
        // Reference value from an independent adaptive integration.
        assert!((pm - 0.244_136_926_8).abs() < 1e-6, "{pm}");
    }

    #[test]
    fn doubling_orders_changes_little() {
        for m in [
            presets::example1(),
            presets::example1_probit(),
            presets::example2(),
            presets::example3(),
            presets::example4(),
            presets::real_data_skew(presets::RealScenario::A),
        ] {
            let cfg = QuadratureConfig::default();
            let a = prob_missing_with(&m, &cfg);
            let b = prob_missing_with(&m, &cfg.refined());
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn region_probabilities_grow_with_region() {
        let m = presets::example1();
        let mut last = (0.0, 0.0);
        for hw in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let probs = RegionProbabilities::compute(&m, &Region::cuboid(&[(1.0 - hw, 1.0 + hw)])).unwrap();
            assert!(probs.prob_mr >= last.0 && probs.prob_mo >= last.1);
            last = (probs.prob_mr, probs.prob_mo);
        }
    }

    #[test]
    fn joint_densities_normalise() {
        let m = presets::example1();
        let region = Region::cuboid(&[(-2.0, 5.0)]);
        let jd = JointDensities::new(&m, &region).unwrap();
        let sigma = m.regression.sigma_y;
        for which in 0..2 {
            let mass = adaptive_simpson(
                |x| {
                    let mu = m.regression.mean(&[x]);
                    adaptive_simpson(
                        |y| if which == 0 { jd.recovered(&[x], y) } else { jd.observed(&[x], y) },
                        mu - 12.0 * sigma,
                        mu + 12.0 * sigma,
                        1e-11,
                    )
                },
                -2.0,
                5.0,
                1e-10,
            );
            assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        }
        assert_eq!(jd.recovered(&[6.0], 0.0), 0.0);
    }

    #[test]
    fn mar_recovered_density_is_proportional_to_outcome_law() {
        let m = presets::type_one_scenario1();
        let region = Region::cuboid(&[(-1.0, 3.0)]);
        let jd = JointDensities::new(&m, &region).unwrap();
        let x = [0.7];
        let mu = m.regression.mean(&x);
        let sigma = m.regression.sigma_y;
        let ratios: Vec<f64> = [-3.0, -1.0, 0.0, 2.5]
            .iter()
            .map(|&t| {
                let y = mu + t * sigma;
                jd.recovered(&x, y) / (std_normal_pdf(t) / sigma)
            })
            .collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_ratio_formula() {
        let m = presets::example1();
        let region = Region::cuboid(&[(-3.0, 4.0)]);
        let jd = JointDensities::new(&m, &region).unwrap();
        let pi = expit(-2.3);
        let expected = pi / (1.0 - pi) * jd.probabilities.prob_mo / jd.probabilities.prob_mr;
        let ratio = jd.recovered(&[0.0], 2.0) / jd.observed(&[0.0], 2.0);
        assert!((ratio / expected - 1.0).abs() < 1e-12);
        assert_eq!(m.mechanism.link, LinkFunction::Logit);
    }
}
