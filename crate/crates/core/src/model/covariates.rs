//! Covariate distributions: independent per-dimension marginals.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::link::{std_normal_cdf, std_normal_pdf};
use crate::quadrature::rules::adaptive_simpson;

/// Truncation half-width, in standard deviations, for Normal quadrature ranges.
pub const NORMAL_TRUNCATION_SD: f64 = 10.0;
/// Truncation half-width, in scale units, for skew-normal quadrature ranges.
pub const SKEW_TRUNCATION_SCALE: f64 = 10.0;
/// Padding, in sample standard deviations, around an empirical sample's range.
pub const EMPIRICAL_PADDING_SD: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Azzalini skew-normal with location `xi`, scale `omega` and shape `alpha`.
    SkewNormal {
        location: f64,
        scale: f64,
        shape: f64,
    },
    /// Observed values, resampled with replacement. Expectations use a Gaussian kernel
    /// density estimate with Silverman's bandwidth.
    Empirical {
        sample: Vec<f64>,
    },
}

impl Marginal {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Marginal::Normal { mean, sd }
    }

    pub fn skew_normal(location: f64, scale: f64, shape: f64) -> Self {
        Marginal::SkewNormal {
            location,
            scale,
            shape,
        }
    }

    pub fn empirical(mut sample: Vec<f64>) -> Self {
        sample.sort_by(f64::total_cmp);
        Marginal::Empirical { sample }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Marginal::Normal { mean, sd } => {
                if !mean.is_finite() || !(*sd > 0.0) || !sd.is_finite() {
                    return Err(Error::Spec(format!("normal marginal needs sd > 0, got {sd}")));
                }
            }
            Marginal::SkewNormal {
                location,
                scale,
                shape,
            } => {
                if !location.is_finite() || !shape.is_finite() || !(*scale > 0.0) {
                    return Err(Error::Spec(format!(
                        "skew-normal marginal needs scale > 0, got {scale}"
                    )));
                }
            }
            Marginal::Empirical { sample } => {
                if sample.is_empty() {
                    return Err(Error::Spec("empirical marginal has an empty sample".into()));
                }
                if sample.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Spec("empirical sample contains non-finite values".into()));
                }
                if sample.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::Spec("empirical sample must be sorted".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::Normal { mean, .. } => *mean,
            Marginal::SkewNormal {
                location,
                scale,
                shape,
            } => location + scale * skew_delta(*shape) * (2.0 / PI).sqrt(),
            Marginal::Empirical { sample } => sample.iter().sum::<f64>() / sample.len() as f64,
        }
    }

    pub fn sd(&self) -> f64 {
        match self {
            Marginal::Normal { sd, .. } => *sd,
            Marginal::SkewNormal { scale, shape, .. } => {
                let d = skew_delta(*shape);
                scale * (1.0 - 2.0 * d * d / PI).sqrt()
            }
            Marginal::Empirical { sample } => sample_sd(sample),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => std_normal_pdf((x - mean) / sd) / sd,
            Marginal::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let t = (x - location) / scale;
                2.0 / scale * std_normal_pdf(t) * std_normal_cdf(shape * t)
            }
            Marginal::Empirical { sample } => kde_density(sample, x),
        }
    }

    /// Length scale over which the density varies; sets the quadrature panel width.
    pub fn smoothness_scale(&self) -> f64 {
        match self {
            Marginal::Normal { sd, .. } => *sd,
            Marginal::SkewNormal { scale, shape, .. } => scale / shape.abs().max(1.0),
            Marginal::Empirical { sample } => 1.5 * kde_bandwidth(sample),
        }
    }

    /// Range outside of which the marginal carries negligible mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Marginal::Normal { mean, sd } => (
                mean - NORMAL_TRUNCATION_SD * sd,
                mean + NORMAL_TRUNCATION_SD * sd,
            ),
            Marginal::SkewNormal {
                location, scale, ..
            } => (
                location - SKEW_TRUNCATION_SCALE * scale,
                location + SKEW_TRUNCATION_SCALE * scale,
            ),
            Marginal::Empirical { sample } => {
                let pad = EMPIRICAL_PADDING_SD * sample_sd(sample).max(kde_bandwidth(sample));
                (sample[0] - pad, sample[sample.len() - 1] + pad)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => std_normal_cdf((x - mean) / sd),
            Marginal::SkewNormal { .. } => {
                let (lo, hi) = self.support();
                if x <= lo {
                    0.0
                } else {
                    adaptive_simpson(|t| self.density(t), lo, x.min(hi), 1e-12).min(1.0)
                }
            }
            Marginal::Empirical { sample } => {
                let h = kde_bandwidth(sample);
                sample.iter().map(|s| std_normal_cdf((x - s) / h)).sum::<f64>() / sample.len() as f64
            }
        }
    }

    /// Quantile of the marginal; the empirical case uses the sample quantile.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => {
                mean + sd * crate::quadrature::rules::bisect(|t| std_normal_cdf(t) - p, -40.0, 40.0, 1e-13)
            }
            Marginal::SkewNormal { .. } => {
                let (lo, hi) = self.support();
                crate::quadrature::rules::bisect(|t| self.cdf(t) - p, lo, hi, 1e-10)
            }
            Marginal::Empirical { sample } => sample_quantile(sample, p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Marginal::SkewNormal {
                location,
                scale,
                shape,
            } => {
                let d = skew_delta(*shape);
                let u0: f64 = rng.sample(StandardNormal);
                let u1: f64 = rng.sample(StandardNormal);
                location + scale * (d * u0.abs() + (1.0 - d * d).sqrt() * u1)
            }
            Marginal::Empirical { sample } => sample[rng.random_range(0..sample.len())],
        }
    }
}

fn skew_delta(shape: f64) -> f64 {
    shape / (1.0 + shape * shape).sqrt()
}

fn sample_sd(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    if sample.len() < 2 {
        return 0.0;
    }
    let mean = sample.iter().sum::<f64>() / n;
    (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule-of-thumb bandwidth.
pub(crate) fn kde_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let sd = sample_sd(sorted);
    let iqr = sample_quantile(sorted, 0.75) - sample_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // single distinct value
        1e-3 * sorted[0].abs().max(1.0)
    }
}

fn kde_density(sorted: &[f64], x: f64) -> f64 {
    kde_density_with(sorted, kde_bandwidth(sorted), x)
}

pub(crate) fn kde_density_with(sorted: &[f64], h: f64, x: f64) -> f64 {
    let lo = sorted.partition_point(|&v| v < x - 9.0 * h);
    let hi = sorted.partition_point(|&v| v <= x + 9.0 * h);
    let sum: f64 = sorted[lo..hi].iter().map(|s| std_normal_pdf((x - s) / h)).sum();
    sum / (sorted.len() as f64 * h)
}

/// Independent covariate marginals, one per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateDistribution {
    pub marginals: Vec<Marginal>,
}

impl CovariateDistribution {
    pub fn new(marginals: Vec<Marginal>) -> Self {
        Self { marginals }
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::Spec("at least one covariate dimension is required".into()));
        }
        self.marginals.iter().try_for_each(Marginal::validate)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.marginals.iter().zip(x).map(|(m, v)| m.density(*v)).product()
    }

    pub fn means(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::mean).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (slot, m) in out.iter_mut().zip(&self.marginals) {
            *slot = m.sample(rng);
        }
    }
}
