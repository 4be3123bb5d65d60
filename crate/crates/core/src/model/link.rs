//! Binary-response link functions.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t * FRAC_1_SQRT_2)
}

fn log_std_normal_cdf(t: f64) -> f64 {
    if t > -30.0 {
        std_normal_cdf(t).ln()
    } else {
        // Mills-ratio asymptotics; erfc underflows near t = -38.
        let t2 = t * t;
        -0.5 * t2 - (-t).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / t2 + 3.0 / (t2 * t2)).ln()
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Logit,
    Probit,
    #[serde(alias = "cloglog", rename = "cloglog")]
    CLogLog,
}

impl LinkFunction {
    /// Inverse link `g^{-1}(eta)`, a probability in (0, 1).
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => expit(eta),
            LinkFunction::Probit => std_normal_cdf(eta),
            LinkFunction::CLogLog => -(-eta.exp()).exp_m1(),
        }
    }

    /// `1 - g^{-1}(eta)` without cancellation.
    pub fn inverse_complement(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => expit(-eta),
            LinkFunction::Probit => std_normal_cdf(-eta),
            LinkFunction::CLogLog => (-eta.exp()).exp(),
        }
    }

    /// `log g^{-1}(eta)`.
    pub fn log_mu(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => -softplus(-eta),
            LinkFunction::Probit => log_std_normal_cdf(eta),
            LinkFunction::CLogLog => {
                let e = eta.exp();
                if e < 1e-300 {
                    eta
                } else {
                    (-(-e).exp_m1()).ln()
                }
            }
        }
    }

    /// `log(1 - g^{-1}(eta))`.
    pub fn log_one_minus_mu(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => -softplus(eta),
            LinkFunction::Probit => log_std_normal_cdf(-eta),
            LinkFunction::CLogLog => -eta.exp(),
        }
    }

    /// First derivative of the inverse link.
    pub fn d_inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => {
                let mu = expit(eta);
                mu * (1.0 - mu)
            }
            LinkFunction::Probit => std_normal_pdf(eta),
            LinkFunction::CLogLog => {
                let e = eta.exp();
                e * (-e).exp()
            }
        }
    }

    /// Second derivative of the inverse link.
    pub fn d2_inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => {
                let mu = expit(eta);
                mu * (1.0 - mu) * (1.0 - 2.0 * mu)
            }
            LinkFunction::Probit => -eta * std_normal_pdf(eta),
            LinkFunction::CLogLog => {
                let e = eta.exp();
                e * (-e).exp() * (1.0 - e)
            }
        }
    }

    /// Per-observation Bernoulli score and curvature factors at `eta` for outcome mean `target`.
    ///
    /// Returns `(u, h)` where the derivative of `target*log(mu) + (1-target)*log(1-mu)` with
    /// respect to `eta` is `u`, and its negative second derivative is `h`. For the logit link
    /// these reduce to `target - mu` and `mu(1-mu)`.
    pub fn bernoulli_derivatives(self, eta: f64, target: f64) -> (f64, f64) {
        match self {
            LinkFunction::Logit => {
                let mu = expit(eta);
                (target - mu, mu * (1.0 - mu))
            }
            _ => {
                let mu = self.inverse(eta).clamp(1e-300, 1.0);
                let one_minus = self.inverse_complement(eta).clamp(1e-300, 1.0);
                let v = mu * one_minus;
                let d1 = self.d_inverse(eta);
                let d2 = self.d2_inverse(eta);
                let ratio = d1 / v;
                let u = (target - mu) * ratio;
                // d/deta [d1 / v] with v' = d1 (1 - 2 mu)
                let dratio = (d2 * v - d1 * d1 * (one_minus - mu)) / (v * v);
                let h = d1 * ratio - (target - mu) * dratio;
                (u, h)
            }
        }
    }

    /// Expected (Fisher) curvature `g'^2 / (mu (1 - mu))` at `eta`.
    pub fn fisher_weight(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => {
                let mu = expit(eta);
                mu * (1.0 - mu)
            }
            _ => {
                let mu = self.inverse(eta).clamp(1e-300, 1.0);
                let one_minus = self.inverse_complement(eta).clamp(1e-300, 1.0);
                let d1 = self.d_inverse(eta);
                d1 * d1 / (mu * one_minus)
            }
        }
    }

    /// Score factor `g' / (mu (1 - mu))`, identically one for the logit link.
    pub fn score_ratio(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Logit => 1.0,
            _ => {
                let mu = self.inverse(eta).clamp(1e-300, 1.0);
                let one_minus = self.inverse_complement(eta).clamp(1e-300, 1.0);
                self.d_inverse(eta) / (mu * one_minus)
            }
        }
    }
}
