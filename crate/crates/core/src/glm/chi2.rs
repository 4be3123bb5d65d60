//! Central and noncentral chi-square distribution functions.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// `Pr(chi2_df <= x)`.
pub fn central_chi2_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(0.5 * df, 0.5 * x)
}

/// `Pr(chi2_df > x)`, accurate in the upper tail.
pub fn central_chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(0.5 * df, 0.5 * x)
}

/// Inverse of [`central_chi2_cdf`] by bisection to `1e-10`.
pub fn central_chi2_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0) {
        return Err(Error::Spec(format!("chi-square quantile needs p in (0,1) and df > 0, got p={p}, df={df}")));
    }
    let mut hi = df.max(1.0);
    while central_chi2_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if central_chi2_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Remaining Poisson weight below which the mixture series stops.
const SERIES_TAIL: f64 = 1e-12;

/// `Pr(chi2_df(ncp) <= x)` as a Poisson(`ncp/2`) mixture of central chi-squares, summed outward
/// from the Poisson mode.
pub fn noncentral_chi2_cdf(x: f64, df: f64, ncp: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if !(ncp > 0.0) {
        return central_chi2_cdf(x, df);
    }
    let mu = 0.5 * ncp;
    let log_pmf = |j: f64| -mu + j * mu.ln() - ln_gamma(j + 1.0);
    let mode = mu.floor();
    let mut weight = 0.0;
    let mut sum = 0.0;

    let mut j = mode;
    loop {
        let w = log_pmf(j).exp();
        weight += w;
        sum += w * central_chi2_cdf(x, df + 2.0 * j);
        if j == 0.0 || w < 1e-300 {
            break;
        }
        j -= 1.0;
    }
    let mut j = mode + 1.0;
    while 1.0 - weight > SERIES_TAIL {
        let w = log_pmf(j).exp();
        weight += w;
        sum += w * central_chi2_cdf(x, df + 2.0 * j);
        if w == 0.0 && j > mu {
            break;
        }
        j += 1.0;
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::function::erf::erf;

    #[test]
    fn one_df_against_erf() {
        for x in [0.01, 0.5, 1.0, 3.84, 9.0, 20.0] {
            let via_erf = erf((x / 2.0f64).sqrt());
            assert!((central_chi2_cdf(x, 1.0) - via_erf).abs() < 1e-9, "{x}: {}", central_chi2_cdf(x, 1.0) - via_erf);
        }
        let q = central_chi2_quantile(0.95, 1.0).unwrap();
        assert!((q - 3.841_458_820_694_124).abs() < 1e-8, "{q}");
        assert!((erf((q / 2.0).sqrt()) - 0.95).abs() < 1e-10);
    }

    #[test]
    fn two_df_closed_form() {
        for x in [0.3, 2.0, 7.5] {
            assert!((central_chi2_cdf(x, 2.0) - (1.0 - (-x / 2.0f64).exp())).abs() < 1e-13);
            assert!((central_chi2_sf(x, 2.0) - (-x / 2.0f64).exp()).abs() < 1e-13);
        }
        let q = central_chi2_quantile(0.95, 2.0).unwrap();
        assert!((q - (-2.0 * 0.05f64.ln())).abs() < 1e-8);
    }

    #[test]
    fn quantile_round_trip() {
        for df in [1.0, 2.0, 3.0, 7.0] {
            for p in [0.01, 0.5, 0.9, 0.999] {
                let q = central_chi2_quantile(p, df).unwrap();
                assert!((central_chi2_cdf(q, df) - p).abs() < 1e-9);
            }
        }
        assert!(central_chi2_quantile(1.0, 1.0).is_err());
    }

    #[test]
    fn zero_ncp_is_central() {
        for x in [0.5, 3.84, 10.0] {
            assert_eq!(noncentral_chi2_cdf(x, 1.0, 0.0), central_chi2_cdf(x, 1.0));
            assert!((noncentral_chi2_cdf(x, 2.0, 1e-14) - central_chi2_cdf(x, 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_df_closed_form() {
        // chi2_1(ncp) is (Z + sqrt(ncp))^2, so its CDF is a difference of normal CDFs.
        let phi = |t: f64| 0.5 * (1.0 + erf(t / std::f64::consts::SQRT_2));
        for ncp in [0.5f64, 4.0, 10.0, 60.0, 400.0] {
            for x in [0.5f64, 3.84, 12.0, 500.0] {
                let r = x.sqrt();
                let exact = phi(r - ncp.sqrt()) - phi(-r - ncp.sqrt());
                assert!((noncentral_chi2_cdf(x, 1.0, ncp) - exact).abs() < 1e-10, "{ncp} {x}");
            }
        }
    }

    #[test]
    fn monte_carlo_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200_000;
        let shift = 10f64.sqrt();
        let crit = 3.841_458_820_694_124;
        let hits = (0..n)
            .filter(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z + shift).powi(2) > crit
            })
            .count() as f64;
        let mc = hits / n as f64;
        let analytic = 1.0 - noncentral_chi2_cdf(crit, 1.0, 10.0);
        let se = (mc * (1.0 - mc) / n as f64).sqrt();
        assert!((mc - analytic).abs() < 4.0 * se, "{mc} vs {analytic}");
    }
}
