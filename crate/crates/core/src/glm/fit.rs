use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::chi2::central_chi2_sf;
use crate::augmentation::AugmentedSample;
use crate::error::{Error, Result};
use crate::model::{LinkFunction, TermShape};

pub const MAX_ITERATIONS: usize = 100;
/// A coefficient beyond this magnitude is taken as (quasi-)separation.
pub const SEPARATION_BOUND: f64 = 1e3;
const SCORE_TOL: f64 = 1e-8;
const REL_LOGLIK_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

/// Maximum-likelihood fit of a binary-response model.
#[derive(Clone, Debug, Serialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    /// Inverse observed information at the estimate, row-major `k x k`.
    pub covariance: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a coefficient ran past [`SEPARATION_BOUND`].
    pub separated: bool,
}

impl GlmFit {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        let k = self.k();
        (0..k).map(|i| self.covariance[i * k + i].max(0.0).sqrt()).collect()
    }
}

fn loglik(features: &DMatrix<f64>, response: &[bool], link: LinkFunction, beta: &DVector<f64>) -> f64 {
    let eta = features * beta;
    eta.iter()
        .zip(response)
        .map(|(&e, &r)| if r { link.log_mu(e) } else { link.log_one_minus_mu(e) })
        .sum()
}

/// Score and observed information.
fn derivatives(
    features: &DMatrix<f64>,
    response: &[bool],
    link: LinkFunction,
    beta: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = features.ncols();
    let eta = features * beta;
    let mut score = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    for (i, &r) in response.iter().enumerate() {
        let (u, h) = link.bernoulli_derivatives(eta[i], if r { 1.0 } else { 0.0 });
        let row = features.row(i);
        for a in 0..k {
            score[a] += u * row[a];
            let ha = h * row[a];
            for b in 0..=a {
                info[(a, b)] += ha * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    (score, info)
}

fn solve(info: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    match info.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => pseudo_inverse(info) * rhs,
    }
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = m.amax().max(1.0);
    m.clone()
        .pseudo_inverse(1e-12 * scale)
        .unwrap_or_else(|_| DMatrix::zeros(m.nrows(), m.ncols()))
}

/// Fits `Pr(response = 1 | v) = g^{-1}(v' beta)` by Newton-Raphson with step halving.
/// `features` is row-major `n x k`.
pub fn fit_binary(features: &[f64], k: usize, response: &[bool], link: LinkFunction) -> Result<GlmFit> {
    let n = response.len();
    if k == 0 || features.len() != n * k {
        return Err(Error::Spec(format!("feature matrix has {} entries, expected {n} x {k}", features.len())));
    }
    let ones = response.iter().filter(|&&r| r).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateSample(format!(
            "response is constant ({ones} of {n} rows equal 1)"
        )));
    }
    let x = DMatrix::from_row_slice(n, k, features);
    let mut beta = DVector::zeros(k);
    let mut ll = loglik(&x, response, link, &beta);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (score, info) = derivatives(&x, response, link, &beta);
        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        let step = solve(&info, &score);
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut ll_new = loglik(&x, response, link, &candidate);
        let mut halvings = 0;
        while !(ll_new.is_finite() && ll_new >= ll - 1e-12 * ll.abs()) && halvings < MAX_HALVINGS {
            t *= 0.5;
            candidate = &beta + &step * t;
            ll_new = loglik(&x, response, link, &candidate);
            halvings += 1;
        }
        if !ll_new.is_finite() {
            break;
        }
        let change = (ll_new - ll).abs();
        beta = candidate;
        let previous = ll;
        ll = ll_new;
        if beta.amax() > SEPARATION_BOUND {
            separated = true;
            break;
        }
        if change <= REL_LOGLIK_TOL * previous.abs().max(1e-300) {
            let (score, _) = derivatives(&x, response, link, &beta);
            converged = score.amax() < 1e-4 * (n as f64).max(1.0);
            break;
        }
    }

    // Complete separation drives the likelihood to one before the coefficients blow up.
    if ll > -1e-6 {
        separated = true;
    }
    let (_, info) = derivatives(&x, response, link, &beta);
    let cov = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => pseudo_inverse(&info),
    };
    let mut covariance = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            covariance.push(cov[(a, b)]);
        }
    }
    Ok(GlmFit {
        coefficients: beta.iter().copied().collect(),
        covariance,
        log_likelihood: ll,
        iterations,
        converged: converged && !separated,
        separated,
    })
}

/// Regresses `m_A` on `w` (and on `z` when `include_z`).
pub fn fit(sample: &AugmentedSample, shape: &TermShape, link: LinkFunction, include_z: bool) -> Result<GlmFit> {
    let k = if include_z { shape.q() + shape.s() } else { shape.q() };
    let n = sample.n_a();
    let mut features = vec![0.0; n * k];
    let mut response = Vec::with_capacity(n);
    for i in 0..n {
        shape.fill(sample.x(i), sample.y(i), include_z, &mut features[i * k..(i + 1) * k]);
        response.push(sample.m_a(i));
    }
    fit_binary(&features, k, &response, link)
}

/// Likelihood-ratio test of `psi = 0` in the augmented data.
#[derive(Clone, Debug, Serialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub null_fit: GlmFit,
    pub full_fit: GlmFit,
}

impl LrtResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    /// Estimate of `psi` from the full fit.
    pub fn psi_hat(&self) -> &[f64] {
        &self.full_fit.coefficients[self.null_fit.k()..]
    }
}

/// Fits the MAR and MNAR models and returns the LRT. A non-converged fit is an error so callers
/// can discard the replication.
pub fn lrt_mnar(sample: &AugmentedSample, shape: &TermShape, link: LinkFunction) -> Result<LrtResult> {
    let null_fit = fit(sample, shape, link, false)?;
    let full_fit = fit(sample, shape, link, true)?;
    for f in [&null_fit, &full_fit] {
        if !f.converged {
            return Err(Error::FitNotConverged {
                iterations: f.iterations,
                reason: if f.separated {
                    "separation".into()
                } else {
                    "iteration limit".into()
                },
            });
        }
    }
    let statistic = (2.0 * (full_fit.log_likelihood - null_fit.log_likelihood)).max(0.0);
    let df = shape.s();
    Ok(LrtResult {
        statistic,
        df,
        p_value: central_chi2_sf(statistic, df as f64),
        null_fit,
        full_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::link::{expit, std_normal_cdf};
    use crate::model::{WTerm, ZTerm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_only(ones: usize, zeros: usize) -> AugmentedSample {
        let rows = (0..ones + zeros).map(|i| (vec![0.0], 0.0, i < ones));
        AugmentedSample::from_rows(1, rows).unwrap()
    }

    fn intercept_shape() -> TermShape {
        TermShape {
            w_terms: vec![WTerm::One],
            z_terms: vec![ZTerm::Y],
        }
    }

    #[test]
    fn intercept_only_logit() {
        let s = intercept_only(30, 70);
        let f = fit(&s, &intercept_shape(), LinkFunction::Logit, false).unwrap();
        assert!(f.converged);
        assert!((f.coefficients[0] - (30.0f64 / 70.0).ln()).abs() < 1e-10);
        // Var of the logit of a proportion: 1 / (n p (1-p)).
        assert!((f.covariance[0] - 1.0 / (100.0 * 0.3 * 0.7)).abs() < 1e-10);
    }

    #[test]
    fn intercept_only_other_links() {
        let s = intercept_only(30, 70);
        let probit = fit(&s, &intercept_shape(), LinkFunction::Probit, false).unwrap();
        assert!((std_normal_cdf(probit.coefficients[0]) - 0.3).abs() < 1e-10);
        let cll = fit(&s, &intercept_shape(), LinkFunction::CLogLog, false).unwrap();
        assert!((1.0 - (-cll.coefficients[0].exp()).exp() - 0.3).abs() < 1e-10);
    }

    fn simulated(n: usize, seed: u64) -> AugmentedSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n).map(|_| {
            let x: f64 = rng.random_range(-2.0..2.0);
            let y: f64 = 1.0 + x + rng.random_range(-1.5..1.5);
            let m = rng.random::<f64>() < expit(-0.5 + 0.6 * x + 0.3 * y);
            (vec![x], y, m)
        });
        AugmentedSample::from_rows(1, rows.collect::<Vec<_>>()).unwrap()
    }

    /// Independently coded log-likelihood for the logit model with features (1, x, y).
    fn reference_loglik(s: &AugmentedSample, b: &[f64]) -> f64 {
        (0..s.n_a())
            .map(|i| {
                let eta = b[0] + b[1] * s.x(i)[0] + b[2] * s.y(i);
                let m = if s.m_a(i) { 1.0 } else { 0.0 };
                m * eta - (1.0 + eta.exp()).ln()
            })
            .sum()
    }

    #[test]
    fn matches_finite_difference_oracle() {
        let s = simulated(50, 3);
        let f = fit(&s, &TermShape::scenario1(1), LinkFunction::Logit, true).unwrap();
        assert!(f.converged);
        let b = &f.coefficients;
        assert!((reference_loglik(&s, b) - f.log_likelihood).abs() < 1e-9);
        let h = 1e-5;
        let mut hess = [[0.0; 3]; 3];
        for a in 0..3 {
            let mut up = b.clone();
            up[a] += h;
            let mut dn = b.clone();
            dn[a] -= h;
            let grad = (reference_loglik(&s, &up) - reference_loglik(&s, &dn)) / (2.0 * h);
            assert!(grad.abs() < 1e-5, "score {a}: {grad}");
            for c in 0..3 {
                let shift = |v: &mut Vec<f64>, da: f64, dc: f64| {
                    v[a] += da;
                    v[c] += dc;
                };
                let mut pp = b.clone();
                shift(&mut pp, h, h);
                let mut pm = b.clone();
                shift(&mut pm, h, -h);
                let mut mp = b.clone();
                shift(&mut mp, -h, h);
                let mut mm = b.clone();
                shift(&mut mm, -h, -h);
                hess[a][c] = -(reference_loglik(&s, &pp) - reference_loglik(&s, &pm) - reference_loglik(&s, &mp)
                    + reference_loglik(&s, &mm))
                    / (4.0 * h * h);
            }
        }
        let info = DMatrix::from_fn(3, 3, |i, j| hess[i][j]);
        let cov = info.try_inverse().unwrap();
        for a in 0..3 {
            for c in 0..3 {
                let rel = (cov[(a, c)] - f.covariance[a * 3 + c]).abs() / cov[(a, a)].abs().max(1e-12);
                assert!(rel < 1e-3, "cov[{a},{c}]");
            }
        }
    }

    #[test]
    fn nested_models_order_loglik() {
        for link in [LinkFunction::Logit, LinkFunction::Probit, LinkFunction::CLogLog] {
            let s = simulated(400, 11);
            let r = lrt_mnar(&s, &TermShape::scenario1(1), link).unwrap();
            assert!(r.full_fit.log_likelihood >= r.null_fit.log_likelihood - 1e-9);
            assert!(r.statistic >= 0.0 && (0.0..=1.0).contains(&r.p_value));
            assert_eq!(r.df, 1);
            assert_eq!(r.psi_hat().len(), 1);
        }
    }

    #[test]
    fn zero_outcome_terms_give_zero_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<_> = (0..200)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                (vec![x], 0.0, rng.random::<f64>() < expit(x))
            })
            .collect();
        let s = AugmentedSample::from_rows(1, rows).unwrap();
        let r = lrt_mnar(&s, &TermShape::scenario1(1), LinkFunction::Logit).unwrap();
        assert!(r.statistic < 1e-9);
        assert!(r.psi_hat()[0].abs() < 1e-9);
    }

    #[test]
    fn constant_response_is_degenerate() {
        let s = intercept_only(0, 10);
        assert!(matches!(
            fit(&s, &intercept_shape(), LinkFunction::Logit, false),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn separation_is_flagged() {
        let rows: Vec<_> = (0..40).map(|i| (vec![i as f64], 0.0, i >= 20)).collect();
        let s = AugmentedSample::from_rows(1, rows).unwrap();
        let f = fit(&s, &TermShape::scenario1(1), LinkFunction::Logit, false).unwrap();
        assert!(!f.converged);
        let r = lrt_mnar(&s, &TermShape::scenario1(1), LinkFunction::Logit);
        assert!(matches!(r, Err(Error::FitNotConverged { .. })));
    }
}
