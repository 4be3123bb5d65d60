//! Analytic design criteria: the noncentral chi-square approximation to the power of the
//! likelihood-ratio test and the asymptotic variance of the outcome coefficient.
//!
//! Both are per-observation expectations over the augmented law, scaled by
//! `E[n_A] = n (c1 Pr(M=1) + c2 Pr(M=0, X in C))`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::augmentation::{c_star_from, RecoveryDesign};
use crate::error::{Error, Result};
use crate::glm::chi2::{central_chi2_quantile, central_chi2_sf, noncentral_chi2_cdf};
use crate::model::{LinkFunction, ModelSpec, WTerm};
use crate::quadrature::{prob_missing_with, Grid, QuadratureConfig, RegionProbabilities};

pub const LAMBDA0_MAX_ITERATIONS: usize = 200;
pub const LAMBDA0_GRADIENT_TOL: f64 = 1e-9;
/// Noncentralities down to this negative value are rounding noise and clamp to zero.
pub const GAMMA_CLAMP: f64 = -1e-6;

/// The augmented law discretised on a quadrature grid.
///
/// Each node carries the mechanism features `(w, z)`, its probability under the augmented law
/// (summing to one) and the augmented missingness probability with its logarithms.
#[derive(Clone, Debug)]
pub struct AugmentedLaw {
    q: usize,
    s: usize,
    link: LinkFunction,
    features: Vec<f64>,
    weights: Vec<f64>,
    pi_a: Vec<f64>,
    log_pi_a: Vec<f64>,
    log_one_minus_pi_a: Vec<f64>,
    /// Augmented-law linear predictor `w'lambda_A + z'psi` (exact for the logit link).
    eta_a: Vec<f64>,
    pub probabilities: RegionProbabilities,
    pub c_star: f64,
    /// `E[n_A] / n`.
    pub augmented_fraction: f64,
    /// `lambda_A`: `lambda` with `log c*` added to the intercept under the logit link.
    pub lambda_a: Vec<f64>,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn xlogy_ratio(p: f64, log_p: f64, log_q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (log_p - log_q)
    }
}

impl AugmentedLaw {
    pub fn new(model: &ModelSpec, design: &RecoveryDesign, cfg: &QuadratureConfig) -> Result<Self> {
        Self::with_prob_missing(model, design, prob_missing_with(model, cfg), cfg)
    }

    /// Reuses a precomputed `Pr(M=1)`, which does not depend on the design.
    pub fn with_prob_missing(
        model: &ModelSpec,
        design: &RecoveryDesign,
        prob_missing: f64,
        cfg: &QuadratureConfig,
    ) -> Result<Self> {
        design.validate_parameters(model.p())?;
        let grid = Grid::build(model, &design.region, cfg)?;
        let probabilities = RegionProbabilities::from_grid(model, &grid, prob_missing);
        if !(probabilities.prob_mo > 0.0) {
            return Err(Error::DegenerateDesign("Pr(M=0, X in C) must be positive".into()));
        }
        let c_star = c_star_from(design.c1, design.c2, &probabilities)?;
        let log_c_star = c_star.ln();
        let mech = &model.mechanism;
        let link = mech.link;
        let (q, s) = (mech.q(), mech.s());
        let k = q + s;

        let mut lambda_a = mech.lambda.clone();
        let intercept = mech.shape.w_terms.iter().position(|t| *t == WTerm::One);
        if link == LinkFunction::Logit {
            if let Some(j) = intercept {
                lambda_a[j] += log_c_star;
            }
        }

        // Mixture density on the region: (c1 P1 / PR) pi + c2 (1 - pi), times f(y|x) f(x).
        let recovered_scale = design.c1 * prob_missing / probabilities.prob_mr;
        let n = grid.len();
        let mut law = Self {
            q,
            s,
            link,
            features: Vec::with_capacity(n * k),
            weights: Vec::with_capacity(n),
            pi_a: Vec::with_capacity(n),
            log_pi_a: Vec::with_capacity(n),
            log_one_minus_pi_a: Vec::with_capacity(n),
            eta_a: Vec::with_capacity(n),
            probabilities,
            c_star,
            augmented_fraction: design.c1 * prob_missing + design.c2 * probabilities.prob_mo,
            lambda_a,
        };
        let mut v = vec![0.0; k];
        let mut total = 0.0;
        grid.for_each(|x, y, w| {
            mech.shape.fill(x, y, true, &mut v);
            let eta = v[..q].iter().zip(&mech.lambda).map(|(a, b)| a * b).sum::<f64>()
                + v[q..].iter().zip(&mech.psi).map(|(a, b)| a * b).sum::<f64>();
            let pi = link.inverse(eta);
            let one_minus = link.inverse_complement(eta);
            let weight = w * (recovered_scale * pi + design.c2 * one_minus);
            if weight <= 0.0 {
                return;
            }
            let log_num = log_c_star + link.log_mu(eta);
            let log_other = link.log_one_minus_mu(eta);
            let log_den = log_add_exp(log_num, log_other);
            let pa = c_star * pi / (c_star * pi + one_minus);
            total += weight;
            law.features.extend_from_slice(&v);
            law.weights.push(weight);
            law.pi_a.push(pa);
            law.log_pi_a.push(log_num - log_den);
            law.log_one_minus_pi_a.push(log_other - log_den);
            law.eta_a.push(if link == LinkFunction::Logit { eta + log_c_star } else { eta });
        });
        if !(total > 0.0) {
            return Err(Error::DegenerateDesign("augmented law has no mass".into()));
        }
        for w in &mut law.weights {
            *w /= total;
        }
        Ok(law)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    fn v(&self, i: usize) -> &[f64] {
        let k = self.q + self.s;
        &self.features[i * k..(i + 1) * k]
    }

    #[inline]
    fn w(&self, i: usize) -> &[f64] {
        &self.v(i)[..self.q]
    }

    fn null_eta(&self, i: usize, lambda0: &[f64]) -> f64 {
        self.w(i).iter().zip(lambda0).map(|(a, b)| a * b).sum()
    }

    /// Expected KL divergence of the null fit at `lambda0` from the augmented mechanism.
    pub fn expected_kl(&self, lambda0: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| {
                let eta = self.null_eta(i, lambda0);
                let pa = self.pi_a[i];
                let kl = xlogy_ratio(pa, self.log_pi_a[i], self.link.log_mu(eta))
                    + xlogy_ratio(1.0 - pa, self.log_one_minus_pi_a[i], self.link.log_one_minus_mu(eta));
                self.weights[i] * kl
            })
            .sum()
    }

    /// Gradient of [`Self::expected_kl`], expected curvature under the augmented law, and the
    /// expected score outer product `E[pi_A (1 - pi_A) r(eta)^2 w w']`.
    fn null_derivatives(&self, lambda0: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let q = self.q;
        let mut grad = DVector::zeros(q);
        let mut curv = DMatrix::zeros(q, q);
        let mut outer = DMatrix::zeros(q, q);
        for i in 0..self.len() {
            let eta = self.null_eta(i, lambda0);
            let pa = self.pi_a[i];
            let (u, h) = self.link.bernoulli_derivatives(eta, pa);
            let r = self.link.score_ratio(eta);
            let wt = self.weights[i];
            let var = pa * (1.0 - pa) * r * r;
            let w = self.w(i);
            for a in 0..q {
                grad[a] -= wt * u * w[a];
                for b in 0..=a {
                    let ww = wt * w[a] * w[b];
                    curv[(a, b)] += h * ww;
                    outer[(a, b)] += var * ww;
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                curv[(b, a)] = curv[(a, b)];
                outer[(b, a)] = outer[(a, b)];
            }
        }
        (grad, curv, outer)
    }

    fn fisher_scoring_matrix(&self, lambda0: &[f64]) -> DMatrix<f64> {
        let q = self.q;
        let mut m = DMatrix::zeros(q, q);
        for i in 0..self.len() {
            let fw = self.weights[i] * self.link.fisher_weight(self.null_eta(i, lambda0));
            let w = self.w(i);
            for a in 0..q {
                for b in 0..q {
                    m[(a, b)] += fw * w[a] * w[b];
                }
            }
        }
        m
    }
}

/// Limit of the null-model estimate: the KL projection of the augmented mechanism onto the
/// MAR model.
#[derive(Clone, Debug, Serialize)]
pub struct NullLimit {
    pub lambda0_star: Vec<f64>,
    /// Expected per-observation KL divergence at the solution.
    pub kl_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Damped Newton on the expected KL divergence, started at `lambda_A`.
pub fn solve_lambda0(law: &AugmentedLaw) -> Result<NullLimit> {
    let mut lambda = DVector::from_column_slice(&law.lambda_a);
    let mut kl = law.expected_kl(lambda.as_slice());
    for iteration in 0..LAMBDA0_MAX_ITERATIONS {
        let (grad, curv, _) = law.null_derivatives(lambda.as_slice());
        let gnorm = grad.norm();
        if gnorm < LAMBDA0_GRADIENT_TOL {
            return Ok(NullLimit {
                lambda0_star: lambda.iter().copied().collect(),
                kl_value: kl.max(0.0),
                converged: true,
                iterations: iteration,
            });
        }
        let step = match curv.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match law.fisher_scoring_matrix(lambda.as_slice()).cholesky() {
                Some(ch) => ch.solve(&grad),
                None => return Err(Error::DegenerateDesign("singular null-model information".into())),
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &lambda - &step * t;
            let kl_new = law.expected_kl(cand.as_slice());
            let better = kl_new <= kl + 1e-15 * kl.abs().max(1e-300)
                || law.null_derivatives(cand.as_slice()).0.norm() < gnorm;
            if kl_new.is_finite() && better {
                lambda = cand;
                kl = kl_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::SolverNotConverged {
        iterations: LAMBDA0_MAX_ITERATIONS,
        last: lambda.iter().copied().collect(),
    })
}

/// Terms of the noncentrality `gamma = q + Delta - tr(A)`.
#[derive(Clone, Debug, Serialize)]
pub struct NcpBreakdown {
    pub delta: f64,
    pub tr_a: f64,
    pub q: usize,
    /// `max(0, q + Delta - tr(A))`.
    pub gamma: f64,
    pub gamma_raw: f64,
    pub expected_n_a: f64,
    pub null_limit: NullLimit,
    pub c_star: f64,
    pub probabilities: RegionProbabilities,
}

pub fn noncentrality(model: &ModelSpec, design: &RecoveryDesign, n: usize) -> Result<NcpBreakdown> {
    let cfg = QuadratureConfig::default();
    noncentrality_on(&AugmentedLaw::new(model, design, &cfg)?, n)
}

pub fn noncentrality_on(law: &AugmentedLaw, n: usize) -> Result<NcpBreakdown> {
    let null_limit = solve_lambda0(law)?;
    let (_, curv, outer) = law.null_derivatives(&null_limit.lambda0_star);
    let inv = curv
        .cholesky()
        .ok_or_else(|| Error::DegenerateDesign("singular expected null-model curvature".into()))?
        .inverse();
    let tr_a = (inv * outer).trace();
    let expected_n_a = n as f64 * law.augmented_fraction;
    let delta = 2.0 * expected_n_a * null_limit.kl_value;
    let gamma_raw = law.q as f64 + delta - tr_a;
    if gamma_raw < GAMMA_CLAMP && gamma_raw.abs() > 1e-6 * delta.max(1.0) {
        return Err(Error::DegenerateDesign(format!("negative noncentrality {gamma_raw}")));
    }
    Ok(NcpBreakdown {
        delta,
        tr_a,
        q: law.q,
        gamma: gamma_raw.max(0.0),
        gamma_raw,
        expected_n_a,
        null_limit,
        c_star: law.c_star,
        probabilities: law.probabilities,
    })
}

/// `1 - F(chi2_{1-alpha, s}; s, gamma)` for the noncentral chi-square CDF `F`.
pub fn approx_power(gamma: f64, s: usize, alpha: f64) -> Result<f64> {
    let df = s as f64;
    let crit = central_chi2_quantile(1.0 - alpha, df)?;
    if gamma <= 0.0 {
        return Ok(central_chi2_sf(crit, df));
    }
    Ok(1.0 - noncentral_chi2_cdf(crit, df, gamma))
}

/// Expected information of `(lambda_A, psi)` in the augmented data.
#[derive(Clone, Debug, Serialize)]
pub struct FisherInfo {
    /// Row-major `(q+s) x (q+s)`.
    pub matrix: Vec<f64>,
    pub dim: usize,
    /// Asymptotic variance of the outcome coefficient, as a ratio of determinants.
    pub target_variance: f64,
    pub expected_n_a: f64,
}

impl FisherInfo {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
    }
}

pub fn asymptotic_variance(model: &ModelSpec, design: &RecoveryDesign, n: usize) -> Result<FisherInfo> {
    let cfg = QuadratureConfig::default();
    asymptotic_variance_on(&AugmentedLaw::new(model, design, &cfg)?, n)
}

pub fn asymptotic_variance_on(law: &AugmentedLaw, n: usize) -> Result<FisherInfo> {
    if law.s != 1 {
        return Err(Error::Unsupported(format!(
            "the variance criterion needs a scalar outcome coefficient, got {} z terms",
            law.s
        )));
    }
    let k = law.q + law.s;
    let expected_n_a = n as f64 * law.augmented_fraction;
    let mut info = DMatrix::zeros(k, k);
    for i in 0..law.len() {
        let fw = law.weights[i] * law.link.fisher_weight(law.eta_a[i]) * expected_n_a;
        let v = law.v(i);
        for a in 0..k {
            for b in 0..=a {
                info[(a, b)] += fw * v[a] * v[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    let det = info.determinant();
    if !(det > 0.0) {
        return Err(Error::DegenerateDesign("information matrix is singular".into()));
    }
    let minor = info.view((0, 0), (k - 1, k - 1)).into_owned().determinant();
    Ok(FisherInfo {
        matrix: (0..k * k).map(|i| info[(i / k, i % k)]).collect(),
        dim: k,
        target_variance: minor / det,
        expected_n_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmentation::{assemble_augmented, AugmentedMechanism, ObservedSubsampling};
    use crate::model::{generate_dataset, Region};
    use crate::presets;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn mar_null_limit_is_exact() {
        for link in [LinkFunction::Logit, LinkFunction::Probit, LinkFunction::CLogLog] {
            let mut m = presets::type_one_scenario1();
            m.mechanism.link = link;
            let region = Region::cuboid(&[(-3.0, 8.0)]);
            // c* = 1 keeps the MAR family closed for every link.
            let c2 = crate::augmentation::required_c2(&m, 0.3, &region).unwrap();
            let law = AugmentedLaw::new(&m, &RecoveryDesign::new(0.3, c2, region), &cfg()).unwrap();
            let nl = solve_lambda0(&law).unwrap();
            for (a, b) in nl.lambda0_star.iter().zip(&law.lambda_a) {
                assert!((a - b).abs() < 1e-9, "{link:?}");
            }
            let ncp = noncentrality_on(&law, 1000).unwrap();
            assert!(ncp.delta.abs() < 1e-8 && (ncp.tr_a - 2.0).abs() < 1e-6, "{link:?} {ncp:?}");
            assert!(ncp.gamma < 1e-6);
            assert!((approx_power(ncp.gamma, 1, 0.05).unwrap() - 0.05).abs() < 1e-6);
        }
    }

    #[test]
    fn logit_intercept_shift_under_mar() {
        let m = presets::type_one_scenario1();
        let design = RecoveryDesign::new(0.3, 1.0, Region::cuboid(&[(0.0, 9.0)]));
        let law = AugmentedLaw::new(&m, &design, &cfg()).unwrap();
        assert!((law.lambda_a[0] - m.mechanism.lambda[0] - law.c_star.ln()).abs() < 1e-15);
        let nl = solve_lambda0(&law).unwrap();
        assert_eq!(nl.iterations, 0);
        assert!(nl.kl_value < 1e-14);
    }

    #[test]
    fn full_recovery_has_no_shift() {
        let m = presets::example1();
        let law = AugmentedLaw::new(&m, &RecoveryDesign::random(1.0, 1), &cfg()).unwrap();
        assert!((law.c_star - 1.0).abs() < 1e-12);
        assert!((law.lambda_a[0] - m.mechanism.lambda[0]).abs() < 1e-12);
        assert!((law.augmented_fraction - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gamma_scales_with_n() {
        let m = presets::example1();
        let law = AugmentedLaw::new(&m, &RecoveryDesign::random(0.3, 1), &cfg()).unwrap();
        let a = noncentrality_on(&law, 1000).unwrap();
        let b = noncentrality_on(&law, 2000).unwrap();
        assert!(b.gamma > a.gamma);
        assert!((b.delta - 2.0 * a.delta).abs() < 1e-9 * b.delta);
        assert!((a.tr_a - b.tr_a).abs() < 1e-12);
        assert!(a.gamma > 0.0);
    }

    #[test]
    fn kl_value_is_the_minimum() {
        let m = presets::example1();
        let law = AugmentedLaw::new(&m, &RecoveryDesign::new(0.3, 1.0, Region::cuboid(&[(-1.0, 10.0)])), &cfg()).unwrap();
        let nl = solve_lambda0(&law).unwrap();
        assert!(nl.kl_value > 0.0);
        for d in [[1e-3, 0.0], [0.0, -1e-3], [5e-4, 5e-4]] {
            let moved: Vec<f64> = nl.lambda0_star.iter().zip(d).map(|(a, b)| a + b).collect();
            assert!(law.expected_kl(&moved) > nl.kl_value);
        }
    }

    #[test]
    fn power_is_monotone_and_exact_at_zero() {
        assert!((approx_power(0.0, 1, 0.05).unwrap() - 0.05).abs() < 1e-9);
        assert!((approx_power(0.0, 2, 0.05).unwrap() - 0.05).abs() < 1e-9);
        let mut last = 0.05;
        for i in 1..60 {
            let p = approx_power(i as f64 * 0.5, 1, 0.05).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn cramer_matches_explicit_inverse() {
        for model in [presets::example1(), presets::example2(), presets::example1_probit()] {
            let p = model.p();
            let design = RecoveryDesign::random(0.4, p);
            let fi = asymptotic_variance(&model, &design, 1000).unwrap();
            let inv = fi.to_matrix().try_inverse().unwrap();
            let k = fi.dim;
            assert!((inv[(k - 1, k - 1)] - fi.target_variance).abs() < 1e-8 * fi.target_variance.max(1.0));
        }
        assert!(matches!(
            asymptotic_variance(&presets::example3(), &RecoveryDesign::random(0.4, 1), 1000),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn variance_falls_with_c1() {
        let m = presets::example1();
        let region = Region::cuboid(&[(-6.0, 10.0)]);
        let mut last = f64::INFINITY;
        for c1 in [0.1, 0.2, 0.3, 0.4] {
            let v = asymptotic_variance(&m, &RecoveryDesign::new(c1, 1.0, region.clone()), 1000)
                .unwrap()
                .target_variance;
            assert!(v < last, "{c1}: {v}");
            last = v;
        }
    }

    #[test]
    fn information_matches_logit_closed_form() {
        // For the logit link the weight is pi_A (1 - pi_A) of the augmented mechanism.
        let m = presets::example1();
        let design = RecoveryDesign::new(0.3, 1.0, Region::cuboid(&[(-2.0, 9.0)]));
        let law = AugmentedLaw::new(&m, &design, &cfg()).unwrap();
        let fi = asymptotic_variance_on(&law, 1).unwrap();
        let am = AugmentedMechanism::new(&m.mechanism, law.c_star, &design.region);
        let grid = Grid::build(&m, &design.region, &cfg()).unwrap();
        let rec = design.c1 * law.probabilities.prob_missing / law.probabilities.prob_mr;
        let mut direct = 0.0;
        grid.for_each(|x, y, w| {
            let eta = m.mechanism.linear_predictor(x, y);
            let pi = m.mechanism.link.inverse(eta);
            let pa = am.prob(x, y);
            direct += w * (rec * pi + (1.0 - pi)) * pa * (1.0 - pa) * y * y;
        });
        assert!((fi.matrix[8] - direct).abs() < 1e-10 * direct);
    }

    /// Newton minimiser of the empirical KL between the true augmented probabilities of
    /// simulated rows and a logit null model in `(1, x)`.
    fn empirical_kl_argmin(rows: &[(f64, f64)], start: [f64; 2]) -> [f64; 2] {
        let mut b = start;
        for _ in 0..50 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(x, pa) in rows {
                let mu = 1.0 / (1.0 + (-(b[0] + b[1] * x)).exp());
                g0 += pa - mu;
                g1 += (pa - mu) * x;
                let v = mu * (1.0 - mu);
                h00 += v;
                h01 += v * x;
                h11 += v * x * x;
            }
            let det = h00 * h11 - h01 * h01;
            b[0] += (h11 * g0 - h01 * g1) / det;
            b[1] += (h00 * g1 - h01 * g0) / det;
        }
        b
    }

    #[test]
    fn null_limit_matches_empirical_kl() {
        let m = presets::example1();
        let design = RecoveryDesign::new(0.3, 1.0, Region::cuboid(&[(-1.0, 9.0)]));
        let law = AugmentedLaw::new(&m, &design, &cfg()).unwrap();
        let nl = solve_lambda0(&law).unwrap();
        let g = generate_dataset(&m, 200_000, 77);
        let s = assemble_augmented(&g.dataset, &design, g.oracle(), 78, ObservedSubsampling::Bernoulli).unwrap();
        let am = AugmentedMechanism::new(&m.mechanism, law.c_star, &design.region);
        let rows: Vec<(f64, f64)> = (0..s.n_a()).map(|i| (s.x(i)[0], am.prob(s.x(i), s.y(i)))).collect();
        let b = empirical_kl_argmin(&rows, [0.0, 0.0]);
        for (a, e) in nl.lambda0_star.iter().zip(b) {
            assert!((a - e).abs() < 0.02, "{:?} vs {b:?}", nl.lambda0_star);
        }
    }
}
