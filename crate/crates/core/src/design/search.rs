use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{minimize, NelderMeadOptions};
use crate::augmentation::RecoveryDesign;
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::model::{ModelSpec, Region};
use crate::power::{approx_power, asymptotic_variance_on, noncentrality_on, AugmentedLaw};
use crate::quadrature::{prob_missing_with, Grid, QuadratureConfig, RegionProbabilities};

/// Designs whose `Pr(M=0, X in C)` falls to this level are rejected outright.
const MIN_PROB_MO: f64 = 1e-6;
const PENALTY_SCALE: f64 = 1e6;
/// Largest log half-width explored; wider boxes cover every quadrature node anyway.
const MAX_LOG_HALF_WIDTH: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Maximise the noncentrality `q + Delta - tr(A)`.
    Ncp,
    /// Minimise the asymptotic variance of the outcome coefficient.
    Variance,
}

/// How `c2` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Keep every observed row in the region (`c2 = 1`); the logit intercept absorbs the tilt.
    Logit,
    /// `c2 = c1 Pr(M=1) / Pr(M=1, X in C)`, which leaves the mechanism unchanged for any link.
    General,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Sample size used to scale the criterion.
    pub n: usize,
    /// Number of multistarts (one at the interquartile box, the rest quasi-random).
    pub starts: usize,
    pub seed: u64,
    pub execution: Execution,
    pub quadrature: QuadratureConfig,
    pub nelder_mead: NelderMeadOptions,
    pub alpha: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n: 1000,
            starts: 20,
            seed: 0,
            execution: Execution::default(),
            quadrature: QuadratureConfig::default(),
            nelder_mead: NelderMeadOptions::default(),
            alpha: 0.05,
        }
    }
}

/// A design scored under one criterion.
#[derive(Clone, Debug, Serialize)]
pub struct DesignEvaluation {
    pub region: Region,
    pub c2: f64,
    /// Noncentrality or asymptotic variance, per the criterion.
    pub value: f64,
    /// `Pr(M=1, X in C) - c1 Pr(M=1)`.
    pub slack: f64,
    pub probabilities: RegionProbabilities,
    /// Approximate power of the LRT (noncentrality criterion only).
    pub approx_power: Option<f64>,
}

/// Result of [`optimize_region`].
#[derive(Clone, Debug, Serialize)]
pub struct DesignSearchResult {
    /// `[lo, hi]` per dimension; `null` for an infinite end.
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
    pub c1: f64,
    pub c2: f64,
    pub criterion: Criterion,
    pub value: f64,
    pub slack: f64,
    pub starts_tried: usize,
    pub approx_power: Option<f64>,
    pub prob_missing: f64,
    pub n: usize,
    #[serde(skip)]
    pub region: Region,
}

impl DesignSearchResult {
    pub fn design(&self) -> RecoveryDesign {
        RecoveryDesign::new(self.c1, self.c2, self.region.clone())
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct Evaluator<'a> {
    model: &'a ModelSpec,
    c1: f64,
    criterion: Criterion,
    link_mode: LinkMode,
    n: usize,
    prob_missing: f64,
    cfg: &'a QuadratureConfig,
    alpha: f64,
}

impl Evaluator<'_> {
    fn probabilities(&self, region: &Region) -> Result<RegionProbabilities> {
        let grid = Grid::build(self.model, region, self.cfg)?;
        Ok(RegionProbabilities::from_grid(self.model, &grid, self.prob_missing))
    }

    fn evaluate(&self, region: &Region) -> Result<DesignEvaluation> {
        let c2 = match self.link_mode {
            LinkMode::Logit => 1.0,
            LinkMode::General => {
                let probs = self.probabilities(region)?;
                if !(probs.prob_mr > 0.0) {
                    return Err(Error::DegenerateDesign("Pr(M=1, X in C) is zero".into()));
                }
                (self.c1 * self.prob_missing / probs.prob_mr).min(1.0)
            }
        };
        let design = RecoveryDesign::new(self.c1, c2, region.clone());
        let law = AugmentedLaw::with_prob_missing(self.model, &design, self.prob_missing, self.cfg)?;
        let probabilities = law.probabilities;
        let (value, approx) = match self.criterion {
            Criterion::Ncp => {
                let ncp = noncentrality_on(&law, self.n)?;
                let s = self.model.mechanism.s();
                (ncp.gamma, Some(approx_power(ncp.gamma, s, self.alpha)?))
            }
            Criterion::Variance => (asymptotic_variance_on(&law, self.n)?.target_variance, None),
        };
        Ok(DesignEvaluation {
            region: region.clone(),
            c2,
            value,
            slack: probabilities.prob_mr - self.c1 * self.prob_missing,
            probabilities,
            approx_power: approx,
        })
    }

    /// Smaller is better.
    fn score(&self, value: f64) -> f64 {
        match self.criterion {
            Criterion::Ncp => -value,
            Criterion::Variance => value.ln(),
        }
    }

    fn penalized(&self, region: &Region) -> f64 {
        match self.evaluate(region) {
            Ok(e) if e.probabilities.prob_mo > MIN_PROB_MO => {
                let shortfall = (-e.slack).max(0.0);
                self.score(e.value) + PENALTY_SCALE * shortfall * shortfall
            }
            _ => f64::INFINITY,
        }
    }

    fn slack(&self, region: &Region) -> f64 {
        self.probabilities(region)
            .map(|p| p.prob_mr - self.c1 * self.prob_missing)
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Widens the box about its centre, by bisection on the scale, until it is feasible.
    fn repair(&self, centers: &[f64], half: &[f64]) -> Option<Region> {
        let build = |t: f64| {
            let b: Vec<(f64, f64)> = centers.iter().zip(half).map(|(c, h)| (c - t * h, c + t * h)).collect();
            Region::cuboid(&b)
        };
        if self.slack(&build(1.0)) >= 0.0 {
            return Some(build(1.0));
        }
        let mut lo = 1.0;
        let mut hi = 2.0;
        let mut tries = 0;
        while self.slack(&build(hi)) < 0.0 {
            lo = hi;
            hi *= 2.0;
            tries += 1;
            if tries > 60 {
                return None;
            }
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if self.slack(&build(mid)) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(build(hi))
    }
}

fn decode(params: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = params.len() / 2;
    let centers = params[..p].to_vec();
    let half = params[p..].iter().map(|h| h.min(MAX_LOG_HALF_WIDTH).exp()).collect();
    (centers, half)
}

fn cuboid(centers: &[f64], half: &[f64]) -> Region {
    let b: Vec<(f64, f64)> = centers.iter().zip(half).map(|(c, h)| (c - h, c + h)).collect();
    Region::cuboid(&b)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Start points in `(center, log half-width)` coordinates: the interquartile box, then a
/// randomly shifted Halton sequence over central covariate ranges and widths.
fn start_points(model: &ModelSpec, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let marginals = &model.covariates.marginals;
    let p = marginals.len();
    let mut out = Vec::with_capacity(starts);
    let mut iqr = Vec::with_capacity(2 * p);
    for m in marginals {
        iqr.push(m.quantile(0.5));
    }
    for m in marginals {
        iqr.push((0.5 * (m.quantile(0.75) - m.quantile(0.25))).max(1e-6).ln());
    }
    out.push(iqr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..2 * p).map(|_| rng.random::<f64>()).collect();
    for i in 1..starts as u64 {
        let u: Vec<f64> = (0..2 * p)
            .map(|d| (radical_inverse(i, PRIMES[d % PRIMES.len()]) + shift[d]).fract())
            .collect();
        let mut point = Vec::with_capacity(2 * p);
        for (j, m) in marginals.iter().enumerate() {
            let (a, b) = (m.quantile(0.02), m.quantile(0.98));
            point.push(a + u[j] * (b - a));
        }
        for (j, m) in marginals.iter().enumerate() {
            let sd = m.sd();
            let (a, b) = ((0.1 * sd).ln(), (3.0 * sd).ln());
            point.push(a + u[p + j] * (b - a));
        }
        out.push(point);
    }
    out
}

/// Scores one design under `criterion`, choosing `c2` per `link_mode`.
pub fn evaluate_design(
    model: &ModelSpec,
    c1: f64,
    region: &Region,
    criterion: Criterion,
    link_mode: LinkMode,
    opts: &SearchOptions,
) -> Result<DesignEvaluation> {
    let ev = Evaluator {
        model,
        c1,
        criterion,
        link_mode,
        n: opts.n,
        prob_missing: prob_missing_with(model, &opts.quadrature),
        cfg: &opts.quadrature,
        alpha: opts.alpha,
    };
    ev.evaluate(region)
}

/// Multistart Nelder-Mead over single-cuboid regions. The unrestricted region is always a
/// candidate, so the result is never worse than random recovery.
pub fn optimize_region(
    model: &ModelSpec,
    c1: f64,
    criterion: Criterion,
    link_mode: LinkMode,
    opts: &SearchOptions,
) -> Result<DesignSearchResult> {
    if !(c1 > 0.0 && c1 <= 1.0) {
        return Err(Error::Spec(format!("c1 must lie in (0, 1], got {c1}")));
    }
    if criterion == Criterion::Variance && model.mechanism.s() != 1 {
        return Err(Error::Unsupported(format!(
            "the variance criterion needs a scalar outcome coefficient, got {} z terms",
            model.mechanism.s()
        )));
    }
    let prob_missing = prob_missing_with(model, &opts.quadrature);
    let ev = Evaluator {
        model,
        c1,
        criterion,
        link_mode,
        n: opts.n,
        prob_missing,
        cfg: &opts.quadrature,
        alpha: opts.alpha,
    };
    let p = model.p();
    let starts = start_points(model, opts.starts.max(1), opts.seed);
    let steps: Vec<f64> = model
        .covariates
        .marginals
        .iter()
        .map(|m| 0.25 * m.sd())
        .chain(std::iter::repeat_n(0.3, p))
        .collect();

    let candidates: Vec<Option<DesignEvaluation>> = map_indices(opts.execution, starts.len(), |i| {
        let found = minimize(|x| {
            let (c, h) = decode(x);
            ev.penalized(&cuboid(&c, &h))
        }, &starts[i], &steps, opts.nelder_mead);
        let (c, h) = decode(&found.x);
        let region = ev.repair(&c, &h)?;
        ev.evaluate(&region).ok()
    });

    let mut best: Option<DesignEvaluation> = ev.evaluate(&Region::unbounded(p)).ok();
    let mut best_slack = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.slack);
    for cand in candidates.into_iter().flatten() {
        best_slack = best_slack.max(cand.slack);
        if cand.slack < -1e-8 || cand.probabilities.prob_mo <= MIN_PROB_MO {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => ev.score(cand.value) < ev.score(b.value),
        };
        if better {
            best = Some(cand);
        }
    }
    let best = best.ok_or(Error::Infeasible {
        prob_missing,
        best_slack,
    })?;
    if best.slack < -1e-8 || best.probabilities.prob_mo <= 0.0 {
        return Err(Error::Infeasible {
            prob_missing,
            best_slack: best.slack,
        });
    }
    let bounds = best
        .region
        .bounds()
        .expect("search regions are cuboids")
        .into_iter()
        .map(|(lo, hi)| (finite(lo), finite(hi)))
        .collect();
    Ok(DesignSearchResult {
        bounds,
        c1,
        c2: best.c2,
        criterion,
        value: best.value,
        slack: best.slack,
        starts_tried: starts.len(),
        approx_power: best.approx_power,
        prob_missing,
        n: opts.n,
        region: best.region,
    })
}

/// Criterion values `(optimised, random)` for a search result and the unrestricted region.
pub fn compare_to_random(
    model: &ModelSpec,
    result: &DesignSearchResult,
    link_mode: LinkMode,
    opts: &SearchOptions,
) -> Result<(DesignEvaluation, DesignEvaluation)> {
    let opt = evaluate_design(model, result.c1, &result.region, result.criterion, link_mode, opts)?;
    let random = evaluate_design(
        model,
        result.c1,
        &Region::unbounded(model.p()),
        result.criterion,
        link_mode,
        opts,
    )?;
    Ok((opt, random))
}
