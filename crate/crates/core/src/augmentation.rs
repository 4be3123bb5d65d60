//! Law of the augmented data (observed rows in the region plus recovered rows) and the
//! finite-sample assembly of augmented datasets.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::link::LinkFunction;
use crate::model::{Dataset, MechanismSpec, ModelSpec, Region};
use crate::quadrature::RegionProbabilities;

/// Multiplicative enlargement step (fraction of the half-width) used when a region holds
/// fewer than `n*` missing rows.
pub const ENLARGEMENT_STEP: f64 = 0.05;

/// Relative slack allowed when checking `Pr(M=1, X in C) >= c1 Pr(M=1)`.
const CONDITION_TOL: f64 = 1e-9;

/// Random sampling of `n*` missing rows inside `region`, augmented with a `c2` fraction of the
/// observed rows inside `region`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDesign {
    pub c1: f64,
    pub c2: f64,
    pub region: Region,
}

/// Outcome of validating a design against a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCheck {
    pub probabilities: RegionProbabilities,
    /// `Pr(M=1, X in C) - c1 Pr(M=1)`.
    pub slack: f64,
    /// Whether the region carries exactly the recovered mass, `Pr(M=1, X in C) = c1 Pr(M=1)`.
    pub holds_with_equality: bool,
}

impl RecoveryDesign {
    pub fn new(c1: f64, c2: f64, region: Region) -> Self {
        Self { c1, c2, region }
    }

    /// Recover uniformly from all missing rows and keep every observed row.
    pub fn random(c1: f64, p: usize) -> Self {
        Self::new(c1, 1.0, Region::unbounded(p))
    }

    pub fn validate_parameters(&self, p: usize) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 <= 1.0) {
            return Err(Error::Spec(format!("c1 must lie in (0, 1], got {}", self.c1)));
        }
        if !(self.c2 > 0.0 && self.c2 <= 1.0) {
            return Err(Error::Spec(format!("c2 must lie in (0, 1], got {}", self.c2)));
        }
        self.region.validate(p)
    }

    /// Checks `Pr(M=0, X in C) > 0` and `Pr(M=1, X in C) >= c1 Pr(M=1)`.
    pub fn check(&self, model: &ModelSpec) -> Result<DesignCheck> {
        self.validate_parameters(model.p())?;
        let probabilities = RegionProbabilities::compute(model, &self.region)?;
        self.check_with(&probabilities)
    }

    pub fn check_with(&self, probabilities: &RegionProbabilities) -> Result<DesignCheck> {
        if !(probabilities.prob_mo > 0.0) {
            return Err(Error::DegenerateDesign("Pr(M=0, X in C) must be positive".into()));
        }
        let required = self.c1 * probabilities.prob_missing;
        let slack = probabilities.prob_mr - required;
        if slack < -CONDITION_TOL * required.max(1e-300) {
            return Err(Error::ConditionViolated {
                region_mass: probabilities.prob_mr,
                required_mass: required,
            });
        }
        Ok(DesignCheck {
            probabilities: *probabilities,
            slack,
            holds_with_equality: slack.abs() <= 1e-8 * required.max(1e-300),
        })
    }
}

/// `Pr(M_A = 1) = c1 Pr(M=1) / (c1 Pr(M=1) + c2 Pr(M=0, X in C))`.
pub fn prob_ma1_from(c1: f64, c2: f64, probs: &RegionProbabilities) -> Result<f64> {
    let num = c1 * probs.prob_missing;
    let den = num + c2 * probs.prob_mo;
    if !(den > 0.0) {
        return Err(Error::DegenerateDesign("augmented data has zero expected size".into()));
    }
    Ok(num / den)
}

pub fn prob_ma1(model: &ModelSpec, design: &RecoveryDesign) -> Result<f64> {
    design.validate_parameters(model.p())?;
    let probs = RegionProbabilities::compute(model, &design.region)?;
    prob_ma1_from(design.c1, design.c2, &probs)
}

/// `c* = c1 Pr(M=1) / (c2 Pr(M=1, X in C))`.
pub fn c_star_from(c1: f64, c2: f64, probs: &RegionProbabilities) -> Result<f64> {
    if !(probs.prob_mr > 0.0) {
        return Err(Error::DegenerateDesign("Pr(M=1, X in C) is zero".into()));
    }
    Ok(c1 * probs.prob_missing / (c2 * probs.prob_mr))
}

pub fn c_star(model: &ModelSpec, design: &RecoveryDesign) -> Result<f64> {
    design.validate_parameters(model.p())?;
    let probs = RegionProbabilities::compute(model, &design.region)?;
    c_star_from(design.c1, design.c2, &probs)
}

/// The observed-row fraction that leaves the mechanism unchanged in the augmented data,
/// `c2 = c1 Pr(M=1) / Pr(M=1, X in C)`.
pub fn required_c2_from(c1: f64, probs: &RegionProbabilities) -> Result<f64> {
    if !(probs.prob_mr > 0.0) {
        return Err(Error::DegenerateDesign("Pr(M=1, X in C) is zero".into()));
    }
    let c2 = c1 * probs.prob_missing / probs.prob_mr;
    if c2 > 1.0 + CONDITION_TOL {
        return Err(Error::ConditionViolated {
            region_mass: probs.prob_mr,
            required_mass: c1 * probs.prob_missing,
        });
    }
    Ok(c2.min(1.0))
}

pub fn required_c2(model: &ModelSpec, c1: f64, region: &Region) -> Result<f64> {
    let probs = RegionProbabilities::compute(model, region)?;
    required_c2_from(c1, &probs)
}

/// Missingness law of the augmented data: `c* pi / (c* pi + 1 - pi)` inside the region, zero
/// outside.
#[derive(Clone, Debug)]
pub struct AugmentedMechanism<'a> {
    pub mechanism: &'a MechanismSpec,
    pub c_star: f64,
    pub region: &'a Region,
}

impl<'a> AugmentedMechanism<'a> {
    pub fn new(mechanism: &'a MechanismSpec, c_star: f64, region: &'a Region) -> Self {
        Self {
            mechanism,
            c_star,
            region,
        }
    }

    /// Odds-tilted form, valid for every link.
    #[inline]
    pub fn prob(&self, x: &[f64], y: f64) -> f64 {
        if !self.region.contains(x) {
            return 0.0;
        }
        tilt(self.mechanism, self.c_star, x, y)
    }

    /// Logit-only form: the original predictor with its intercept shifted by `log c*`.
    pub fn shifted_logit_prob(&self, x: &[f64], y: f64) -> f64 {
        debug_assert_eq!(self.mechanism.link, LinkFunction::Logit);
        if !self.region.contains(x) {
            return 0.0;
        }
        crate::model::link::expit(self.mechanism.linear_predictor(x, y) + self.c_star.ln())
    }
}

/// `c* pi / (c* pi + (1 - pi))` evaluated without forming `1 - pi` by subtraction.
#[inline]
pub(crate) fn tilt(mechanism: &MechanismSpec, c_star: f64, x: &[f64], y: f64) -> f64 {
    let eta = mechanism.linear_predictor(x, y);
    let pi = mechanism.link.inverse(eta);
    let not_pi = mechanism.link.inverse_complement(eta);
    let num = c_star * pi;
    num / (num + not_pi)
}

pub fn augmented_mechanism_prob(model: &ModelSpec, design: &RecoveryDesign, x: &[f64], y: f64) -> Result<f64> {
    let cs = c_star(model, design)?;
    Ok(AugmentedMechanism::new(&model.mechanism, cs, &design.region).prob(x, y))
}

/// How observed rows inside the region are thinned to the fraction `c2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedSubsampling {
    /// Keep each row independently with probability `c2`.
    #[default]
    Bernoulli,
    /// Keep exactly `ceil(c2 * count)` rows, chosen uniformly.
    ExactCount,
}

/// Augmented rows `(x, y, m_A)`; observed rows first, recovered rows last.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    m_a: Vec<bool>,
    /// Number of recovered rows `n*`.
    pub n_recovered: usize,
    /// Set when the region had to be enlarged to hold `n*` missing rows.
    pub enlarged: bool,
    /// Region the sample was finally drawn from.
    pub region: Region,
}

impl AugmentedSample {
    fn empty(p: usize, region: Region) -> Self {
        Self {
            p,
            x: Vec::new(),
            y: Vec::new(),
            m_a: Vec::new(),
            n_recovered: 0,
            enlarged: false,
            region,
        }
    }

    fn push(&mut self, x: &[f64], y: f64, m_a: bool) {
        self.x.extend_from_slice(x);
        self.y.push(y);
        self.m_a.push(m_a);
        if m_a {
            self.n_recovered += 1;
        }
    }

    /// Builds a sample directly from rows (for fixtures and external data).
    pub fn from_rows(p: usize, rows: impl IntoIterator<Item = (Vec<f64>, f64, bool)>) -> Result<Self> {
        let mut s = Self::empty(p, Region::unbounded(p));
        for (x, y, m) in rows {
            if x.len() != p {
                return Err(Error::Spec(format!("row has {} covariates, expected {p}", x.len())));
            }
            s.push(&x, y, m);
        }
        Ok(s)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `n_A`, the number of augmented rows.
    pub fn n_a(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    #[inline]
    pub fn m_a(&self, i: usize) -> bool {
        self.m_a[i]
    }

    /// CSV with header `x1..xp,y,mA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        header.push("mA".into());
        wtr.write_record(&header).map_err(csv_to_io)?;
        for i in 0..self.n_a() {
            let mut rec: Vec<String> = self.x(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            rec.push(if self.m_a[i] { "1".into() } else { "0".into() });
            wtr.write_record(&rec).map_err(csv_to_io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `n* = ceil(c1 * n_miss)`, guarded against floating-point overshoot.
pub fn recovered_count(c1: f64, n_miss: usize) -> usize {
    let raw = c1 * n_miss as f64;
    let n = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize;
    n.clamp(1, n_miss.max(1)).min(n_miss)
}

fn fetch<O>(oracle: &mut O, row: usize) -> Result<f64>
where
    O: FnMut(usize) -> std::result::Result<f64, String>,
{
    match oracle(row) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Oracle {
            row,
            reason: format!("non-finite outcome {v}"),
        }),
        Err(reason) => Err(Error::Oracle { row, reason }),
    }
}

/// Draws the recovery sample for `design` and pools it with the observed rows in the region.
pub fn assemble_augmented<O>(
    data: &Dataset,
    design: &RecoveryDesign,
    mut oracle: O,
    seed: u64,
    subsampling: ObservedSubsampling,
) -> Result<AugmentedSample>
where
    O: FnMut(usize) -> std::result::Result<f64, String>,
{
    design.validate_parameters(data.p())?;
    let n_miss = data.n_miss();
    if n_miss == 0 {
        return Err(Error::DegenerateSample("no missing rows to recover".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_star = recovered_count(design.c1, n_miss);

    let mut region = design.region.clone();
    let mut enlarged = false;
    let mut candidates: Vec<usize>;
    let mut rounds = 0;
    loop {
        candidates = (0..data.n())
            .filter(|&i| data.is_missing(i) && region.contains(data.x(i)))
            .collect();
        if candidates.len() >= n_star {
            break;
        }
        rounds += 1;
        if rounds > 100_000 {
            return Err(Error::DegenerateDesign("region enlargement did not terminate".into()));
        }
        region = region.enlarged(ENLARGEMENT_STEP);
        enlarged = true;
    }

    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), n_star)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    picked.sort_unstable();

    let observed: Vec<usize> = (0..data.n())
        .filter(|&i| !data.is_missing(i) && region.contains(data.x(i)))
        .collect();
    let kept: Vec<usize> = if design.c2 >= 1.0 {
        observed
    } else {
        match subsampling {
            ObservedSubsampling::Bernoulli => observed
                .into_iter()
                .filter(|_| rng.random::<f64>() < design.c2)
                .collect(),
            ObservedSubsampling::ExactCount => {
                let k = recovered_count(design.c2, observed.len());
                let mut chosen: Vec<usize> = index::sample(&mut rng, observed.len(), k)
                    .into_iter()
                    .map(|j| observed[j])
                    .collect();
                chosen.sort_unstable();
                chosen
            }
        }
    };

    let mut sample = AugmentedSample::empty(data.p(), region);
    sample.enlarged = enlarged;
    for i in kept {
        sample.push(data.x(i), data.y(i).expect("observed row"), false);
    }
    for i in picked {
        let y = fetch(&mut oracle, i)?;
        sample.push(data.x(i), y, true);
    }
    Ok(sample)
}

/// Which end of the first covariate a ranked recovery takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankEnd {
    Highest,
    Lowest,
}

/// Recovers the `n*` missing rows with the highest (or lowest) first covariate and keeps every
/// observed row, with no region restriction.
pub fn assemble_ranked<O>(data: &Dataset, c1: f64, end: RankEnd, mut oracle: O) -> Result<AugmentedSample>
where
    O: FnMut(usize) -> std::result::Result<f64, String>,
{
    if !(c1 > 0.0 && c1 <= 1.0) {
        return Err(Error::Spec(format!("c1 must lie in (0, 1], got {c1}")));
    }
    let n_miss = data.n_miss();
    if n_miss == 0 {
        return Err(Error::DegenerateSample("no missing rows to recover".into()));
    }
    let n_star = recovered_count(c1, n_miss);
    let mut missing: Vec<usize> = (0..data.n()).filter(|&i| data.is_missing(i)).collect();
    missing.sort_by(|&a, &b| data.x(a)[0].total_cmp(&data.x(b)[0]).then(a.cmp(&b)));
    let picked: Vec<usize> = match end {
        RankEnd::Lowest => missing[..n_star].to_vec(),
        RankEnd::Highest => missing[n_miss - n_star..].to_vec(),
    };

    let mut sample = AugmentedSample::empty(data.p(), Region::unbounded(data.p()));
    for i in 0..data.n() {
        if let Some(y) = data.y(i) {
            sample.push(data.x(i), y, false);
        }
    }
    for i in picked {
        let y = fetch(&mut oracle, i)?;
        sample.push(data.x(i), y, true);
    }
    Ok(sample)
}
