//! Incomplete datasets and synthetic generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Rows `(x, y, m)` with `y` absent exactly when `m = 1`. Covariates are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    p: usize,
    x: Vec<f64>,
    y: Vec<Option<f64>>,
}

impl Dataset {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn with_capacity(p: usize, n: usize) -> Self {
        Self {
            p,
            x: Vec::with_capacity(n * p),
            y: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x: &[f64], y: Option<f64>) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Spec(format!("row has {} covariates, expected {}", x.len(), self.p)));
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn y(&self, i: usize) -> Option<f64> {
        self.y[i]
    }

    /// Missing indicator `m_i`.
    #[inline]
    pub fn is_missing(&self, i: usize) -> bool {
        self.y[i].is_none()
    }

    pub fn n_miss(&self) -> usize {
        self.y.iter().filter(|v| v.is_none()).count()
    }

    pub fn n_obs(&self) -> usize {
        self.n() - self.n_miss()
    }
}

/// A simulated dataset together with the withheld outcomes of its missing rows.
#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub dataset: Dataset,
    /// Complete outcome vector; entries of missing rows act as the recovery oracle.
    pub complete_y: Vec<f64>,
}

impl GeneratedData {
    /// Oracle returning the true outcome of row `i`.
    pub fn oracle(&self) -> impl FnMut(usize) -> std::result::Result<f64, String> + '_ {
        move |i| {
            self.complete_y
                .get(i)
                .copied()
                .ok_or_else(|| format!("no outcome recorded for row {i}"))
        }
    }
}

/// Draw `n` rows from the model: `X` from the covariate law, `Y | X` normal, `M` Bernoulli.
pub fn generate_dataset(model: &ModelSpec, n: usize, seed: u64) -> GeneratedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = model.p();
    let mut dataset = Dataset::with_capacity(p, n);
    let mut complete_y = Vec::with_capacity(n);
    let mut x = vec![0.0; p];
    for _ in 0..n {
        model.covariates.sample_into(&mut rng, &mut x);
        let eps: f64 = rng.sample(StandardNormal);
        let y = model.regression.mean(&x) + model.regression.sigma_y * eps;
        let missing = rng.random::<f64>() < model.mechanism.prob(&x, y);
        dataset.x.extend_from_slice(&x);
        dataset.y.push(if missing { None } else { Some(y) });
        complete_y.push(y);
    }
    GeneratedData {
        dataset,
        complete_y,
    }
}

/// Re-impose missingness on complete rows using the model's mechanism.
pub fn inject_missingness<R: Rng + ?Sized>(
    model: &ModelSpec,
    xs: &[f64],
    ys: &[f64],
    rng: &mut R,
) -> GeneratedData {
    let p = model.p();
    let n = ys.len();
    let mut dataset = Dataset::with_capacity(p, n);
    for (i, &y) in ys.iter().enumerate() {
        let x = &xs[i * p..(i + 1) * p];
        let missing = rng.random::<f64>() < model.mechanism.prob(x, y);
        dataset.x.extend_from_slice(x);
        dataset.y.push(if missing { None } else { Some(y) });
    }
    GeneratedData {
        dataset,
        complete_y: ys.to_vec(),
    }
}
