//! Product quadrature grids over `(X, Y)` restricted to a region.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::model::covariates::{kde_bandwidth, kde_density_with};
use crate::model::{DimRange, Marginal, ModelSpec, Region};
use crate::quadrature::rules::{gauss_hermite, gauss_legendre};

/// Orders and tolerances of the expectation engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss-Hermite order for an unrestricted Normal covariate.
    pub hermite_x: usize,
    /// Gauss-Hermite order for `Y | X`.
    pub hermite_y: usize,
    /// Gauss-Legendre order per panel on a restricted Normal covariate.
    pub legendre_order: usize,
    /// Maximum panel width, in units of the marginal's smoothness scale (the standard
    /// deviation for a Normal covariate).
    pub panel_width_sd: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            hermite_x: 40,
            hermite_y: 40,
            legendre_order: 10,
            panel_width_sd: 2.5,
        }
    }
}

impl QuadratureConfig {
    /// Every order doubled and every tolerance tightened, for convergence checks.
    pub fn refined(&self) -> Self {
        Self {
            hermite_x: 2 * self.hermite_x,
            hermite_y: 2 * self.hermite_y,
            legendre_order: 2 * self.legendre_order,
            panel_width_sd: 0.5 * self.panel_width_sd,
        }
    }
}

/// Nodes and density-weighted weights for one covariate restricted to a range.
#[derive(Clone, Debug, Default)]
pub struct MarginalNodes {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn marginal_nodes(m: &Marginal, range: &DimRange, cfg: &QuadratureConfig) -> MarginalNodes {
    let mut out = MarginalNodes::default();
    if let (Marginal::Normal { mean, sd }, DimRange::Unbounded) = (m, range) {
        let rule = gauss_hermite(cfg.hermite_x);
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            out.x.push(mean + sd * SQRT_2 * t);
            out.w.push(w / PI.sqrt());
        }
        return out;
    }
    let (lo, hi) = m.support();
    let scale = m.smoothness_scale();
    // The kernel bandwidth is computed once rather than on every density call.
    let bandwidth = match m {
        Marginal::Empirical { sample } => kde_bandwidth(sample),
        _ => 0.0,
    };
    let density = |x: f64| match m {
        Marginal::Empirical { sample } => kde_density_with(sample, bandwidth, x),
        _ => m.density(x),
    };
    for iv in range.intervals() {
        let a = iv.lo.max(lo);
        let b = iv.hi.min(hi);
        if !(b > a) {
            continue;
        }
        let rule = gauss_legendre(cfg.legendre_order);
        let panels = ((b - a) / (cfg.panel_width_sd * scale)).ceil().max(1.0) as usize;
        let width = (b - a) / panels as f64;
        let half = 0.5 * width;
        for k in 0..panels {
            let mid = a + (k as f64 + 0.5) * width;
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = mid + half * t;
                let d = density(x);
                if d > 0.0 {
                    out.x.push(x);
                    out.w.push(half * w * d);
                }
            }
        }
    }
    out
}

/// Nodes lighter than this fraction of the heaviest one are dropped; their total contribution
/// is far below the rule's own error.
const PRUNE_RELATIVE: f64 = 1e-15;

fn prune(nodes: MarginalNodes) -> MarginalNodes {
    let floor = PRUNE_RELATIVE * nodes.w.iter().copied().fold(0.0, f64::max);
    let (x, w) = nodes.x.into_iter().zip(nodes.w).filter(|(_, w)| *w > floor).unzip();
    MarginalNodes { x, w }
}

/// Tensor-product grid: covariate nodes inside the region times Gauss-Hermite nodes for `Y | X`.
///
/// `sum_k weight_k f(x_k, y_k)` approximates `E[f(X, Y) 1{X in region}]`.
#[derive(Clone, Debug)]
pub struct Grid {
    p: usize,
    xs: Vec<f64>,
    wx: Vec<f64>,
    y_mean: Vec<f64>,
    y_offsets: Vec<f64>,
    wy: Vec<f64>,
}

impl Grid {
    pub fn build(model: &ModelSpec, region: &Region, cfg: &QuadratureConfig) -> Result<Self> {
        let p = model.p();
        region.validate(p)?;
        let per_dim: Vec<MarginalNodes> = model
            .covariates
            .marginals
            .iter()
            .zip(&region.dims)
            .map(|(m, r)| prune(marginal_nodes(m, r, cfg)))
            .collect();
        let floor = PRUNE_RELATIVE
            * per_dim
                .iter()
                .map(|d| d.w.iter().copied().fold(0.0, f64::max))
                .product::<f64>();

        let mut xs = Vec::new();
        let mut wx = Vec::new();
        if per_dim.iter().all(|d| !d.x.is_empty()) {
            let mut idx = vec![0usize; p];
            'outer: loop {
                let w: f64 = per_dim.iter().enumerate().map(|(j, d)| d.w[idx[j]]).product();
                if w > floor {
                    xs.extend(per_dim.iter().enumerate().map(|(j, d)| d.x[idx[j]]));
                    wx.push(w);
                }
                for j in (0..p).rev() {
                    idx[j] += 1;
                    if idx[j] < per_dim[j].x.len() {
                        continue 'outer;
                    }
                    idx[j] = 0;
                }
                break;
            }
        }
        let y_mean = xs.chunks(p).map(|x| model.regression.mean(x)).collect();
        let rule = gauss_hermite(cfg.hermite_y);
        let sigma = model.regression.sigma_y;
        let y_nodes = prune(MarginalNodes {
            x: rule.nodes.iter().map(|t| sigma * SQRT_2 * t).collect(),
            w: rule.weights.iter().map(|w| w / PI.sqrt()).collect(),
        });
        Ok(Self {
            p,
            xs,
            wx,
            y_mean,
            y_offsets: y_nodes.x,
            wy: y_nodes.w,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of covariate nodes.
    pub fn x_len(&self) -> usize {
        self.wx.len()
    }

    /// Total number of `(x, y)` nodes.
    pub fn len(&self) -> usize {
        self.wx.len() * self.wy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wx.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.p..(i + 1) * self.p]
    }

    /// Covariate mass captured by the grid, `Pr(X in region)`.
    pub fn x_mass(&self) -> f64 {
        self.wx.iter().sum()
    }

    /// Visits every node as `(x, y, weight)`.
    #[inline]
    pub fn for_each<F: FnMut(&[f64], f64, f64)>(&self, mut f: F) {
        for i in 0..self.wx.len() {
            let x = self.x(i);
            let m = self.y_mean[i];
            let w = self.wx[i];
            for (d, wy) in self.y_offsets.iter().zip(&self.wy) {
                f(x, m + d, w * wy);
            }
        }
    }

    /// `E[f(X, Y) 1{X in region}]`, failing on the first non-finite integrand value.
    pub fn expect<F: FnMut(&[f64], f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.wx.len() {
            let x = self.x(i);
            let m = self.y_mean[i];
            let w = self.wx[i];
            for (d, wy) in self.y_offsets.iter().zip(&self.wy) {
                let y = m + d;
                let v = f(x, y);
                if !v.is_finite() {
                    return Err(Error::NonFinite { x: x.to_vec(), y });
                }
                total += w * wy * v;
            }
        }
        Ok(total)
    }
}
