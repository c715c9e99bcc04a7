//! Posterior law of the latent measure across data-collection times.
//!
//! The state is a finite mixture `Σ_n w_n Π_{α + Σ nᵢ δ_{y*ᵢ}}` over multiplicity
//! vectors `n` indexing the distinct values seen so far. Observations reweight
//! and shift the nodes; time propagation sends weight down the lattice through
//! the death process.

mod base;

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use base::{BaseDistribution, BaseMeasure, DEFAULT_TAIL};

use crate::death_process::{
    propagate_weights_mc, DeathKernel, PropagationConfig, RowFallback, DEFAULT_LATTICE_BUDGET,
};
use crate::error::{Error, Result};
use crate::lattice::{lattice_size, MultiplicityVector, WeightedNodeSet, DEFAULT_PRUNE_EPS};
use crate::scalar::{from_usize, lit, log_sum_exp, to_f64, Real};

/// How node weights are carried across a time lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// Exact sweep when the lattice fits the budget, particles otherwise.
    Auto,
    /// Always the exact sweep; oversized lattices are refused.
    Exact,
    /// Always particles.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub prune_eps: Option<f64>,
    pub lattice_budget: u64,
    pub particles: usize,
    pub seed: u64,
    pub propagation: Propagation,
    #[serde(skip)]
    pub fallback: RowFallback,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            prune_eps: Some(DEFAULT_PRUNE_EPS),
            lattice_budget: DEFAULT_LATTICE_BUDGET,
            particles: 100_000,
            seed: 0,
            propagation: Propagation::Auto,
            fallback: RowFallback::default(),
        }
    }
}

/// Observations collected at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub time: f64,
    pub values: Vec<i64>,
}

#[derive(Clone)]
pub struct FilterState<F> {
    distinct: Vec<i64>,
    index: HashMap<i64, usize>,
    nodes: WeightedNodeSet<F>,
    base: BaseMeasure<F>,
    sigma: F,
    log_ml: F,
    config: FilterConfig,
    kernel: Arc<DeathKernel<F>>,
    advances: u64,
}

impl<F: Real> FilterState<F> {
    /// Prior state: no distinct values, all mass on the empty node.
    pub fn init(base: BaseMeasure<F>, sigma: F) -> Result<Self> {
        Self::with_config(base, sigma, FilterConfig::default())
    }

    pub fn with_config(base: BaseMeasure<F>, sigma: F, config: FilterConfig) -> Result<Self> {
        if !(sigma > F::zero() && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let kernel = Arc::new(DeathKernel::with_fallback(base.theta(), config.fallback));
        Ok(Self {
            distinct: Vec::new(),
            index: HashMap::new(),
            nodes: WeightedNodeSet::singleton(MultiplicityVector::zeros(0)),
            base,
            sigma,
            log_ml: F::zero(),
            config,
            kernel,
            advances: 0,
        })
    }

    /// State with prescribed distinct values and node weights, as if filtered.
    pub fn from_parts(
        base: BaseMeasure<F>,
        sigma: F,
        distinct: Vec<i64>,
        nodes: WeightedNodeSet<F>,
        config: FilterConfig,
    ) -> Result<Self> {
        let mut s = Self::with_config(base, sigma, config)?;
        if nodes.dim() != distinct.len() {
            return Err(Error::DimensionMismatch { left: nodes.dim(), right: distinct.len() });
        }
        for (i, &y) in distinct.iter().enumerate() {
            if s.index.insert(y, i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate distinct value {y}")));
            }
        }
        s.distinct = distinct;
        s.nodes = nodes.normalized()?;
        Ok(s)
    }

    pub fn distinct(&self) -> &[i64] {
        &self.distinct
    }

    pub fn index_of(&self, y: i64) -> Option<usize> {
        self.index.get(&y).copied()
    }

    pub fn nodes(&self) -> &WeightedNodeSet<F> {
        &self.nodes
    }

    pub fn base(&self) -> &BaseMeasure<F> {
        &self.base
    }

    pub fn theta(&self) -> F {
        self.base.theta()
    }

    pub fn sigma(&self) -> F {
        self.sigma
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn kernel(&self) -> &Arc<DeathKernel<F>> {
        &self.kernel
    }

    pub fn log_marginal_likelihood(&self) -> F {
        self.log_ml
    }

    /// One-step predictive density of `y` under the current state.
    pub fn predictive_density(&self, y: i64) -> F {
        let theta = self.theta();
        let p0 = self.base.pmf(y);
        let idx = self.index_of(y);
        self.nodes
            .iter()
            .map(|(n, w)| {
                let hits = idx.map_or(0, |i| n.get(i));
                w * (theta * p0 + from_usize::<F>(hits as usize)) / (theta + from_usize(n.total()))
            })
            .sum()
    }

    /// Conditions on one more observation at the current time.
    pub fn observe(&mut self, y: i64) -> Result<()> {
        let theta = self.theta();
        let p0 = self.base.pmf(y);
        let idx = match self.index_of(y) {
            Some(i) => i,
            None => {
                if p0 <= F::zero() {
                    return Err(Error::Misspecified { value: y });
                }
                let k = self.distinct.len();
                self.nodes = self.nodes.extend_support(k + 1)?;
                self.distinct.push(y);
                self.index.insert(y, k);
                k
            }
        };
        let mut keys = Vec::with_capacity(self.nodes.len());
        let mut log_w = Vec::with_capacity(self.nodes.len());
        for (n, w) in self.nodes.iter() {
            let f = (theta * p0 + from_usize::<F>(n.get(idx) as usize))
                / (theta + from_usize(n.total()));
            if w > F::zero() && f > F::zero() {
                keys.push(n.incremented(idx));
                log_w.push(w.ln() + f.ln());
            }
        }
        let log_norm = log_sum_exp(&log_w);
        if !log_norm.is_finite() {
            return Err(Error::Misspecified { value: y });
        }
        self.log_ml = self.log_ml + log_norm;
        let nodes = WeightedNodeSet::from_pairs(
            self.distinct.len(),
            keys.into_iter().zip(log_w).map(|(n, lw)| (n, (lw - log_norm).exp())),
        )?;
        self.nodes = self.finish(nodes)?;
        Ok(())
    }

    pub fn update_one(&self, y: i64) -> Result<Self> {
        let mut s = self.clone();
        s.observe(y)?;
        Ok(s)
    }

    pub fn update_batch(&self, batch: &[i64]) -> Result<Self> {
        let mut s = self.clone();
        for &y in batch {
            s.observe(y)?;
        }
        Ok(s)
    }

    /// Propagates the node weights over a data lag, rescaled to `σ·lag`.
    pub fn advance_time(&self, lag: F) -> Result<Self> {
        if !(lag >= F::zero() && lag.is_finite()) {
            return Err(Error::InvalidParameter(format!("lag must be nonnegative, got {lag}")));
        }
        let mut s = self.clone();
        s.nodes = self.propagated(lag)?;
        s.advances += 1;
        Ok(s)
    }

    /// Node weights after `σ·lag`, exact or by particles per the configuration.
    pub(crate) fn propagated(&self, lag: F) -> Result<WeightedNodeSet<F>> {
        let t = self.sigma * lag;
        if t == F::zero() {
            return Ok(self.nodes.clone());
        }
        let size = lattice_size(&self.nodes.top())?;
        let exact = match self.config.propagation {
            Propagation::Exact => true,
            Propagation::Approximate => false,
            Propagation::Auto => size <= self.config.lattice_budget,
        };
        if exact {
            let cfg = PropagationConfig {
                prune_eps: self.config.prune_eps,
                lattice_budget: self.config.lattice_budget,
            };
            self.kernel.propagate_exact(&self.nodes, t, &cfg)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(self.advances);
            propagate_weights_mc(&self.nodes, t, self.theta(), self.config.particles.max(1), &mut rng)
        }
    }

    fn finish(&self, nodes: WeightedNodeSet<F>) -> Result<WeightedNodeSet<F>> {
        match self.config.prune_eps {
            Some(eps) => nodes.pruned(lit(eps)),
            None => nodes.normalized(),
        }
    }

    /// Serializable copy of the state.
    pub fn snapshot(&self) -> FilterSnapshot {
        FilterSnapshot {
            distinct: self.distinct.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|(n, w)| (n.counts().to_vec(), to_f64(w)))
                .collect(),
            theta: to_f64(self.theta()),
            sigma: to_f64(self.sigma),
            base: self.base.distribution().clone(),
            log_ml: to_f64(self.log_ml),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.snapshot())
            .map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    pub fn from_snapshot(snap: &FilterSnapshot, config: FilterConfig) -> Result<Self> {
        let base = BaseMeasure::new(lit(snap.theta), snap.base.clone())?;
        let k = snap.distinct.len();
        let mut nodes = WeightedNodeSet::new(k);
        for (counts, w) in &snap.nodes {
            if counts.len() != k {
                return Err(Error::DimensionMismatch { left: counts.len(), right: k });
            }
            nodes.add(MultiplicityVector::from_counts(counts.clone()), lit(*w))?;
        }
        let mut s = Self::from_parts(base, lit(snap.sigma), snap.distinct.clone(), nodes, config)?;
        s.log_ml = lit(snap.log_ml);
        Ok(s)
    }

    pub fn from_json(json: &str, config: FilterConfig) -> Result<Self> {
        let snap: FilterSnapshot =
            serde_json::from_str(json).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Self::from_snapshot(&snap, config)
    }
}

impl<F: Real> std::fmt::Debug for FilterState<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilterState")
            .field("distinct", &self.distinct)
            .field("nodes", &self.nodes)
            .field("theta", &self.theta())
            .field("sigma", &self.sigma)
            .field("log_ml", &self.log_ml)
            .finish()
    }
}

/// JSON form of a [`FilterState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSnapshot {
    pub distinct: Vec<i64>,
    pub nodes: Vec<(Vec<u32>, f64)>,
    pub theta: f64,
    pub sigma: f64,
    pub base: BaseDistribution,
    pub log_ml: f64,
}

/// Filters the batches in time order, advancing between consecutive times.
pub fn run_filter<F: Real>(
    base: BaseMeasure<F>,
    sigma: F,
    batches: &[Batch],
    config: FilterConfig,
) -> Result<FilterState<F>> {
    let mut state = FilterState::with_config(base, sigma, config)?;
    let mut last: Option<f64> = None;
    for b in batches {
        if let Some(prev) = last {
            if !(b.time > prev) {
                return Err(Error::InvalidParameter(format!(
                    "batch times must increase strictly ({prev} then {})",
                    b.time
                )));
            }
            state = state.advance_time(lit(b.time - prev))?;
        }
        for &y in &b.values {
            state.observe(y)?;
        }
        last = Some(b.time);
    }
    Ok(state)
}

/// One hyperparameter configuration with its prior mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: f64,
    pub sigma: f64,
    pub prior: f64,
}

/// Filter output at one grid point.
#[derive(Clone)]
pub struct HyperPoint<F> {
    pub point: GridPoint,
    pub log_ml: f64,
    pub posterior: f64,
    pub filter: FilterState<F>,
}

/// Product grid of `(θ, prior)` and `(σ, prior)` pairs.
pub fn product_grid(thetas: &[(f64, f64)], sigmas: &[(f64, f64)]) -> Vec<GridPoint> {
    thetas
        .iter()
        .flat_map(|&(theta, pt)| {
            sigmas.iter().map(move |&(sigma, ps)| GridPoint { theta, sigma, prior: pt * ps })
        })
        .collect()
}

/// `P(θ, σ | data) ∝ prior · P(data | θ, σ)`, one filter per grid point.
pub fn hyper_posterior<F: Real>(
    grid: &[GridPoint],
    p0: &BaseDistribution,
    batches: &[Batch],
    config: FilterConfig,
) -> Result<Vec<HyperPoint<F>>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    let mass: f64 = grid.iter().map(|g| g.prior).sum();
    if grid.iter().any(|g| !(g.prior >= 0.0)) || (mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("grid prior weights sum to {mass}")));
    }
    let filters: Vec<FilterState<F>> = grid
        .par_iter()
        .map(|g| {
            let base = BaseMeasure::new(lit(g.theta), p0.clone())?;
            run_filter(base, lit(g.sigma), batches, config)
        })
        .collect::<Result<_>>()?;
    let log_post: Vec<f64> = grid
        .iter()
        .zip(&filters)
        .map(|(g, f)| g.prior.ln() + to_f64(f.log_marginal_likelihood()))
        .collect();
    let norm = log_sum_exp(&log_post);
    if !norm.is_finite() {
        return Err(Error::ZeroLikelihood);
    }
    Ok(grid
        .iter()
        .zip(filters)
        .zip(log_post)
        .map(|((g, filter), lp)| HyperPoint {
            point: *g,
            log_ml: to_f64(filter.log_marginal_likelihood()),
            posterior: (lp - norm).exp(),
            filter,
        })
        .collect())
}
