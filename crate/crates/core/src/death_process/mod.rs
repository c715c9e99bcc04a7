//! Pure-death processes driving the time propagation of mixture weights.
//!
//! The level process jumps `m → m−1` at rate `λ_m = m(θ+m−1)/2`. On the node
//! lattice the process removes one unit of multiplicity at a time, chosen
//! uniformly among the retained items, so a transition `m → n` factors into a
//! level transition `|m| → |n|` times the multivariate hypergeometric mass of
//! the removed sub-multiset.

mod entrance;
mod level;
mod simulate;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::factorial::ln_binomial;

pub use entrance::{dm_distribution, dm_probability};
pub use level::{
    level_row_closed_form, level_row_uniformized, level_transition, rate,
    DEGENERATE_RATE_GAP, INSTABILITY_DELTA,
};
pub use simulate::{
    level_row_monte_carlo, propagate_weights_mc, sample_landing_node, simulate_level,
};

use crate::error::{Error, Result};
use crate::lattice::{lattice_size, MultiplicityVector, WeightedNodeSet};
use crate::scalar::{lit, to_f64, Real};

/// Default maximum lattice size for exact propagation.
pub const DEFAULT_LATTICE_BUDGET: u64 = 100_000;

/// `HG(m − n; m, |m − n|)`: probability that removing `|m − n|` items uniformly
/// without replacement from composition `m` leaves `n`.
pub fn hypergeometric_removal<F: Real>(m: &MultiplicityVector, n: &MultiplicityVector) -> Result<F> {
    if !n.le(m) {
        return Err(Error::NotBelow {
            lower: n.counts().to_vec(),
            upper: m.counts().to_vec(),
        });
    }
    let ln: f64 = m
        .counts()
        .iter()
        .zip(n.counts())
        .map(|(&a, &b)| ln_binomial(u64::from(a), u64::from(b)))
        .sum::<f64>()
        - ln_binomial(m.total() as u64, n.total() as u64);
    Ok(lit(ln.exp()))
}

/// `p_{m,n}(t)` on the node lattice from the closed-form level transition.
pub fn node_transition<F: Real>(
    m: &MultiplicityVector,
    n: &MultiplicityVector,
    t: F,
    theta: F,
) -> Result<F> {
    let hg: F = hypergeometric_removal(m, n)?;
    Ok(level_transition(m.total(), n.total(), t, theta)? * hg)
}

/// `p_t(M, n) = Σ_{m ∈ M, m ≥ n} w_m p_{m,n}(t)`.
pub fn reach_probability<F: Real>(
    sources: &WeightedNodeSet<F>,
    n: &MultiplicityVector,
    t: F,
    theta: F,
) -> Result<F> {
    DeathKernel::new(theta).reach_probability(sources, n, t)
}

/// Exact propagation over the full lattice below the sources, pruned at the
/// default threshold.
pub fn propagate_weights_exact<F: Real>(
    sources: &WeightedNodeSet<F>,
    t: F,
    theta: F,
) -> Result<WeightedNodeSet<F>> {
    DeathKernel::new(theta).propagate_exact(sources, t, &PropagationConfig::default())
}

/// How to obtain a level row when the closed form cannot be certified.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RowFallback {
    /// Deterministic uniformization of the level chain.
    #[default]
    Uniformization,
    /// Empirical frequencies of simulated trajectories.
    MonteCarlo { trajectories: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// Nodes lighter than this are dropped after propagation; `None` keeps all.
    pub prune_eps: Option<f64>,
    /// Maximum `|L(M)|` accepted by exact propagation.
    pub lattice_budget: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            prune_eps: Some(crate::lattice::DEFAULT_PRUNE_EPS),
            lattice_budget: DEFAULT_LATTICE_BUDGET,
        }
    }
}

type RowKey = (usize, u64);

/// Level-transition evaluator for a fixed `θ`, with a row cache keyed by
/// `(m, t)` that is safe to share across threads.
#[derive(Debug)]
pub struct DeathKernel<F> {
    theta: F,
    fallback: RowFallback,
    cache: RwLock<HashMap<RowKey, Arc<Vec<F>>>>,
}

impl<F: Real> DeathKernel<F> {
    pub fn new(theta: F) -> Self {
        Self::with_fallback(theta, RowFallback::default())
    }

    pub fn with_fallback(theta: F, fallback: RowFallback) -> Self {
        Self {
            theta,
            fallback,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn theta(&self) -> F {
        self.theta
    }

    pub fn fallback(&self) -> RowFallback {
        self.fallback
    }

    pub fn cached_rows(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    /// `{p_{m,n}(t)}_{n=0..=m}`: the closed form when it certifies, otherwise the
    /// configured fallback.
    pub fn row(&self, m: usize, t: F) -> Result<Arc<Vec<F>>> {
        let key = (m, to_f64(t).to_bits());
        if let Some(row) = self.cache.read().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(row);
        }
        let row = match level_row_closed_form(m, t, self.theta) {
            Ok(row) => row,
            Err(Error::NumericalInstability { .. }) => match self.fallback {
                RowFallback::Uniformization => level_row_uniformized(m, t, self.theta)?,
                RowFallback::MonteCarlo { trajectories, seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        seed ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ key.1,
                    );
                    level_row_monte_carlo(m, t, self.theta, trajectories, &mut rng)
                }
            },
            Err(e) => return Err(e),
        };
        let row = Arc::new(row);
        if let Ok(mut c) = self.cache.write() {
            c.entry(key).or_insert_with(|| row.clone());
        }
        Ok(row)
    }

    pub fn level_transition(&self, m: usize, n: usize, t: F) -> Result<F> {
        if n > m {
            return Err(Error::InvalidLevel { m, n });
        }
        Ok(self.row(m, t)?[n])
    }

    pub fn node_transition(
        &self,
        m: &MultiplicityVector,
        n: &MultiplicityVector,
        t: F,
    ) -> Result<F> {
        let hg: F = hypergeometric_removal(m, n)?;
        Ok(self.row(m.total(), t)?[n.total()] * hg)
    }

    pub fn reach_probability(
        &self,
        sources: &WeightedNodeSet<F>,
        n: &MultiplicityVector,
        t: F,
    ) -> Result<F> {
        let mut acc = crate::scalar::CompensatedSum::new();
        for (m, w) in sources.iter() {
            if n.le(m) {
                acc.add(w * self.node_transition(m, n, t)?);
            }
        }
        Ok(acc.value())
    }

    /// `{n ↦ p_t(M, n)}` over `L(M)`, accumulated source by source.
    pub fn propagate_exact(
        &self,
        sources: &WeightedNodeSet<F>,
        t: F,
        config: &PropagationConfig,
    ) -> Result<WeightedNodeSet<F>> {
        let top = sources.top();
        let size = lattice_size(&top)?;
        if size > config.lattice_budget {
            return Err(Error::LatticeBudget {
                size: u128::from(size),
                budget: u128::from(config.lattice_budget),
            });
        }
        // dense accumulator over L(top), mixed-radix index with the last
        // coordinate fastest
        let dims: Vec<usize> = top.counts().iter().map(|&c| c as usize + 1).collect();
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let mut acc = vec![crate::scalar::CompensatedSum::<F>::new(); size as usize];
        for (m, w) in sources.iter() {
            if w == F::zero() {
                continue;
            }
            let row = self.row(m.total(), t)?;
            let upper = m.counts();
            let log_binoms: Vec<Vec<f64>> = upper
                .iter()
                .map(|&c| (0..=c).map(|j| ln_binomial(u64::from(c), u64::from(j))).collect())
                .collect();
            let total = m.total() as u64;
            let log_levels: Vec<f64> = (0..=total).map(|l| ln_binomial(total, l)).collect();
            let mut cur = vec![0u32; upper.len()];
            let (mut idx, mut level) = (0usize, 0usize);
            loop {
                let p_level = row[level];
                if p_level != F::zero() {
                    let ln_hg: f64 = cur
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| log_binoms[i][c as usize])
                        .sum::<f64>()
                        - log_levels[level];
                    acc[idx].add(w * p_level * lit::<F>(ln_hg.exp()));
                }
                // odometer step over n ≤ m
                let mut done = true;
                for i in (0..cur.len()).rev() {
                    if cur[i] < upper[i] {
                        cur[i] += 1;
                        idx += strides[i];
                        level += 1;
                        done = false;
                        break;
                    }
                    idx -= cur[i] as usize * strides[i];
                    level -= cur[i] as usize;
                    cur[i] = 0;
                }
                if done {
                    break;
                }
            }
        }
        let decode = |mut idx: usize| -> MultiplicityVector {
            let counts = strides
                .iter()
                .map(|&s| {
                    let c = idx / s;
                    idx %= s;
                    c as u32
                })
                .collect();
            MultiplicityVector::from_counts(counts)
        };
        let mut out = WeightedNodeSet::from_pairs(
            sources.dim(),
            acc.iter()
                .enumerate()
                .filter(|(_, s)| s.value() > F::zero())
                .map(|(i, s)| (decode(i), s.value())),
        )?;
        match config.prune_eps {
            Some(eps) => out.prune(lit(eps))?,
            None => out.normalize()?,
        }
        Ok(out)
    }
}
