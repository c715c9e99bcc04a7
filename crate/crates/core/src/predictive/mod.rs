//! Time-dependent mixture of Pólya urns for observations collected after a lag.
//!
//! Node weights are those of the propagated filter, reweighted by the draws of
//! the current sample. Unlike the filter, nodes are not shifted by new draws:
//! the sample is kept apart as value counts so that the three sources of a draw
//! (base measure, past values, current sample) stay separable.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::{BaseMeasure, FilterState, DEFAULT_TAIL};
use crate::lattice::{MultiplicityVector, WeightedNodeSet};
use crate::scalar::{from_usize, log_sum_exp, CompensatedSum, Real};

/// Compact form `A·P₀ + Σᵢ Cᵢ δ_{y*ᵢ} + B·P_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct UrnCoefficients<F> {
    /// Mass of a fresh base-measure draw.
    pub a: F,
    /// Mass of copying past distinct value `y*ᵢ`.
    pub c: Vec<F>,
    /// Mass of resampling the current sample.
    pub b: F,
}

impl<F: Real> UrnCoefficients<F> {
    pub fn total(&self) -> F {
        let mut s = CompensatedSum::new();
        s.add(self.a);
        s.add(self.b);
        for &c in &self.c {
            s.add(c);
        }
        s.value()
    }
}

#[derive(Clone)]
pub struct PredictiveState<F> {
    base: BaseMeasure<F>,
    distinct: Vec<i64>,
    index: HashMap<i64, usize>,
    /// Lexicographic order; fixes the categorical sampling order.
    nodes: Vec<MultiplicityVector>,
    totals: Vec<F>,
    log_w: Vec<F>,
    w: Vec<F>,
    sample: Vec<i64>,
    counts: BTreeMap<i64, u32>,
}

impl<F: Real> PredictiveState<F> {
    /// Mixture over `nodes` with an empty current sample.
    pub fn from_nodes(
        base: BaseMeasure<F>,
        distinct: Vec<i64>,
        nodes: &WeightedNodeSet<F>,
    ) -> Result<Self> {
        if nodes.dim() != distinct.len() {
            return Err(Error::DimensionMismatch { left: nodes.dim(), right: distinct.len() });
        }
        let nodes = nodes.clone().normalized()?;
        let mut index = HashMap::with_capacity(distinct.len());
        for (i, &y) in distinct.iter().enumerate() {
            if index.insert(y, i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate distinct value {y}")));
            }
        }
        let (keys, w): (Vec<_>, Vec<_>) = nodes.iter().map(|(n, w)| (n.clone(), w)).unzip();
        Ok(Self {
            totals: keys.iter().map(|n| from_usize(n.total())).collect(),
            log_w: w.iter().map(|w: &F| w.ln()).collect(),
            w,
            nodes: keys,
            base,
            distinct,
            index,
            sample: Vec::new(),
            counts: BTreeMap::new(),
        })
    }

    /// Exact predictive at `lag` after the filter's last time.
    pub fn exact(filter: &FilterState<F>, lag: F) -> Result<Self> {
        let cfg = crate::death_process::PropagationConfig {
            prune_eps: filter.config().prune_eps,
            lattice_budget: filter.config().lattice_budget,
        };
        let t = filter.sigma() * lag;
        let nodes = if t == F::zero() {
            filter.nodes().clone()
        } else {
            filter.kernel().propagate_exact(filter.nodes(), t, &cfg)?
        };
        Self::from_nodes(filter.base().clone(), filter.distinct().to_vec(), &nodes)
    }

    /// Predictive on the node set reached by `particles` simulated descents.
    pub fn approximate<R: Rng + ?Sized>(
        filter: &FilterState<F>,
        lag: F,
        particles: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let nodes = crate::death_process::propagate_weights_mc(
            filter.nodes(),
            filter.sigma() * lag,
            filter.theta(),
            particles.max(1),
            rng,
        )?;
        Self::from_nodes(filter.base().clone(), filter.distinct().to_vec(), &nodes)
    }

    pub fn base(&self) -> &BaseMeasure<F> {
        &self.base
    }

    pub fn theta(&self) -> F {
        self.base.theta()
    }

    pub fn distinct(&self) -> &[i64] {
        &self.distinct
    }

    pub fn index_of(&self, y: i64) -> Option<usize> {
        self.index.get(&y).copied()
    }

    /// Number of draws in the current sample.
    pub fn k(&self) -> usize {
        self.sample.len()
    }

    pub fn sample(&self) -> &[i64] {
        &self.sample
    }

    pub fn count(&self, y: i64) -> u32 {
        self.counts.get(&y).copied().unwrap_or(0)
    }

    pub fn sample_counts(&self) -> &BTreeMap<i64, u32> {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current mixture weights `p^{(k)}(n)` in canonical node order.
    pub fn weights(&self) -> impl Iterator<Item = (&MultiplicityVector, F)> + '_ {
        self.nodes.iter().zip(self.w.iter().copied())
    }

    pub fn node_set(&self) -> Result<WeightedNodeSet<F>> {
        WeightedNodeSet::from_pairs(self.distinct.len(), self.weights().map(|(n, w)| (n.clone(), w)))
    }

    pub fn coefficients(&self) -> UrnCoefficients<F> {
        let theta = self.theta();
        let k: F = from_usize(self.k());
        let mut a = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        let mut c = vec![CompensatedSum::new(); self.distinct.len()];
        for ((n, &w), &tot) in self.nodes.iter().zip(&self.w).zip(&self.totals) {
            let scale = w / (theta + tot + k);
            a.add(scale * theta);
            b.add(scale * k);
            for (ci, &ni) in c.iter_mut().zip(n.counts()) {
                if ni > 0 {
                    ci.add(scale * from_usize::<F>(ni as usize));
                }
            }
        }
        UrnCoefficients { a: a.value(), c: c.iter().map(CompensatedSum::value).collect(), b: b.value() }
    }

    /// Probability that the next draw equals `y`, via the compact form.
    pub fn pmf(&self, y: i64) -> F {
        self.pmf_with(&self.coefficients(), y)
    }

    pub fn pmf_with(&self, coef: &UrnCoefficients<F>, y: i64) -> F {
        let mut p = coef.a * self.base.pmf(y);
        if let Some(i) = self.index_of(y) {
            p = p + coef.c[i];
        }
        if self.k() > 0 {
            p = p + coef.b * from_usize::<F>(self.count(y) as usize) / from_usize(self.k());
        }
        p
    }

    /// Next-draw pmf of the single urn indexed by `n`.
    pub fn urn_pmf(&self, n: &MultiplicityVector, y: i64) -> F {
        let theta = self.theta();
        let hits = self.index_of(y).map_or(0, |i| n.get(i) as usize);
        (theta * self.base.pmf(y) + from_usize(hits + self.count(y) as usize))
            / (theta + from_usize(n.total() + self.k()))
    }

    /// Probability of `y` summed urn by urn over the mixture.
    pub fn mixture_pmf(&self, y: i64) -> F {
        self.weights().map(|(n, w)| w * self.urn_pmf(n, y)).collect::<CompensatedSum<F>>().value()
    }

    /// Pólya urn of the current sample alone, ignoring past data.
    pub fn limit_pmf(&self, y: i64) -> F {
        let theta = self.theta();
        (theta * self.base.pmf(y) + from_usize(self.count(y) as usize))
            / (theta + from_usize(self.k()))
    }

    /// Empirical pmf of the current sample.
    pub fn empirical_pmf(&self, y: i64) -> F {
        if self.k() == 0 {
            return F::zero();
        }
        from_usize::<F>(self.count(y) as usize) / from_usize(self.k())
    }

    /// Values that can carry mass: a base window of mass `1 − tail`, past values
    /// and the current sample.
    pub fn support(&self, tail: f64) -> Vec<i64> {
        let (lo, hi) = self.base.distribution().window(tail);
        let mut s: BTreeSet<i64> = (lo..=hi).filter(|&y| self.base.pmf(y) > F::zero()).collect();
        s.extend(self.distinct.iter().copied());
        s.extend(self.counts.keys().copied());
        s.into_iter().collect()
    }

    /// Conditions on `y` as the next draw of the current sample.
    pub fn observe(&mut self, y: i64) -> Result<()> {
        let theta = self.theta();
        let p0 = self.base.pmf(y);
        let idx = self.index_of(y);
        let cnt: F = from_usize(self.count(y) as usize);
        let k: F = from_usize(self.k());
        let log_w: Vec<F> = self
            .nodes
            .iter()
            .zip(&self.log_w)
            .zip(&self.totals)
            .map(|((n, &lw), &tot)| {
                let hits: F = idx.map_or(F::zero(), |i| from_usize(n.get(i) as usize));
                lw + ((theta * p0 + hits + cnt) / (theta + tot + k)).ln()
            })
            .collect();
        let norm = log_sum_exp(&log_w);
        if !norm.is_finite() {
            return Err(Error::Misspecified { value: y });
        }
        self.log_w = log_w.into_iter().map(|lw| lw - norm).collect();
        self.w = self.log_w.iter().map(|lw| lw.exp()).collect();
        self.sample.push(y);
        *self.counts.entry(y).or_insert(0) += 1;
        Ok(())
    }

    /// Index into the canonical node order, drawn by cumulative weights.
    pub(crate) fn pick_node<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        pick(&self.w, rng)
    }

    pub(crate) fn node(&self, i: usize) -> &MultiplicityVector {
        &self.nodes[i]
    }

    /// Draws the next observation: a node, then a base draw, a past value or a
    /// resampled current value in proportion `θ : |n| : k`; then conditions on it.
    pub fn sample_next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<i64> {
        let y = self.propose(rng);
        self.observe(y)?;
        Ok(y)
    }

    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let n = &self.nodes[self.pick_node(rng)];
        let theta = crate::scalar::to_f64(self.theta());
        let (m, k) = (n.total() as f64, self.k() as f64);
        let u = rng.random::<f64>() * (theta + m + k);
        if u < theta {
            self.base.sample(rng)
        } else if u < theta + m {
            let mut r = rng.random_range(0..n.total());
            for (i, &c) in n.counts().iter().enumerate() {
                if r < c as usize {
                    return self.distinct[i];
                }
                r -= c as usize;
            }
            unreachable!("draw below the node total")
        } else {
            self.sample[rng.random_range(0..self.sample.len())]
        }
    }

    /// Draws `k` further observations, conditioning on each in turn.
    pub fn sample_sequence<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<Vec<i64>> {
        (0..k).map(|_| self.sample_next(rng)).collect()
    }
}

impl<F: Real> std::fmt::Debug for PredictiveState<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredictiveState")
            .field("distinct", &self.distinct)
            .field("nodes", &self.nodes.iter().zip(&self.w).collect::<Vec<_>>())
            .field("k", &self.k())
            .finish()
    }
}

/// Index drawn with probability proportional to `w`, scanning in order.
pub(crate) fn pick<F: Real, R: Rng + ?Sized>(w: &[F], rng: &mut R) -> usize {
    let total: F = w.iter().copied().collect::<CompensatedSum<F>>().value();
    let u = F::from(rng.random::<f64>()).expect("unit float") * total;
    let mut acc = F::zero();
    let mut last = 0;
    for (i, &x) in w.iter().enumerate() {
        if x > F::zero() {
            last = i;
            acc = acc + x;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Exact predictive from a filter, propagated by `lag`.
pub fn exact_predict<F: Real>(filter: &FilterState<F>, lag: F) -> Result<PredictiveState<F>> {
    PredictiveState::exact(filter, lag)
}

/// Particle predictive from a filter, propagated by `lag`.
pub fn approx_predict<F: Real, R: Rng + ?Sized>(
    filter: &FilterState<F>,
    lag: F,
    particles: usize,
    rng: &mut R,
) -> Result<PredictiveState<F>> {
    PredictiveState::approximate(filter, lag, particles, rng)
}

/// `Corr(Y_t, Y_{t+s}) = e^{−θs/2} / (θ + 1)`.
pub fn correlation<F: Real>(theta: F, s: F) -> F {
    let two = F::one() + F::one();
    (-theta * s / two).exp() / (theta + F::one())
}

/// `½ Σ |p(y) − q(y)|` over `support`.
pub fn total_variation<F: Real>(support: &[i64], p: impl Fn(i64) -> F, q: impl Fn(i64) -> F) -> F {
    let s: CompensatedSum<F> = support.iter().map(|&y| (p(y) - q(y)).abs()).collect();
    s.value() / (F::one() + F::one())
}

/// Tail mass ignored when summing over a countable base support.
pub const SUPPORT_TAIL: f64 = DEFAULT_TAIL;

#[cfg(test)]
mod tests;
