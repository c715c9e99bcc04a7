//! Random partitions induced by ties among predictive draws.
//!
//! Customers `1..=n` are grouped by equal value. Three samplers target the
//! same law: the compact-coefficient sampler, the conveyor-belt restaurant and
//! grouping of plain predictive draws. An exhaustive oracle evaluates the law
//! on small instances.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::{pick, PredictiveState, SUPPORT_TAIL};
use crate::scalar::{from_usize, lit, CompensatedSum, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub value: i64,
    pub size: usize,
}

/// Blocks in order of creation, with the block of each customer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSample {
    pub blocks: Vec<Block>,
    #[serde(skip)]
    pub assignment: Vec<usize>,
}

impl PartitionSample {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block sizes sorted in decreasing order.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(|b| b.size).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    /// Canonical labelling of the set partition: blocks numbered by first customer.
    pub fn set_partition(&self) -> Vec<usize> {
        canonical(&self.assignment)
    }

    fn push(&mut self, value: i64) {
        match self.blocks.iter().position(|b| b.value == value) {
            Some(j) => {
                self.blocks[j].size += 1;
                self.assignment.push(j);
            }
            None => {
                self.assignment.push(self.blocks.len());
                self.blocks.push(Block { value, size: 1 });
            }
        }
    }
}

/// Groups a sequence of draws by value.
pub fn group_values(values: &[i64]) -> PartitionSample {
    let mut p = PartitionSample { blocks: Vec::new(), assignment: Vec::new() };
    for &v in values {
        p.push(v);
    }
    p
}

/// Relabels blocks by order of first appearance.
pub fn canonical(assignment: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    assignment
        .iter()
        .map(|a| {
            let next = map.len();
            *map.entry(*a).or_insert(next)
        })
        .collect()
}

/// Every set partition of `{0..n}` as a canonical labelling.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let limit = if prefix.is_empty() { 0 } else { max + 1 };
        for b in 0..=limit {
            prefix.push(b);
            rec(prefix, max.max(b), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(&mut Vec::with_capacity(n), 0, n, &mut out);
    }
    out
}

/// Block sizes of a labelling, in order of first appearance.
pub fn block_sizes(assignment: &[usize]) -> Vec<usize> {
    let c = canonical(assignment);
    let mut sizes = vec![0; c.iter().max().map_or(0, |m| m + 1)];
    for b in c {
        sizes[b] += 1;
    }
    sizes
}

/// Dirichlet-process EPPF `θ^k / (θ)_n · ∏ (nᵢ − 1)!` with `(θ)_n` ascending.
pub fn dp_eppf<F: Real>(sizes: &[usize], theta: F) -> Result<F> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidParameter("block sizes must be positive".into()));
    }
    let n: usize = sizes.iter().sum();
    let mut p = F::one();
    for i in 0..n {
        p = p / (theta + from_usize(i));
    }
    for &s in sizes {
        p = p * theta;
        for j in 1..s {
            p = p * from_usize(j);
        }
    }
    Ok(p)
}

/// Compact-coefficient sampler. Each customer draws a source in proportion to
/// `(A, C₁, …, C_K, B)`: a base draw, past value `y*ᵢ`, or a uniformly chosen
/// earlier customer. Equal values share a block, so with an atomic base a fresh
/// draw may join an existing block.
pub fn sample_partition<F: Real, R: Rng + ?Sized>(
    state: &PredictiveState<F>,
    n: usize,
    rng: &mut R,
) -> Result<PartitionSample> {
    let mut s = state.clone();
    let mut part = group_values(&[]);
    for _ in 0..n {
        let coef = s.coefficients();
        let mut w = Vec::with_capacity(coef.c.len() + 2);
        w.push(coef.a);
        w.extend(coef.c.iter().copied());
        w.push(coef.b);
        let j = pick(&w, rng);
        let y = if j == 0 {
            s.base().sample(rng)
        } else if j <= coef.c.len() {
            s.distinct()[j - 1]
        } else {
            s.sample()[rng.random_range(0..s.sample().len())]
        };
        s.observe(y)?;
        part.push(y);
    }
    Ok(part)
}

/// Chinese restaurant with a conveyor belt. Each customer first draws a node
/// `n′` from the current weights, then sits at table `j` with weight `mⱼ`,
/// takes dish `y*ᵢ` from the belt with weight `n′ᵢ`, or orders from the menu
/// with weight `θ`. The kitchen then reweights the nodes given the dish.
pub fn conveyor_simulate<F: Real, R: Rng + ?Sized>(
    state: &PredictiveState<F>,
    n: usize,
    rng: &mut R,
) -> Result<PartitionSample> {
    let mut s = state.clone();
    // tables carry the dishes of the current sample, seated or inherited
    let mut tables: BTreeMap<i64, usize> =
        s.sample_counts().iter().map(|(&v, &c)| (v, c as usize)).collect();
    let mut part = group_values(&[]);
    let theta = crate::scalar::to_f64(s.theta());
    for _ in 0..n {
        let node = s.node(s.pick_node(rng)).clone();
        let seated: usize = tables.values().sum();
        let u = rng.random::<f64>() * (theta + node.total() as f64 + seated as f64);
        let dish = if u < seated as f64 {
            let mut r = u as usize;
            let mut chosen = None;
            for (&v, &c) in &tables {
                if r < c {
                    chosen = Some(v);
                    break;
                }
                r -= c;
            }
            chosen.unwrap_or_else(|| *tables.keys().next_back().expect("occupied table"))
        } else if u < (seated + node.total()) as f64 {
            let mut r = rng.random_range(0..node.total());
            let mut chosen = 0;
            for (i, &c) in node.counts().iter().enumerate() {
                if r < c as usize {
                    chosen = i;
                    break;
                }
                r -= c as usize;
            }
            s.distinct()[chosen]
        } else {
            s.base().sample(rng)
        };
        *tables.entry(dish).or_insert(0) += 1;
        s.observe(dish)?;
        part.push(dish);
    }
    Ok(part)
}

/// Groups `n` predictive draws by value.
pub fn grouped_sequence<F: Real, R: Rng + ?Sized>(
    state: &PredictiveState<F>,
    n: usize,
    rng: &mut R,
) -> Result<PartitionSample> {
    let mut s = state.clone();
    Ok(group_values(&s.sample_sequence(n, rng)?))
}

/// Default number of branches the oracle may visit.
pub const DEFAULT_ORACLE_BUDGET: u128 = 2_000_000;

/// Candidate block values: every value already in play on its own, and the
/// remaining base support lumped into classes of equal pmf.
enum ValueClass {
    Listed(Vec<i64>),
    /// `lo..=hi` minus the values in play.
    Range { lo: i64, hi: i64, skip: Vec<i64> },
}

impl ValueClass {
    fn len(&self) -> usize {
        match self {
            Self::Listed(v) => v.len(),
            Self::Range { lo, hi, skip } => {
                let inside = skip.iter().filter(|v| (lo..=hi).contains(v)).count() as i128;
                (i128::from(*hi) - i128::from(*lo) + 1 - inside) as usize
            }
        }
    }

    fn member(&self, j: usize) -> i64 {
        match self {
            Self::Listed(v) => v[j],
            Self::Range { lo, skip, .. } => {
                let (mut v, mut seen) = (*lo, 0);
                loop {
                    if skip.binary_search(&v).is_err() {
                        if seen == j {
                            return v;
                        }
                        seen += 1;
                    }
                    v += 1;
                }
            }
        }
    }
}

fn value_classes<F: Real>(state: &PredictiveState<F>) -> Vec<ValueClass> {
    let mut special: Vec<i64> = state.distinct().to_vec();
    special.extend(state.sample_counts().keys().copied());
    special.sort_unstable();
    special.dedup();
    let base = state.base().distribution();
    let mut classes: Vec<ValueClass> = special
        .iter()
        .filter(|&&v| state.pmf(v) > F::zero())
        .map(|&v| ValueClass::Listed(vec![v]))
        .collect();
    if let crate::filter::BaseDistribution::Uniform { lo, hi } = *base {
        let c = ValueClass::Range { lo, hi, skip: special };
        if c.len() > 0 {
            classes.push(c);
        }
        return classes;
    }
    let (lo, hi) = base.window(SUPPORT_TAIL);
    let mut lumps: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
    for y in lo..=hi {
        let p = base.pmf(y);
        if p > 0.0 && special.binary_search(&y).is_err() {
            lumps.entry(p.to_bits()).or_default().push(y);
        }
    }
    classes.extend(lumps.into_values().map(ValueClass::Listed));
    classes
}

/// Probability that `Σ sizes` further draws induce one given set partition
/// with these block sizes, by summing over every assignment of distinct values
/// to blocks. Values of equal base pmf that are not yet in play are
/// interchangeable, so each such class is visited once and weighted by the
/// number of its unused members.
pub fn lemma2_oracle<F: Real>(state: &PredictiveState<F>, sizes: &[usize]) -> Result<F> {
    lemma2_oracle_with_budget(state, sizes, DEFAULT_ORACLE_BUDGET)
}

pub fn lemma2_oracle_with_budget<F: Real>(
    state: &PredictiveState<F>,
    sizes: &[usize],
    budget: u128,
) -> Result<F> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidParameter("block sizes must be positive".into()));
    }
    let classes = value_classes(state);
    let branches = (0..sizes.len())
        .try_fold(1u128, |acc, _| acc.checked_mul(classes.len() as u128))
        .ok_or(Error::Overflow { what: "oracle branch count" })?;
    if branches > budget {
        return Err(Error::EnumerationBudget { size: branches, budget });
    }
    let mut used = vec![0usize; classes.len()];
    recurse(state, sizes, &classes, &mut used)
}

fn recurse<F: Real>(
    state: &PredictiveState<F>,
    sizes: &[usize],
    classes: &[ValueClass],
    used: &mut [usize],
) -> Result<F> {
    let Some((&size, rest)) = sizes.split_first() else {
        return Ok(F::one());
    };
    let mut total = CompensatedSum::new();
    for (c, class) in classes.iter().enumerate() {
        let free = class.len() - used[c];
        if free == 0 {
            continue;
        }
        let value = class.member(used[c]);
        let mut s = state.clone();
        let mut p = from_usize::<F>(free);
        for _ in 0..size {
            let q = s.pmf(value);
            if q == F::zero() {
                p = F::zero();
                break;
            }
            p = p * q;
            s.observe(value)?;
        }
        if p == F::zero() {
            continue;
        }
        used[c] += 1;
        let tail = recurse(&s, rest, classes, used);
        used[c] -= 1;
        total.add(p * tail?);
    }
    Ok(total.value())
}

/// Empirical law over set partitions of `{0..n}` from repeated sampling.
pub fn partition_frequencies<F, R, S>(
    state: &PredictiveState<F>,
    n: usize,
    reps: usize,
    rng: &mut R,
    mut sampler: S,
) -> Result<BTreeMap<Vec<usize>, F>>
where
    F: Real,
    R: Rng + ?Sized,
    S: FnMut(&PredictiveState<F>, usize, &mut R) -> Result<PartitionSample>,
{
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for _ in 0..reps {
        *counts.entry(sampler(state, n, rng)?.set_partition()).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, from_usize::<F>(c) / lit(reps as f64)))
        .collect())
}
