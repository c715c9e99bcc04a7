//! Multiplicity vectors and sparse weighted node tables.
//!
//! A node is a vector `n ∈ Z₊^K` of retained multiplicities over the `K`
//! distinct observed values. Mixtures over nodes are stored sparsely, keyed by
//! the vector itself, and iterate in lexicographic order so that categorical
//! sampling over a node table is reproducible under a fixed seed.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{lit, CompensatedSum, Real};

/// Default pruning threshold for node weights.
pub const DEFAULT_PRUNE_EPS: f64 = 1e-10;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiplicityVector(Vec<u32>);

impl MultiplicityVector {
    /// Builds a vector from explicit counts. At least one coordinate is required.
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyDimension);
        }
        Ok(Self(counts))
    }

    /// Like [`new`](Self::new) but accepts the zero-dimensional vector.
    pub(crate) fn from_counts(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    /// The origin of `Z₊^k`. `k = 0` gives the node of a filter that has seen no data.
    pub fn zeros(k: usize) -> Self {
        Self(vec![0; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|n| = Σ nᵢ`.
    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Componentwise `self ≤ other`. Vectors of different dimension are incomparable.
    pub fn le(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self + e_i`.
    pub fn incremented(&self, i: usize) -> Self {
        let mut c = self.0.clone();
        c[i] += 1;
        Self(c)
    }

    /// `self - other`, defined only when `other ≤ self`.
    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        if !other.le(self) {
            return Err(Error::NotBelow {
                lower: other.0.clone(),
                upper: self.0.clone(),
            });
        }
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    /// Zero-pads to dimension `k`.
    pub fn padded(&self, k: usize) -> Result<Self> {
        if k < self.dim() {
            return Err(Error::DimensionShrink {
                from: self.dim(),
                to: k,
            });
        }
        let mut c = self.0.clone();
        c.resize(k, 0);
        Ok(Self(c))
    }
}

impl fmt::Debug for MultiplicityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<MultiplicityVector> for Vec<u32> {
    fn from(v: MultiplicityVector) -> Self {
        v.0
    }
}

/// Counts of each of `distinct` among `values`.
pub fn counts_of<T: PartialEq + fmt::Debug>(
    values: &[T],
    distinct: &[T],
) -> Result<MultiplicityVector> {
    let mut counts = vec![0u32; distinct.len()];
    for v in values {
        let i = distinct
            .iter()
            .position(|d| d == v)
            .ok_or_else(|| Error::UnknownValue {
                value: format!("{v:?}"),
            })?;
        counts[i] += 1;
    }
    Ok(MultiplicityVector(counts))
}

/// `|L(top)| = ∏ⱼ (1 + topⱼ)`, without enumerating.
pub fn lattice_size(top: &MultiplicityVector) -> Result<u64> {
    top.0.iter().try_fold(1u64, |acc, &c| {
        acc.checked_mul(u64::from(c) + 1)
            .ok_or(Error::Overflow {
                what: "lattice size",
            })
    })
}

/// All nodes `n` with `0 ≤ n ≤ top`, in lexicographic order.
pub fn enumerate_below(top: &MultiplicityVector) -> Vec<MultiplicityVector> {
    let size = lattice_size(top).map(|s| s as usize).unwrap_or(0);
    let mut out = Vec::with_capacity(size);
    let k = top.dim();
    let mut cur = vec![0u32; k];
    loop {
        out.push(MultiplicityVector(cur.clone()));
        // odometer increment, last coordinate fastest
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < top.0[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Sparse mixture weights over nodes of a common dimension.
#[derive(Clone, PartialEq)]
pub struct WeightedNodeSet<F> {
    dim: usize,
    entries: BTreeMap<MultiplicityVector, F>,
}

impl<F: Real> WeightedNodeSet<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// All mass on one node.
    pub fn singleton(node: MultiplicityVector) -> Self {
        let mut s = Self::new(node.dim());
        s.entries.insert(node, F::one());
        s
    }

    /// Builds a table from `(node, weight)` pairs; repeated nodes accumulate.
    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiplicityVector, F)>,
    {
        let mut s = Self::new(dim);
        for (node, w) in pairs {
            s.add(node, w)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: &MultiplicityVector) -> F {
        self.entries.get(node).copied().unwrap_or_else(F::zero)
    }

    pub fn contains(&self, node: &MultiplicityVector) -> bool {
        self.entries.contains_key(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiplicityVector, F)> + '_ {
        self.entries.iter().map(|(k, &w)| (k, w))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &MultiplicityVector> + '_ {
        self.entries.keys()
    }

    /// Adds `w` to the weight of `node`.
    pub fn add(&mut self, node: MultiplicityVector, w: F) -> Result<()> {
        if node.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: node.dim(),
            });
        }
        if !(w >= F::zero()) || !w.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "node weight must be finite and nonnegative, got {w}"
            )));
        }
        let e = self.entries.entry(node).or_insert_with(F::zero);
        *e = *e + w;
        Ok(())
    }

    pub fn total(&self) -> F {
        self.entries
            .values()
            .copied()
            .collect::<CompensatedSum<F>>()
            .value()
    }

    /// Rescales weights to sum to one.
    pub fn normalize(&mut self) -> Result<()> {
        let total = self.total();
        if !(total > F::zero()) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize node weights with total {total}"
            )));
        }
        for w in self.entries.values_mut() {
            *w = *w / total;
        }
        Ok(())
    }

    /// Drops nodes with weight below `eps` and renormalizes. The heaviest node
    /// always survives.
    pub fn prune(&mut self, eps: F) -> Result<()> {
        self.normalize()?;
        let keep = self
            .entries
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(k, _)| k.clone());
        self.entries
            .retain(|k, w| *w >= eps || keep.as_ref() == Some(k));
        self.normalize()
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn pruned(mut self, eps: F) -> Result<Self> {
        self.prune(eps)?;
        Ok(self)
    }

    /// Componentwise maximum over stored nodes.
    pub fn top(&self) -> MultiplicityVector {
        let mut top = vec![0u32; self.dim];
        for n in self.entries.keys() {
            for (t, &c) in top.iter_mut().zip(n.counts()) {
                *t = (*t).max(c);
            }
        }
        MultiplicityVector(top)
    }

    /// Componentwise minimum over stored nodes.
    pub fn bottom(&self) -> MultiplicityVector {
        let mut it = self.entries.keys();
        let Some(first) = it.next() else {
            return MultiplicityVector::zeros(self.dim);
        };
        let mut bottom = first.0.clone();
        for n in it {
            for (b, &c) in bottom.iter_mut().zip(n.counts()) {
                *b = (*b).min(c);
            }
        }
        MultiplicityVector(bottom)
    }

    /// Zero-pads every node to `new_dim` coordinates; weights are unchanged.
    pub fn extend_support(&self, new_dim: usize) -> Result<Self> {
        if new_dim < self.dim {
            return Err(Error::DimensionShrink {
                from: self.dim,
                to: new_dim,
            });
        }
        if new_dim == self.dim {
            return Ok(self.clone());
        }
        let entries = self
            .entries
            .iter()
            .map(|(k, &w)| Ok((k.padded(new_dim)?, w)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            dim: new_dim,
            entries,
        })
    }

    /// Applies `f` to every node, accumulating weights of colliding images.
    pub fn map_nodes(&self, mut f: impl FnMut(&MultiplicityVector) -> MultiplicityVector) -> Self {
        let mut out = BTreeMap::new();
        for (k, &w) in &self.entries {
            let e = out.entry(f(k)).or_insert_with(F::zero);
            *e = *e + w;
        }
        Self {
            dim: self.entries.keys().next().map_or(self.dim, |k| f(k).dim()),
            entries: out,
        }
    }

    /// Total variation distance `½ Σ |wᵢ − vᵢ|` to another table of the same dimension.
    pub fn total_variation(&self, other: &Self) -> F {
        let mut acc = CompensatedSum::new();
        for (k, w) in self.iter() {
            acc.add((w - other.get(k)).abs());
        }
        for (k, v) in other.iter() {
            if !self.contains(k) {
                acc.add(v.abs());
            }
        }
        acc.value() * lit(0.5)
    }
}

impl<F: Real> fmt::Debug for WeightedNodeSet<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.entries.iter()).finish()
    }
}
