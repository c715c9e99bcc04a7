//! Trajectory simulation of the one-dimensional and multidimensional death processes.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::lattice::{MultiplicityVector, WeightedNodeSet};
use crate::scalar::{from_usize, to_f64, Real};

use super::level::rate;

/// Landing level after time `t` of the death process started at `m`, by
/// successive exponential holding times.
pub fn simulate_level<F: Real, R: Rng + ?Sized>(m: usize, t: F, theta: F, rng: &mut R) -> usize {
    let theta = to_f64(theta);
    let mut remaining = to_f64(t);
    let mut n = m;
    while n > 0 {
        let z: f64 = Exp1.sample(rng);
        remaining -= z / rate(n, theta);
        if remaining > 0.0 {
            n -= 1;
        } else {
            break;
        }
    }
    n
}

/// Draws `n ≤ m` with `|n| = level` from the multivariate hypergeometric law
/// of removing `|m| − level` items from composition `m`, by sequential draws
/// without replacement.
pub fn sample_landing_node<R: Rng + ?Sized>(
    level: usize,
    m: &MultiplicityVector,
    rng: &mut R,
) -> Result<MultiplicityVector> {
    let total = m.total();
    if level > total {
        return Err(Error::InvalidLevel { m: total, n: level });
    }
    // draw whichever of the kept or removed sub-multiset is smaller
    let draws = level.min(total - level);
    let mut remaining: Vec<u32> = m.counts().to_vec();
    let mut picked = vec![0u32; m.dim()];
    let mut left = total;
    for _ in 0..draws {
        let mut u = rng.random_range(0..left);
        let mut i = 0;
        while u >= remaining[i] as usize {
            u -= remaining[i] as usize;
            i += 1;
        }
        remaining[i] -= 1;
        picked[i] += 1;
        left -= 1;
    }
    let counts = if draws == level { picked } else { remaining };
    Ok(MultiplicityVector::from_counts(counts))
}

/// Empirical estimate of the row `{p_{m,n}(t)}` from `trajectories` simulated paths.
pub fn level_row_monte_carlo<F: Real, R: Rng + ?Sized>(
    m: usize,
    t: F,
    theta: F,
    trajectories: usize,
    rng: &mut R,
) -> Vec<F> {
    let mut hist = vec![0usize; m + 1];
    for _ in 0..trajectories {
        hist[simulate_level(m, t, theta, rng)] += 1;
    }
    let n: F = from_usize(trajectories.max(1));
    hist.into_iter().map(|c| from_usize::<F>(c) / n).collect()
}

/// Monte Carlo propagation of mixture weights: each of `particles` draws a
/// source node, runs the level process, then picks the landing node within the
/// reached level. Returns the normalized landing frequencies.
pub fn propagate_weights_mc<F: Real, R: Rng + ?Sized>(
    sources: &WeightedNodeSet<F>,
    t: F,
    theta: F,
    particles: usize,
    rng: &mut R,
) -> Result<WeightedNodeSet<F>> {
    if particles == 0 {
        return Err(Error::InvalidParameter("particle count must be >= 1".into()));
    }
    let nodes: Vec<&MultiplicityVector> = sources.nodes().collect();
    let mut cumulative = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    for (_, w) in sources.iter() {
        acc += to_f64(w);
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidParameter("source weights sum to zero".into()));
    }
    let mut tally = std::collections::HashMap::<MultiplicityVector, usize>::new();
    for _ in 0..particles {
        let u = rng.random::<f64>() * acc;
        let idx = cumulative.partition_point(|&c| c <= u).min(nodes.len() - 1);
        let source = nodes[idx];
        let level = simulate_level(source.total(), t, theta, rng);
        let landed = sample_landing_node(level, source, rng)?;
        *tally.entry(landed).or_default() += 1;
    }
    let n: F = from_usize(particles);
    WeightedNodeSet::from_pairs(
        sources.dim(),
        tally.into_iter().map(|(k, c)| (k, from_usize::<F>(c) / n)),
    )
}
