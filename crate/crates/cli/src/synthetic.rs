//! Two-component translated-Poisson mixture with drifting rates.
//!
//! `Y_t ~ ½ Po(1/μ_t) + ½ (5 + Po(1/ν_t))`, with `μ_t = μ_{t−1} + ε_t`,
//! `ν_t = ν_{t−1} + η_t`, independent `Exp(1)` increments and `μ₀ = ν₀ = 1/5`.

use fvddp::Batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use statrs::distribution::{Discrete, Poisson as PoissonPmf};

use crate::dataset::Dataset;

pub const SHIFT: i64 = 5;
pub const INITIAL_RATE: f64 = 5.0;

/// Component rates `(1/μ_t, 1/ν_t)` at each time.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub rates: Vec<(f64, f64)>,
}

impl Truth {
    /// Data-generating pmf at time index `t`.
    pub fn pmf(&self, t: usize, y: i64) -> f64 {
        let (a, b) = self.rates[t];
        let po = |rate: f64, k: i64| {
            u64::try_from(k).map_or(0.0, |k| PoissonPmf::new(rate).map_or(0.0, |d| d.pmf(k)))
        };
        0.5 * po(a, y) + 0.5 * po(b, y - SHIFT)
    }
}

pub fn synthetic(seed: u64, horizon: usize, per_time: usize) -> Dataset {
    synthetic_with_truth(seed, horizon, per_time).0
}

pub fn synthetic_with_truth(seed: u64, horizon: usize, per_time: usize) -> (Dataset, Truth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mu, mut nu) = (1.0 / INITIAL_RATE, 1.0 / INITIAL_RATE);
    let mut batches = Vec::with_capacity(horizon);
    let mut rates = Vec::with_capacity(horizon);
    for t in 0..horizon {
        if t > 0 {
            let (e, h): (f64, f64) = (Exp1.sample(&mut rng), Exp1.sample(&mut rng));
            mu += e;
            nu += h;
        }
        let (a, b) = (1.0 / mu, 1.0 / nu);
        let first = Poisson::new(a).expect("positive rate");
        let second = Poisson::new(b).expect("positive rate");
        let values = (0..per_time)
            .map(|_| {
                if rng.random_bool(0.5) {
                    first.sample(&mut rng) as i64
                } else {
                    SHIFT + second.sample(&mut rng) as i64
                }
            })
            .collect();
        batches.push(Batch { time: t as f64, values });
        rates.push((a, b));
    }
    let data = Dataset { batches };
    (data, Truth { rates })
}
