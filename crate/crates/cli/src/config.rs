//! Run configuration and hyperparameter grids.

use fvddp::{BaseDistribution, FilterConfig, GridPoint, Propagation};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Lattice size above which the automatic pipeline switches to particles.
pub const AUTO_EXACT_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Auto,
    Exact,
    Approx,
}

impl Pipeline {
    pub fn propagation(self) -> Propagation {
        match self {
            Pipeline::Auto => Propagation::Auto,
            Pipeline::Exact => Propagation::Exact,
            Pipeline::Approx => Propagation::Approximate,
        }
    }
}

/// Support points with prior weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid(pub Vec<(f64, f64)>);

impl Grid {
    /// Parses `v1,v2,…` (uniform prior), `v@w,…` (explicit weights, renormalized)
    /// or `start:stop:step` (uniform over the inclusive range).
    pub fn parse(s: &str, what: &str) -> Result<Self> {
        let err = |m: String| CliError::Config(format!("{what} grid `{s}`: {m}"));
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| err(format!("bad number `{x}`")));
        let mut points: Vec<(f64, f64)> = Vec::new();
        if s.matches(':').count() == 2 && !s.contains(',') {
            let p: Vec<&str> = s.split(':').collect();
            let (a, b, step) = (num(p[0])?, num(p[1])?, num(p[2])?);
            if !(step > 0.0) || b < a {
                return Err(err("range needs start <= stop and a positive step".into()));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(err("range too long".into()));
            }
            points.extend((0..=n).map(|i| (a + i as f64 * step, 1.0)));
        } else {
            for item in s.split(',').filter(|x| !x.trim().is_empty()) {
                match item.split_once('@') {
                    Some((v, w)) => points.push((num(v)?, num(w)?)),
                    None => points.push((num(item)?, 1.0)),
                }
            }
        }
        if points.is_empty() {
            return Err(err("empty grid".into()));
        }
        if points.iter().any(|&(v, w)| !(v > 0.0 && v.is_finite()) || !(w >= 0.0 && w.is_finite())) {
            return Err(err("values must be positive and weights nonnegative".into()));
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(err("weights sum to zero".into()));
        }
        Ok(Grid(points.into_iter().map(|(v, w)| (v, w / total)).collect()))
    }

    pub fn single(v: f64) -> Self {
        Grid(vec![(v, 1.0)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub theta_grid: Grid,
    pub sigma_grid: Grid,
    pub base: BaseDistribution,
    /// Prediction lag after the last data time.
    pub lag: f64,
    /// Draws per replicate; zero evaluates the predictive pmf directly.
    pub draws: usize,
    pub replicates: usize,
    pub particles: usize,
    pub prune_eps: f64,
    pub seed: u64,
    pub pipeline: Pipeline,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            theta_grid: Grid::single(1.0),
            sigma_grid: Grid::single(1.0),
            base: BaseDistribution::NegativeBinomial { r: 2.0, p: 0.5 },
            lag: 1.0,
            draws: 1000,
            replicates: 500,
            particles: 10_000,
            prune_eps: fvddp::lattice::DEFAULT_PRUNE_EPS,
            seed: 0,
            pipeline: Pipeline::Auto,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if !(self.lag > 0.0 && self.lag.is_finite()) {
            return bad("lag must be positive");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if !(self.prune_eps >= 0.0 && self.prune_eps < 1.0) {
            return bad("prune-eps must lie in [0, 1)");
        }
        self.base.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        fvddp::filter::product_grid(&self.theta_grid.0, &self.sigma_grid.0)
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            prune_eps: (self.prune_eps > 0.0).then_some(self.prune_eps),
            lattice_budget: AUTO_EXACT_LIMIT,
            particles: self.particles,
            seed: self.seed,
            propagation: self.pipeline.propagation(),
            ..FilterConfig::default()
        }
    }
}
