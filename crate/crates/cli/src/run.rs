//! Jobs behind the subcommands, independent of file handling.

use std::collections::{BTreeMap, BTreeSet};

use fvddp::filter::{hyper_posterior, HyperPoint};
use fvddp::lattice::lattice_size;
use fvddp::partition::{conveyor_simulate, sample_partition, PartitionSample};
use fvddp::predictive::PredictiveState;
use fvddp::{Filter, Predictive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::config::{Pipeline, RunConfig, AUTO_EXACT_LIMIT};
use crate::dataset::Dataset;
use crate::error::{CliError, Result};

/// Base-measure tail left out of reported supports.
pub const REPORT_TAIL: f64 = 1e-12;
pub const BAND: (f64, f64) = (0.025, 0.975);

/// Offset separating replicate streams from the filter's particle streams.
const REPLICATE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRow {
    pub theta: f64,
    pub sigma: f64,
    pub prior: f64,
    pub log_ml: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfRow {
    pub value: i64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictReport {
    pub hyper: Vec<HyperRow>,
    pub rows: Vec<PmfRow>,
    /// Pipeline used per grid point.
    pub pipelines: Vec<Pipeline>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub hyper: Vec<HyperRow>,
    pub samples: Vec<PartitionSample>,
    /// `(number of blocks, count)` for `1..=n`.
    pub histogram: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    pub theta: f64,
    pub sigma: f64,
    pub sae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutReport {
    pub test_time: f64,
    pub rows: Vec<HoldoutRow>,
    pub best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// Compact-coefficient sampler.
    #[default]
    Coefficient,
    Conveyor,
}

fn hyper_rows(points: &[HyperPoint<f64>]) -> Vec<HyperRow> {
    points
        .iter()
        .map(|p| HyperRow {
            theta: p.point.theta,
            sigma: p.point.sigma,
            prior: p.point.prior,
            log_ml: p.log_ml,
            posterior: p.posterior,
        })
        .collect()
}

pub fn run_hyper(config: &RunConfig, data: &Dataset) -> Result<Vec<HyperRow>> {
    config.validate()?;
    let points = hyper_posterior(&config.grid(), &config.base, &data.batches, config.filter_config())?;
    Ok(hyper_rows(&points))
}

/// Final filter at a single `(θ, σ)`.
pub fn run_filter(config: &RunConfig, data: &Dataset) -> Result<Filter> {
    config.validate()?;
    if config.theta_grid.0.len() != 1 || config.sigma_grid.0.len() != 1 {
        return Err(CliError::Config("filter takes a single theta and a single sigma".into()));
    }
    let base = fvddp::Base::new(config.theta_grid.0[0].0, config.base.clone())?;
    Ok(fvddp::filter::run_filter(base, config.sigma_grid.0[0].0, &data.batches, config.filter_config())?)
}

/// Per grid point: the filter, its pipeline and, when exact, the predictive state.
struct Prepared {
    filter: Filter,
    exact: Option<Predictive>,
    pipeline: Pipeline,
}

fn prepare(config: &RunConfig, points: Vec<HyperPoint<f64>>, lag: f64) -> Result<Vec<(f64, Prepared)>> {
    points
        .into_par_iter()
        .map(|p| {
            let pipeline = resolve(config.pipeline, &p.filter)?;
            let exact = match pipeline {
                Pipeline::Exact => Some(PredictiveState::exact(&p.filter, lag)?),
                _ => None,
            };
            Ok((p.posterior, Prepared { filter: p.filter, exact, pipeline }))
        })
        .collect()
}

fn resolve(requested: Pipeline, filter: &Filter) -> Result<Pipeline> {
    Ok(match requested {
        Pipeline::Auto if lattice_size(&filter.nodes().top())? <= AUTO_EXACT_LIMIT => Pipeline::Exact,
        Pipeline::Auto => Pipeline::Approx,
        p => p,
    })
}

fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(REPLICATE_SEED_OFFSET));
    rng.set_stream(r as u64);
    rng
}

/// Draws a grid point by posterior weight and returns its predictive state.
fn replicate_state<R: Rng>(
    prepared: &[(f64, Prepared)],
    lag: f64,
    particles: usize,
    rng: &mut R,
) -> Result<Predictive> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = prepared.len() - 1;
    for (i, (w, _)) in prepared.iter().enumerate() {
        acc += w;
        if u < acc {
            chosen = i;
            break;
        }
    }
    let p = &prepared[chosen].1;
    match &p.exact {
        Some(s) => Ok(s.clone()),
        None => Ok(PredictiveState::approximate(&p.filter, lag, particles, rng)?),
    }
}

fn base_support(config: &RunConfig, data: &Dataset) -> BTreeSet<i64> {
    let (lo, hi) = config.base.window(REPORT_TAIL);
    let mut s: BTreeSet<i64> = (lo..=hi).filter(|&y| config.base.pmf(y) > 0.0).collect();
    s.extend(data.batches.iter().flat_map(|b| b.values.iter().copied()));
    s
}

pub fn run_predict(config: &RunConfig, data: &Dataset) -> Result<PredictReport> {
    config.validate()?;
    let points = hyper_posterior(&config.grid(), &config.base, &data.batches, config.filter_config())?;
    let hyper = hyper_rows(&points);
    let prepared = prepare(config, points, config.lag)?;
    let support = base_support(config, data);
    let pmfs: Vec<BTreeMap<i64, f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r);
            let mut state = replicate_state(&prepared, config.lag, config.particles, &mut rng)?;
            if config.draws == 0 {
                return Ok(support.iter().map(|&y| (y, state.pmf(y))).collect());
            }
            let draws = state.sample_sequence(config.draws, &mut rng)?;
            let mut m = BTreeMap::new();
            for y in draws {
                *m.entry(y).or_insert(0.0) += 1.0 / config.draws as f64;
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut values = support;
    values.extend(pmfs.iter().flat_map(|m| m.keys().copied()));
    let rows = values
        .into_iter()
        .map(|y| {
            let v: Vec<f64> = pmfs.iter().map(|m| m.get(&y).copied().unwrap_or(0.0)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let mut d = Data::new(v);
            PmfRow { value: y, mean, lo: d.quantile(BAND.0), hi: d.quantile(BAND.1) }
        })
        .collect();
    Ok(PredictReport { hyper, rows, pipelines: prepared.iter().map(|(_, p)| p.pipeline).collect() })
}

pub fn run_partition(config: &RunConfig, data: &Dataset, sampler: Sampler) -> Result<PartitionReport> {
    config.validate()?;
    if config.draws == 0 {
        return Err(CliError::Config("partition needs at least one draw per sample".into()));
    }
    let points = hyper_posterior(&config.grid(), &config.base, &data.batches, config.filter_config())?;
    let hyper = hyper_rows(&points);
    let prepared = prepare(config, points, config.lag)?;
    let samples: Vec<PartitionSample> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r);
            let state = replicate_state(&prepared, config.lag, config.particles, &mut rng)?;
            Ok(match sampler {
                Sampler::Coefficient => sample_partition(&state, config.draws, &mut rng)?,
                Sampler::Conveyor => conveyor_simulate(&state, config.draws, &mut rng)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut histogram: Vec<(usize, usize)> = (1..=config.draws).map(|b| (b, 0)).collect();
    for s in &samples {
        histogram[s.num_blocks() - 1].1 += 1;
    }
    Ok(PartitionReport { hyper, samples, histogram })
}

/// Sum of absolute errors between each grid point's predictive pmf and the
/// empirical pmf of the batch at `test_time`, filtering only earlier batches.
pub fn run_holdout(config: &RunConfig, data: &Dataset, test_time: Option<f64>) -> Result<HoldoutReport> {
    config.validate()?;
    let test_time = test_time.unwrap_or_else(|| data.last_time());
    let test = data
        .batches
        .iter()
        .find(|b| b.time == test_time)
        .ok_or_else(|| CliError::Config(format!("no batch at test time {test_time}")))?;
    if test.values.is_empty() {
        return Err(CliError::Config("test batch is empty".into()));
    }
    let train: Vec<_> = data.batches.iter().filter(|b| b.time < test_time).cloned().collect();
    if train.iter().all(|b| b.values.is_empty()) {
        return Err(CliError::Config("no training data before the test time".into()));
    }
    let lag = test_time - train.last().map_or(0.0, |b| b.time);
    let mut empirical: BTreeMap<i64, f64> = BTreeMap::new();
    for &y in &test.values {
        *empirical.entry(y).or_insert(0.0) += 1.0 / test.values.len() as f64;
    }
    let train = Dataset { batches: train };
    let mut support = base_support(config, &train);
    support.extend(empirical.keys().copied());
    let grid = config.grid();
    let rows: Vec<HoldoutRow> = grid
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let base = fvddp::Base::new(g.theta, config.base.clone())?;
            let filter = fvddp::filter::run_filter(base, g.sigma, &train.batches, config.filter_config())?;
            let state = match resolve(config.pipeline, &filter)? {
                Pipeline::Exact => PredictiveState::exact(&filter, lag)?,
                _ => PredictiveState::approximate(&filter, lag, config.particles, &mut replicate_rng(config.seed, i))?,
            };
            let sae = support
                .iter()
                .map(|&y| (state.pmf(y) - empirical.get(&y).copied().unwrap_or(0.0)).abs())
                .sum();
            Ok(HoldoutRow { theta: g.theta, sigma: g.sigma, sae })
        })
        .collect::<Result<_>>()?;
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.sae.total_cmp(&b.1.sae))
        .map_or(0, |(i, _)| i);
    Ok(HoldoutReport { test_time, rows, best })
}
