//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use fvddp::death_process::{level_transition, simulate_level, DeathKernel};
use fvddp::filter::{hyper_posterior, BaseMeasure, FilterState, GridPoint};
use fvddp::partition::{
    conveyor_simulate, dp_eppf, grouped_sequence, lemma2_oracle, partition_frequencies, sample_partition,
    set_partitions, block_sizes,
};
use fvddp::predictive::{correlation, total_variation, PredictiveState, SUPPORT_TAIL};
use fvddp::{BaseDistribution, Batch, FilterConfig, Propagation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two observation times one unit apart, values 3 and 8 at each, over a
/// uniform base on `0..=9`.
fn two_time_filter(theta: f64) -> FilterState<f64> {
    let base = BaseMeasure::new(theta, "uniform:0,9".parse().unwrap()).unwrap();
    let cfg = FilterConfig { prune_eps: None, propagation: Propagation::Exact, ..Default::default() };
    FilterState::with_config(base, 1.0, cfg)
        .unwrap()
        .update_batch(&[3, 8])
        .unwrap()
        .advance_time(1.0)
        .unwrap()
        .update_batch(&[3, 8])
        .unwrap()
}

const TWO_TIME_LAG: f64 = 0.5;

fn two_time_state() -> PredictiveState<f64> {
    PredictiveState::exact(&two_time_filter(1.0), TWO_TIME_LAG).unwrap()
}

fn kernel_normalization() -> Outcome {
    let mut worst = 0.0_f64;
    for theta in [0.5, 1.0, 5.0] {
        let kernel = DeathKernel::new(theta);
        for t in [0.01, 0.1, 1.0, 10.0] {
            for m in 0..=30 {
                let s: f64 = kernel.row(m, t).map_err(|e| e.to_string())?.iter().sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    check(worst <= 1e-8, format!("max |sum - 1| = {worst:.2e}"))
}

fn formula_vs_simulation() -> Outcome {
    const N: usize = 1_000_000;
    // (m, n, t, theta)
    let grid: [(usize, usize, f64, f64); 20] = [
        (1, 0, 0.5, 1.0),
        (1, 1, 2.0, 0.5),
        (2, 1, 0.3, 1.0),
        (2, 0, 1.0, 2.0),
        (3, 2, 0.1, 1.0),
        (3, 1, 0.5, 0.5),
        (4, 2, 0.4, 5.0),
        (5, 3, 0.1, 1.0),
        (5, 1, 0.8, 1.0),
        (5, 0, 2.0, 0.5),
        (6, 4, 0.05, 5.0),
        (8, 3, 0.3, 1.0),
        (8, 5, 0.1, 2.0),
        (10, 4, 0.2, 1.0),
        (10, 2, 1.0, 0.5),
        (12, 6, 0.1, 5.0),
        (15, 5, 0.15, 1.0),
        (20, 8, 0.05, 2.0),
        (20, 3, 0.5, 1.0),
        (25, 10, 0.03, 5.0),
    ];
    let results: Vec<Result<(f64, f64, f64), String>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(m, n, t, theta))| {
            let p = level_transition(m, n, t, theta).map_err(|e| e.to_string())?;
            let mut r = rng(1000 + i as u64);
            let hits = (0..N).filter(|_| simulate_level(m, t, theta, &mut r) == n).count();
            let freq = hits as f64 / N as f64;
            let se = (p * (1.0 - p) / N as f64).sqrt();
            Ok((p, freq, se))
        })
        .collect();
    let mut worst = 0.0_f64;
    for r in results {
        let (p, freq, se) = r?;
        if !(p > 0.0 && se > 0.0) {
            return Err(format!("degenerate grid point p = {p}"));
        }
        worst = worst.max((freq - p).abs() / se);
    }
    check(worst <= 4.0, format!("max deviation {worst:.2} SE over 20 points"))
}

fn two_time_active_set() -> Outcome {
    let f = two_time_filter(1.0);
    let mut active: Vec<Vec<u32>> =
        f.nodes().iter().filter(|(_, w)| *w > 0.0).map(|(n, _)| n.counts().to_vec()).collect();
    active.sort();
    let expected = vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]];
    let bottom = f.nodes().bottom().counts().to_vec();
    let top = f.nodes().top().counts().to_vec();
    check(
        active == expected && bottom == [1, 1] && top == [2, 2],
        format!("active {active:?}, bottom {bottom:?}, top {top:?}"),
    )
}

fn exact_vs_approximate() -> Outcome {
    let f = two_time_filter(1.0);
    let exact = PredictiveState::exact(&f, TWO_TIME_LAG).map_err(|e| e.to_string())?;
    let approx = PredictiveState::approximate(&f, TWO_TIME_LAG, 1_000_000, &mut rng(4)).map_err(|e| e.to_string())?;
    let sup = exact.support(SUPPORT_TAIL);
    let tv = total_variation(&sup, |y| exact.pmf(y), |y| approx.pmf(y));
    check(tv < 0.005, format!("TV = {tv:.2e}"))
}

fn first_draw_frequencies() -> Outcome {
    const N: usize = 100_000;
    let state = two_time_state();
    let mut r = rng(5);
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for _ in 0..N {
        let y = state.clone().sample_next(&mut r).map_err(|e| e.to_string())?;
        *counts.entry(y).or_insert(0) += 1;
    }
    let mut worst = 0.0_f64;
    for y in state.support(SUPPORT_TAIL) {
        let p = state.pmf(y);
        let freq = *counts.get(&y).unwrap_or(&0) as f64 / N as f64;
        let se = (p * (1.0 - p) / N as f64).sqrt();
        worst = worst.max((freq - p).abs() / se);
    }
    let stray = counts.keys().any(|&y| state.pmf(y) == 0.0);
    check(worst <= 4.0 && !stray, format!("max deviation {worst:.2} SE over 10 atoms"))
}

/// Stationary pairs: `Y₀ ~ P₀`, then the first predictive draw after lag `s`.
fn correlation_pairs() -> Outcome {
    const N: usize = 100_000;
    let p0: BaseDistribution = "poisson:4".parse().unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, (theta, s)) in [(1.0, 0.1), (1.0, 1.0), (2.0, 1.0)].into_iter().enumerate() {
        let base = BaseMeasure::new(theta, p0.clone()).unwrap();
        let mut states: HashMap<i64, PredictiveState<f64>> = HashMap::new();
        let mut r = rng(60 + i as u64);
        let mut pairs = Vec::with_capacity(N);
        for _ in 0..N {
            let y0 = base.sample(&mut r);
            let state = match states.get(&y0) {
                Some(st) => st,
                None => {
                    let f = FilterState::init(base.clone(), 1.0).unwrap().update_batch(&[y0]).unwrap();
                    let st = PredictiveState::exact(&f, s).map_err(|e| e.to_string())?;
                    states.entry(y0).or_insert(st)
                }
            };
            let y1 = state.clone().sample_next(&mut r).map_err(|e| e.to_string())?;
            pairs.push((y0 as f64, y1 as f64));
        }
        let rho = pearson(&pairs);
        let target = correlation(theta, s);
        let se = (1.0 - target * target) / (N as f64).sqrt();
        let z = (rho - target).abs() / se;
        ok &= z <= 3.0;
        lines.push(format!("(θ={theta}, s={s}): {rho:.4} vs {target:.4} ({z:.2} SE)"));
    }
    check(ok, lines.join("; "))
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn long_lag_limit() -> Outcome {
    let f = two_time_filter(1.0);
    let fresh = PredictiveState::exact(&FilterState::init(f.base().clone(), 1.0).unwrap(), 1.0).unwrap();
    let mut tvs = Vec::new();
    for t in [0.1, 1.0, 5.0, 10.0, 50.0] {
        let s = PredictiveState::exact(&f, t).map_err(|e| e.to_string())?;
        let sup = s.support(SUPPORT_TAIL);
        tvs.push(total_variation(&sup, |y| s.pmf(y), |y| fresh.pmf(y)));
    }
    let monotone = tvs.windows(2).all(|w| w[1] < w[0]);
    let last = *tvs.last().unwrap();
    check(monotone && last < 1e-6, format!("TV over t = {}", sci(&tvs)))
}

fn large_sample_regime() -> Outcome {
    let mut s = two_time_state();
    let top = s.node_set().map_err(|e| e.to_string())?.top().total() as f64;
    let theta = s.theta();
    let mut r = rng(8);
    let mut tvs = Vec::new();
    let mut drawn = 0;
    for k in [100, 1_000, 10_000] {
        s.sample_sequence(k - drawn, &mut r).map_err(|e| e.to_string())?;
        drawn = k;
        let sup = s.support(SUPPORT_TAIL);
        tvs.push(total_variation(&sup, |y| s.pmf(y), |y| s.empirical_pmf(y)));
    }
    let b = s.coefficients().b;
    let bound = 1.0 - (theta + top + 10.0) / 1e4;
    let decreasing = tvs.windows(2).all(|w| w[1] < w[0]);
    check(b >= bound && decreasing, format!("B = {b:.6} (bound {bound:.6}); TV to empirical = {}", sci(&tvs)))
}

fn partition_laws() -> Outcome {
    const N: usize = 100_000;
    // zero history over a diffuse base: ties have probability ~1e-9
    let base = BaseMeasure::new(1.0, "uniform:0,999999999".parse().unwrap()).unwrap();
    let fresh = PredictiveState::exact(&FilterState::init(base, 1.0).unwrap(), 1.0).unwrap();
    let freq = partition_frequencies(&fresh, 4, N, &mut rng(9), sample_partition).map_err(|e| e.to_string())?;
    let mut chi2 = 0.0;
    let parts = set_partitions(4);
    for p in &parts {
        let expected = N as f64 * dp_eppf(&block_sizes(p), 1.0).unwrap();
        let observed = N as f64 * freq.get(p).copied().unwrap_or(0.0);
        chi2 += (observed - expected).powi(2) / expected;
    }
    let critical = ChiSquared::new((parts.len() - 1) as f64).unwrap().inverse_cdf(0.999);

    let state = two_time_state();
    let law: Vec<(Vec<usize>, f64)> = set_partitions(3)
        .into_iter()
        .map(|p| {
            let q = lemma2_oracle(&state, &block_sizes(&p)).unwrap();
            (p, q)
        })
        .collect();
    let oracle_mass: f64 = law.iter().map(|(_, q)| q).sum();
    let empirical = [
        partition_frequencies(&state, 3, N, &mut rng(10), sample_partition),
        partition_frequencies(&state, 3, N, &mut rng(11), conveyor_simulate),
        partition_frequencies(&state, 3, N, &mut rng(12), grouped_sequence),
    ];
    let empirical: Vec<_> = empirical.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for (p, q) in &law {
        let se = (q * (1.0 - q) / N as f64).sqrt();
        let f: Vec<f64> = empirical.iter().map(|e| e.get(p).copied().unwrap_or(0.0)).collect();
        for &x in &f {
            worst = worst.max((x - q).abs() / se);
        }
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                worst = worst.max((f[i] - f[j]).abs() / (se * 2f64.sqrt()));
            }
        }
    }
    check(
        chi2 < critical && worst <= 4.0 && (oracle_mass - 1.0).abs() < 1e-12,
        format!(
            "n=4 chi2 = {chi2:.2} (critical {critical:.2}); n=3 max deviation {worst:.2} SE, oracle mass {oracle_mass:.15}"
        ),
    )
}

fn eppf_normalization() -> Outcome {
    let mut worst = 0.0_f64;
    for theta in [0.5, 1.0, 5.0] {
        let s: f64 = set_partitions(4).iter().map(|p| dp_eppf(&block_sizes(p), theta).unwrap()).sum();
        worst = worst.max((s - 1.0).abs());
    }
    check(worst < 1e-12, format!("max |sum - 1| = {worst:.2e}"))
}

/// Blackwell–MacQueen urn over `0..=999_999_999`.
fn dp_urn(theta: f64, n: usize, seed: u64) -> Vec<i64> {
    let mut r = rng(seed);
    let mut ys: Vec<i64> = Vec::with_capacity(n);
    for i in 0..n {
        let y = if r.random::<f64>() < theta / (theta + i as f64) {
            r.random_range(0..=999_999_999)
        } else {
            ys[r.random_range(0..i)]
        };
        ys.push(y);
    }
    ys
}

fn hyper_recovery() -> Outcome {
    let p0: BaseDistribution = "uniform:0,999999999".parse().unwrap();
    let grid = [
        GridPoint { theta: 1.0, sigma: 1.0, prior: 0.5 },
        GridPoint { theta: 100.0, sigma: 1.0, prior: 0.5 },
    ];
    let posts: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let batches = [Batch { time: 0.0, values: dp_urn(1.0, 200, 1100 + seed) }];
            let points = hyper_posterior::<f64>(&grid, &p0, &batches, FilterConfig::default()).unwrap();
            points[0].posterior
        })
        .collect();
    let avg = posts.iter().sum::<f64>() / posts.len() as f64;
    check(avg > 0.9, format!("mean posterior on θ=1: {avg:.4}"))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_fvddp")).args(args).output().map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&o.stderr).into_owned())
        }
    };
    let data = dir.path().join("data.csv");
    let data = data.to_str().unwrap();
    run(&["synthetic", "--seed", "12", "--horizon", "5", "--per-time", "15", "--out", data])?;
    let grids = ["--theta-grid", "0.5,1,2,4", "--sigma-grid", "0.1,0.5,1"];
    let hyper = dir.path().join("hyper");
    run(&[&["hyper", "--data", data, "--out", hyper.to_str().unwrap()], &grids[..]].concat())?;
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        run(&[
            &["predict", "--data", data, "--replicates", "100", "--draws", "200", "--seed", "12"],
            &grids[..],
            &["--out", out.to_str().unwrap()],
        ]
        .concat())?;
        outputs.push(fs::read_to_string(out.join("predictive.csv")).map_err(|e| e.to_string())?);
    }
    let mut rows = Vec::new();
    for line in outputs[0].lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        rows.push((v[1], v[2], v[3]));
    }
    let total: f64 = rows.iter().map(|r| r.0).sum();
    // a rarely drawn value may have its mean above the upper quantile
    let bands = rows.iter().all(|&(_, lo, hi)| lo <= hi);
    let wide = rows.iter().filter(|&&(_, lo, hi)| hi > lo).count();
    let hyper_rows = fs::read_to_string(hyper.join("hyper.csv")).map_err(|e| e.to_string())?.lines().count() - 1;
    let same = outputs[0] == outputs[1];
    check(
        (total - 1.0).abs() <= 1e-6 && bands && wide > 0 && same && hyper_rows == 12,
        format!(
            "sum of means {total:.9}, {} values, {wide} bands of positive width, {hyper_rows} hyper rows, identical reruns: {same}",
            rows.len()
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("death kernel rows normalize", Duration::from_secs(10), kernel_normalization),
        ("transition formula matches simulation", Duration::from_secs(120), formula_vs_simulation),
        ("two-time lattice active set", Duration::from_secs(1), two_time_active_set),
        ("approximate predictive matches exact", Duration::from_secs(60), exact_vs_approximate),
        ("first-draw frequencies match the pmf", Duration::from_secs(60), first_draw_frequencies),
        ("lagged correlation", Duration::from_secs(120), correlation_pairs),
        ("long-lag limit is the prior urn", Duration::from_secs(1), long_lag_limit),
        ("large-sample regime", Duration::from_secs(60), large_sample_regime),
        ("partition samplers and oracle agree", Duration::from_secs(300), partition_laws),
        ("EPPF normalizes", Duration::from_secs(1), eppf_normalization),
        ("hyperparameter recovery", Duration::from_secs(120), hyper_recovery),
        ("end-to-end workflow", Duration::from_secs(300), end_to_end),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_message(&e))));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit:?} budget")),
            Err(d) => (false, d),
        };
        failures += usize::from(!ok);
        println!(
            "{} criterion {:>2}: {name}: {detail} [{:.2}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}
