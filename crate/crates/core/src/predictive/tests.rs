use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::filter::{FilterConfig, Propagation};

fn mv(c: &[u32]) -> MultiplicityVector {
    MultiplicityVector::new(c.to_vec()).unwrap()
}

fn base(theta: f64) -> BaseMeasure<f64> {
    BaseMeasure::new(theta, "uniform:0,9".parse().unwrap()).unwrap()
}

/// Two times, the same two values at each, as in the lattice walkthrough.
fn two_time_filter(theta: f64) -> FilterState<f64> {
    let cfg = FilterConfig { prune_eps: None, propagation: Propagation::Exact, ..Default::default() };
    FilterState::with_config(base(theta), 1.0, cfg)
        .unwrap()
        .update_batch(&[3, 8])
        .unwrap()
        .advance_time(1.0)
        .unwrap()
        .update_batch(&[3, 8])
        .unwrap()
}

fn zero_state(theta: f64) -> PredictiveState<f64> {
    let f = FilterState::init(base(theta), 1.0).unwrap();
    PredictiveState::exact(&f, 1.0).unwrap()
}

fn pmf_sum(s: &PredictiveState<f64>) -> f64 {
    s.support(SUPPORT_TAIL).iter().map(|&y| s.pmf(y)).sum()
}

#[test]
fn fresh_state_predicts_base() {
    let s = zero_state(2.0);
    let c = s.coefficients();
    assert_eq!((c.a, c.b), (1.0, 0.0));
    for y in -2..12 {
        assert_abs_diff_eq!(s.pmf(y), s.base().pmf(y), epsilon = 1e-15);
    }
}

#[test]
fn zero_vector_with_sample_is_dp_urn() {
    let mut s = zero_state(1.5);
    for y in [2, 2, 7] {
        s.observe(y).unwrap();
    }
    for y in 0..10 {
        let count = [2, 2, 7].iter().filter(|&&v| v == y).count() as f64;
        assert_abs_diff_eq!(s.pmf(y), (1.5 * 0.1 + count) / 4.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.pmf(y), s.limit_pmf(y), epsilon = 1e-14);
    }
}

#[test]
fn single_node_coefficients() {
    let nodes = WeightedNodeSet::singleton(mv(&[2, 1]));
    let s = PredictiveState::from_nodes(base(1.0), vec![3, 8], &nodes).unwrap();
    let c = s.coefficients();
    assert_abs_diff_eq!(c.a, 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(c.c[0], 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(c.c[1], 0.25, epsilon = 1e-15);
    assert_eq!(c.b, 0.0);
}

#[test]
fn pmf_normalizes_on_two_time_state() {
    let s = PredictiveState::exact(&two_time_filter(1.0), 0.5).unwrap();
    assert_abs_diff_eq!(pmf_sum(&s), 1.0, epsilon = 1e-12);
    assert_eq!(s.len(), 9);
}

#[test]
fn pair_law_is_exchangeable_by_enumeration() {
    let s = PredictiveState::exact(&two_time_filter(1.0), 0.5).unwrap();
    let support = s.support(SUPPORT_TAIL);
    let mut total = 0.0;
    for &a in &support {
        let mut sa = s.clone();
        sa.observe(a).unwrap();
        for &b in &support {
            let mut sb = s.clone();
            sb.observe(b).unwrap();
            let pab = s.pmf(a) * sa.pmf(b);
            let pba = s.pmf(b) * sb.pmf(a);
            assert_abs_diff_eq!(pab, pba, epsilon = 1e-15);
            total += pab;
        }
    }
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
}

#[test]
fn two_draw_sampling_matches_enumeration() {
    let p0 = BaseMeasure::new(1.0, "set:0,1".parse().unwrap()).unwrap();
    let nodes = WeightedNodeSet::from_pairs(1, vec![(mv(&[0]), 0.3), (mv(&[1]), 0.5), (mv(&[2]), 0.2)]).unwrap();
    let s = PredictiveState::from_nodes(p0, vec![1], &nodes).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let reps = 100_000;
    let mut freq = [[0usize; 2]; 2];
    for _ in 0..reps {
        let mut c = s.clone();
        let v = c.sample_sequence(2, &mut rng).unwrap();
        freq[v[0] as usize][v[1] as usize] += 1;
    }
    for a in 0..2i64 {
        let mut sa = s.clone();
        sa.observe(a).unwrap();
        for b in 0..2i64 {
            let p = s.pmf(a) * sa.pmf(b);
            let emp = freq[a as usize][b as usize] as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((emp - p).abs() < 4.0 * se, "({a},{b}): {emp} vs {p}");
        }
    }
}

#[test]
fn first_draw_frequencies_match_pmf() {
    let s = PredictiveState::exact(&two_time_filter(1.0), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let reps = 50_000;
    let mut hist = std::collections::HashMap::new();
    for _ in 0..reps {
        let mut c = s.clone();
        *hist.entry(c.sample_next(&mut rng).unwrap()).or_insert(0usize) += 1;
    }
    for y in s.support(SUPPORT_TAIL) {
        let p = s.pmf(y);
        let emp = *hist.get(&y).unwrap_or(&0) as f64 / reps as f64;
        assert!((emp - p).abs() < 4.0 * (p * (1.0 - p) / reps as f64).sqrt(), "{y}");
    }
}

#[test]
fn long_lag_draws_have_base_mean() {
    let s = PredictiveState::exact(&two_time_filter(1.0), 50.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reps = 20_000;
    let mean: f64 = (0..reps).map(|_| s.clone().sample_next(&mut rng).unwrap() as f64).sum::<f64>() / reps as f64;
    // uniform on 0..=9: mean 4.5, sd ≈ 2.87
    assert!((mean - 4.5).abs() < 4.0 * 2.873 / (reps as f64).sqrt());
}

#[test]
fn approximate_state_variants() {
    let f = two_time_filter(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let one = approx_predict(&f, 0.5, 1, &mut rng).unwrap();
    assert_eq!(one.len(), 1);
    let n = one.node(0).clone();
    for y in 0..10 {
        assert_abs_diff_eq!(one.pmf(y), one.urn_pmf(&n, y), epsilon = 1e-15);
    }
    let far = approx_predict(&f, 50.0, 1000, &mut rng).unwrap();
    assert_eq!(far.weights().map(|(n, _)| n.clone()).collect::<Vec<_>>(), vec![mv(&[0, 0])]);
    let ex = PredictiveState::exact(&f, 0.5).unwrap();
    let ap = approx_predict(&f, 0.5, 100_000, &mut rng).unwrap();
    let sup = ex.support(SUPPORT_TAIL);
    assert!(total_variation(&sup, |y| ex.pmf(y), |y| ap.pmf(y)) < 0.01);
}

#[test]
fn correlation_values() {
    assert_abs_diff_eq!(correlation(1.0, 0.0), 0.5);
    assert_abs_diff_eq!(correlation(2.0, 1.0), (-1.0f64).exp() / 3.0, epsilon = 1e-15);
    assert!(correlation(1.0, 80.0) < 1e-17);
}

#[test]
fn limit_regime_and_monotone_approach() {
    let f = two_time_filter(1.0);
    let zero = zero_state(1.0);
    let mut last = f64::INFINITY;
    for t in [0.1, 1.0, 5.0, 10.0, 50.0] {
        let s = PredictiveState::exact(&f, t).unwrap();
        let sup = s.support(SUPPORT_TAIL);
        let d = total_variation(&sup, |y| s.pmf(y), |y| s.limit_pmf(y));
        let dz = total_variation(&sup, |y| s.pmf(y), |y| zero.pmf(y));
        assert_abs_diff_eq!(d, dz, epsilon = 1e-15);
        assert!(d < last, "t={t}: {d} !< {last}");
        last = d;
    }
    assert!(last < 1e-6);
}

#[test]
fn large_sample_dominates() {
    let mut s = PredictiveState::exact(&two_time_filter(1.0), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    s.sample_sequence(10_000, &mut rng).unwrap();
    let c = s.coefficients();
    let top = 4.0;
    assert!(c.b >= 1.0 - (1.0 + top + 10.0) / 1e4);
    let sup = s.support(SUPPORT_TAIL);
    let d = total_variation(&sup, |y| s.pmf(y), |y| s.empirical_pmf(y));
    assert!(d < 10.0 * (1.0 + top) / 1e4, "{d}");
}

#[test]
fn f32_predictive_normalizes() {
    let b = BaseMeasure::<f32>::new(1.0, "uniform:0,9".parse().unwrap()).unwrap();
    let f = FilterState::init(b, 1.0).unwrap().update_batch(&[1, 1, 4]).unwrap();
    let s = PredictiveState::exact(&f, 0.3).unwrap();
    let total: f32 = s.support(SUPPORT_TAIL).iter().map(|&y| s.pmf(y)).sum();
    assert!((total - 1.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compact_form_matches_mixture(
        draws in prop::collection::vec(0i64..12, 0..8),
        lag in 0.01f64..3.0,
        theta in 0.2f64..6.0,
    ) {
        let cfg = FilterConfig { prune_eps: None, ..Default::default() };
        let f = FilterState::with_config(
            BaseMeasure::new(theta, "poisson:4".parse().unwrap()).unwrap(), 1.0, cfg)
            .unwrap().update_batch(&[1, 4, 4, 6]).unwrap();
        let mut s = PredictiveState::exact(&f, lag).unwrap();
        for &y in &draws {
            s.observe(y).unwrap();
            let c = s.coefficients();
            prop_assert!((c.total() - 1.0).abs() < 1e-12);
            prop_assert!(c.a >= 0.0 && c.b >= 0.0 && c.c.iter().all(|&x| x >= 0.0));
            let w: f64 = s.weights().map(|(_, w)| w).sum();
            prop_assert!((w - 1.0).abs() < 1e-12);
            for y in 0..14 {
                prop_assert!((s.pmf(y) - s.mixture_pmf(y)).abs() < 1e-12);
            }
        }
        prop_assert!((pmf_sum(&s) - 1.0).abs() < 1e-9);
    }
}
