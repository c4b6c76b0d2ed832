mod common;

use common::{censored_sample, naive_pseudo};
use proptest::prelude::*;
use pseudoweight::data::Transform;
use pseudoweight::pseudo::jackknife_values;

fn check(times: &[f64], events: &[bool], grid: &[f64]) {
    for (transform, restricted) in [(Transform::Survival, false), (Transform::Restricted, true)] {
        let fast = jackknife_values(times, events, grid, transform).unwrap();
        for (g, &t) in grid.iter().enumerate() {
            let naive = naive_pseudo(times, events, t, restricted);
            for (i, v) in naive.iter().enumerate() {
                let scale = if restricted { t } else { 1.0 };
                assert!(
                    (fast[(i, g)] - v).abs() <= 1e-8 * scale,
                    "{transform:?} t={t} unit {i}: fast {} naive {v}",
                    fast[(i, g)]
                );
            }
        }
    }
}

#[test]
fn matches_leave_one_out_refits_with_ties() {
    for seed in 0..10 {
        let (times, events) = censored_sample(40 + 7 * seed as usize, seed, true, true);
        check(&times, &events, &[0.25, 3.0, 5.5, 9.0, 17.5, 40.0]);
    }
}

#[test]
fn matches_leave_one_out_refits_continuous() {
    for seed in 100..105 {
        let (times, events) = censored_sample(120, seed, false, true);
        check(&times, &events, &[1.0, 4.0, 12.0, 22.0]);
    }
}

#[test]
fn horizon_on_an_event_time() {
    let (times, events) = censored_sample(60, 7, true, true);
    let t = times[events.iter().position(|&e| e).unwrap()];
    check(&times, &events, &[t]);
}

#[test]
fn last_observation_is_an_event() {
    let times = [1.0, 2.0, 2.0, 3.0, 5.0];
    let events = [true, false, true, false, true];
    check(&times, &events, &[1.5, 2.0, 4.0, 5.0, 6.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_samples(seed in 0u64..10_000, n in 5usize..60, ties in any::<bool>()) {
        let (times, events) = censored_sample(n, seed, ties, true);
        check(&times, &events, &[0.7, 6.0, 15.0]);
    }

    #[test]
    fn pseudo_values_average_to_estimate(seed in 0u64..10_000, n in 5usize..80) {
        let (times, events) = censored_sample(n, seed, true, true);
        let v = jackknife_values(&times, &events, &[5.0], Transform::Survival).unwrap();
        let ones = vec![1.0; n];
        let km = common::weighted_km_left(&times, &events, &ones, 5.0);
        // the mean of the pseudo-values is N S - (N-1) mean(S_-i)
        let loo: f64 = (0..n).map(|i| {
            let mut w = ones.clone();
            w[i] = 0.0;
            common::weighted_km_left(&times, &events, &w, 5.0)
        }).sum::<f64>() / n as f64;
        let expect = n as f64 * km - (n - 1) as f64 * loo;
        prop_assert!((v.column(0).mean() - expect).abs() < 1e-9);
    }
}
