//! Independent reference implementations used as oracles.

#![allow(dead_code)]

pub mod grad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pseudoweight::data::{Dataset, ObservedUnit};

/// Weighted product-limit estimate `S(t-)`, built from scratch: sort the
/// distinct event times below `t` and multiply `1 - D/R`.
pub fn weighted_km_left(times: &[f64], events: &[bool], w: &[f64], t: f64) -> f64 {
    let mut event_times: Vec<f64> = (0..times.len())
        .filter(|&k| events[k] && times[k] < t && w[k] != 0.0)
        .map(|k| times[k])
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut s = 1.0;
    for &u in &event_times {
        let mut d = 0.0;
        let mut r = 0.0;
        for k in 0..times.len() {
            if times[k] >= u {
                r += w[k];
                if times[k] == u && events[k] {
                    d += w[k];
                }
            }
        }
        s *= 1.0 - d / r;
    }
    s
}

/// `∫_0^t S_w(u) du` by summing the step function between jump points.
pub fn weighted_rmst(times: &[f64], events: &[bool], w: &[f64], t: f64) -> f64 {
    let mut cuts: Vec<f64> = (0..times.len())
        .filter(|&k| events[k] && times[k] < t && w[k] != 0.0)
        .map(|k| times[k])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut area = 0.0;
    let mut left = 0.0;
    for &u in cuts.iter().chain(std::iter::once(&t)) {
        // S is constant on (left, u]; its value is S(u-)
        area += (u - left) * weighted_km_left(times, events, w, u);
        left = u;
    }
    area
}

pub fn functional(times: &[f64], events: &[bool], w: &[f64], t: f64, restricted: bool) -> f64 {
    if restricted {
        weighted_rmst(times, events, w, t)
    } else {
        weighted_km_left(times, events, w, t)
    }
}

/// Leave-one-out pseudo-values by refitting without each unit.
pub fn naive_pseudo(times: &[f64], events: &[bool], t: f64, restricted: bool) -> Vec<f64> {
    let n = times.len();
    let ones = vec![1.0; n];
    let full = functional(times, events, &ones, t, restricted);
    (0..n)
        .map(|i| {
            let mut w = ones.clone();
            w[i] = 0.0;
            n as f64 * full - (n - 1) as f64 * functional(times, events, &w, t, restricted)
        })
        .collect()
}

/// Mixed central difference of the functional along
/// `F + ε(δ_l - F) + δ(δ_i - F)` at the empirical distribution.
pub fn mixed_difference(times: &[f64], events: &[bool], t: f64, restricted: bool, l: usize, i: usize, eps: f64) -> f64 {
    let n = times.len();
    let eval = |a: f64, b: f64| {
        let mut w = vec![(1.0 - a - b) / n as f64; n];
        w[l] += a;
        w[i] += b;
        functional(times, events, &w, t, restricted)
    };
    (eval(eps, eps) - eval(eps, -eps) - eval(-eps, eps) + eval(-eps, -eps)) / (4.0 * eps * eps)
}

/// Right-censored sample with optional ties (times rounded to halves).
pub fn censored_sample(n: usize, seed: u64, ties: bool, censor: bool) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let mut t = -10.0 * (1.0 - rng.random::<f64>()).ln();
        let mut c = if censor { rng.random::<f64>() * 25.0 } else { f64::INFINITY };
        if ties {
            t = (t * 2.0).round() / 2.0 + 0.5;
            c = (c * 2.0).round() / 2.0 + 0.5;
        }
        times.push(t.min(c));
        events.push(t <= c);
    }
    (times, events)
}

/// Dataset with `J` arms drawn from a multinomial logit in two covariates.
pub fn logit_dataset(n: usize, j: usize, seed: u64, censor: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = (0..n)
        .map(|k| {
            let x = vec![rng.random::<f64>() * 2.0 - 1.0, (rng.random::<f64>() < 0.4) as u8 as f64];
            let eta: Vec<f64> = (0..j).map(|a| 0.4 * a as f64 * x[0] - 0.3 * a as f64 * x[1] + 0.1 * a as f64).collect();
            let total: f64 = eta.iter().map(|v| v.exp()).sum();
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut z = j;
            for (a, v) in eta.iter().enumerate() {
                acc += v.exp();
                if u < acc {
                    z = a + 1;
                    break;
                }
            }
            let rate = (0.3 * x[0] + 0.2 * z as f64).exp() / 8.0;
            let t = -(1.0 - rng.random::<f64>()).ln() / rate;
            let c = if censor { rng.random::<f64>() * 30.0 } else { f64::INFINITY };
            ObservedUnit {
                id: format!("u{k}"),
                treatment: z,
                covariates: x,
                time: t.min(c),
                event: t <= c,
            }
        })
        .collect();
    Dataset::new(units, j, vec!["x1".into(), "x2".into()]).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
