//! First- and second-order Gateaux derivatives of the Kaplan–Meier
//! functionals at the empirical distribution.
//!
//! Write the product-limit estimate under unit weights `w` as
//! `Π_k (1 - D_k/R_k)` with `D_k` the weighted events at `u_k` and `R_k` the
//! weighted risk set. Differentiating along `F + ε(δ_i - F)` gives, for
//! `S(u_M -)` with `M` event times before the horizon,
//!
//! ```text
//! φ'_i        = N S · L(i)
//! L(i)        = Σ_{k<M} 1{u_k <(=) T_i}/(Y_k - d_k) - 1{u_k <= T_i}/Y_k
//! φ''(l, i)   = N² S (L(l, i) + L(l) L(i)) + N S (L(l) + L(i))
//! L(l, i)     = Σ_{k<M} 1{u_k <= T_l, T_i}/Y_k² - 1{u_k <(=) T_l, T_i}/(Y_k - d_k)²
//! ```
//!
//! where `<(=)` is `<` for an observed event and `<=` for a censoring. On
//! uncensored data `φ'` is `1{T_i >= t} - S(t-)` exactly and `φ''` vanishes.
//! Restricted means integrate these over the segments of the step function.

use crate::data::Transform;
use crate::error::Result;
use crate::survival::{km_fit, KmFit};

/// Prefix tables shared by all derivative evaluations on one sample.
#[derive(Debug, Clone)]
pub struct KmInfluence {
    km: KmFit,
    nf: f64,
    /// With no censoring the functional is linear in `F` and `φ''` is zero.
    uncensored: bool,
    /// Event times `<= T_i`.
    through: Vec<usize>,
    /// Event times `< T_i`, or `<= T_i` for a censored unit.
    strict: Vec<usize>,
    /// Prefix products of `1 - d/Y`.
    surv: Vec<f64>,
    inv_y: Vec<f64>,
    inv_yd: Vec<f64>,
    inv_y2: Vec<f64>,
    inv_yd2: Vec<f64>,
}

fn prefix(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

/// Segments `(cut, length)` of `[0, t)` on which `S` is constant: the value
/// on segment `cut` is the survival after the first `cut` factors.
fn segments(km: &KmFit, t: f64) -> Vec<(usize, f64)> {
    let m = km.count_before(t);
    let mut out = Vec::with_capacity(m + 1);
    let mut left = 0.0;
    for s in 0..=m {
        let right = if s < m { km.event_times[s] } else { t };
        if right > left {
            out.push((s, right - left));
        }
        left = right;
    }
    out
}

impl KmInfluence {
    pub fn new(times: &[f64], events: &[bool]) -> Result<Self> {
        let km = km_fit(times, events)?;
        let through: Vec<usize> = times.iter().map(|&t| km.count_through(t)).collect();
        let strict: Vec<usize> = through.iter().zip(events).map(|(&a, &e)| a - e as usize).collect();
        let m = km.event_times.len();
        let mut surv = vec![1.0; m + 1];
        for k in 0..m {
            surv[k + 1] = surv[k] * (1.0 - km.n_events[k] / km.n_at_risk[k]);
        }
        // Y - d = 0 only at a final all-failure time, beyond which S = 0 and
        // every derivative is returned as zero before these tables are read
        let yd = |k: usize| km.n_at_risk[k] - km.n_events[k];
        let inv_y = prefix((0..m).map(|k| 1.0 / km.n_at_risk[k]));
        let inv_yd = prefix((0..m).map(|k| 1.0 / yd(k)));
        let inv_y2 = prefix((0..m).map(|k| km.n_at_risk[k].powi(-2)));
        let inv_yd2 = prefix((0..m).map(|k| yd(k).powi(-2)));
        Ok(Self {
            nf: times.len() as f64,
            uncensored: events.iter().all(|&e| e),
            km,
            through,
            strict,
            surv,
            inv_y,
            inv_yd,
            inv_y2,
            inv_yd2,
        })
    }

    pub fn n(&self) -> usize {
        self.through.len()
    }

    pub fn km(&self) -> &KmFit {
        &self.km
    }

    /// The functional itself: `S(t-)` or `∫_0^t S`.
    pub fn theta(&self, transform: Transform, t: f64) -> f64 {
        match transform {
            Transform::Survival => self.km.survival_left(t),
            Transform::Restricted => self.km.rmst(t),
        }
    }

    fn cut_weights(&self, transform: Transform, t: f64) -> Vec<(usize, f64)> {
        match transform {
            Transform::Survival => vec![(self.km.count_before(t), 1.0)],
            Transform::Restricted => segments(&self.km, t),
        }
    }

    #[inline]
    fn l1(&self, i: usize, cut: usize) -> f64 {
        self.inv_yd[self.strict[i].min(cut)] - self.inv_y[self.through[i].min(cut)]
    }

    #[inline]
    fn l2(&self, l: usize, i: usize, cut: usize) -> f64 {
        let a = self.through[l].min(self.through[i]).min(cut);
        let b = self.strict[l].min(self.strict[i]).min(cut);
        self.inv_y2[a] - self.inv_yd2[b]
    }

    fn second_at_cut(&self, l: usize, i: usize, cut: usize) -> f64 {
        let s = self.surv[cut];
        if s == 0.0 || self.uncensored {
            return 0.0;
        }
        let (ll, li) = (self.l1(l, cut), self.l1(i, cut));
        let n = self.nf;
        n * n * s * (self.l2(l, i, cut) + ll * li) + n * s * (ll + li)
    }

    /// `φ'_i` for every unit.
    pub fn first(&self, transform: Transform, t: f64) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (cut, len) in self.cut_weights(transform, t) {
            let s = self.surv[cut];
            if s == 0.0 {
                continue;
            }
            let f = self.nf * s * len;
            for (i, o) in out.iter_mut().enumerate() {
                *o += f * self.l1(i, cut);
            }
        }
        out
    }

    /// `φ''(l, i)` for one pair.
    pub fn second(&self, transform: Transform, t: f64, l: usize, i: usize) -> f64 {
        self.cut_weights(transform, t)
            .into_iter()
            .map(|(cut, len)| len * self.second_at_cut(l, i, cut))
            .sum()
    }

    /// `Σ_l c_l φ''(l, i)` over all `l` (including `l = i`) for every `i`,
    /// by bucketing units on their clamped event-time counts.
    fn weighted_second_at_cut(&self, c: &[f64], cut: usize, out: &mut [f64], scale: f64) {
        let s = self.surv[cut];
        if s == 0.0 || self.uncensored {
            return;
        }
        let n = self.n();
        let nf = self.nf;
        let mut by_through = vec![0.0; cut + 1];
        let mut by_strict = vec![0.0; cut + 1];
        let mut total_c = 0.0;
        let mut total_cl = 0.0;
        for l in 0..n {
            by_through[self.through[l].min(cut)] += c[l];
            by_strict[self.strict[l].min(cut)] += c[l];
            total_c += c[l];
            total_cl += c[l] * self.l1(l, cut);
        }
        // g(a) = Σ_l c_l Q[min(k_l, a)] = Σ_{k<a} bucket[k] Q[k] + Q[a] Σ_{k>=a} bucket[k]
        let mut g_through = vec![0.0; cut + 1];
        let mut g_strict = vec![0.0; cut + 1];
        let (mut below_t, mut below_s) = (0.0, 0.0);
        let (mut mass_t, mut mass_s) = (0.0, 0.0);
        for a in 0..=cut {
            g_through[a] = below_t + self.inv_y2[a] * (total_c - mass_t);
            g_strict[a] = below_s + self.inv_yd2[a] * (total_c - mass_s);
            below_t += by_through[a] * self.inv_y2[a];
            below_s += by_strict[a] * self.inv_yd2[a];
            mass_t += by_through[a];
            mass_s += by_strict[a];
        }
        for i in 0..n {
            let li = self.l1(i, cut);
            let cross = g_through[self.through[i].min(cut)] - g_strict[self.strict[i].min(cut)];
            let v = nf * nf * s * (cross + li * total_cl) + nf * s * (total_c * li + total_cl);
            out[i] += scale * v;
        }
    }

    /// `Q_i = (N-1)^-1 Σ_{l≠i} c_l φ''(l, i)`.
    pub fn q_weighted(&self, transform: Transform, t: f64, c: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut total = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for (cut, len) in self.cut_weights(transform, t) {
            self.weighted_second_at_cut(c, cut, &mut total, len);
            for i in 0..n {
                diag[i] += len * self.second_at_cut(i, i, cut);
            }
        }
        (0..n).map(|i| (total[i] - c[i] * diag[i]) / (self.nf - 1.0)).collect()
    }
}

/// Pieces of the second-order expansion of one pseudo-observation column.
#[derive(Debug, Clone)]
pub struct InfluencePieces {
    pub theta: f64,
    pub phi1: Vec<f64>,
    /// `(N-1)^-1 Σ_{l≠i} φ''(l, i)`.
    pub q: Vec<f64>,
    /// `θ_i - θ - φ'_i - q_i`.
    pub remainder_diag: Vec<f64>,
}

pub fn influence_pieces(
    inf: &KmInfluence,
    pseudo: &[f64],
    transform: Transform,
    t: f64,
) -> InfluencePieces {
    let theta = inf.theta(transform, t);
    let phi1 = inf.first(transform, t);
    let q = inf.q_weighted(transform, t, &vec![1.0; inf.n()]);
    let remainder_diag = (0..inf.n()).map(|i| pseudo[i] - theta - phi1[i] - q[i]).collect();
    InfluencePieces {
        theta,
        phi1,
        q,
        remainder_diag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, seed: u64, censor: bool) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times = Vec::new();
        let mut events = Vec::new();
        for _ in 0..n {
            // rounded to create ties
            let t = (rng.random::<f64>() * 20.0).round() / 2.0 + 0.5;
            let c = (rng.random::<f64>() * 25.0).round() / 2.0 + 0.5;
            if censor {
                times.push(t.min(c));
                events.push(t <= c);
            } else {
                times.push(t);
                events.push(true);
            }
        }
        (times, events)
    }

    #[test]
    fn uncensored_first_order_is_centered_indicator() {
        let (times, events) = sample(60, 1, false);
        let inf = KmInfluence::new(&times, &events).unwrap();
        for t in [0.3, 2.5, 5.0, 7.25, 20.0] {
            let s = inf.theta(Transform::Survival, t);
            let phi = inf.first(Transform::Survival, t);
            let r = inf.first(Transform::Restricted, t);
            let rm = inf.theta(Transform::Restricted, t);
            for i in 0..60 {
                let y = (times[i] >= t) as u8 as f64;
                assert!((phi[i] - (y - s)).abs() < 1e-12);
                assert!((r[i] - (times[i].min(t) - rm)).abs() < 1e-11);
            }
            assert!(phi.iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn uncensored_second_order_vanishes() {
        let (times, events) = sample(40, 2, false);
        let inf = KmInfluence::new(&times, &events).unwrap();
        for k in [Transform::Survival, Transform::Restricted] {
            for (l, i) in [(0, 1), (3, 3), (10, 20)] {
                assert_eq!(inf.second(k, 6.0, l, i), 0.0);
            }
            assert!(inf.q_weighted(k, 6.0, &vec![1.3; 40]).iter().all(|&q| q == 0.0));
        }
    }

    #[test]
    fn aggregated_q_matches_pair_sum() {
        let (times, events) = sample(50, 3, true);
        let inf = KmInfluence::new(&times, &events).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 2.0).collect();
        for k in [Transform::Survival, Transform::Restricted] {
            let q = inf.q_weighted(k, 6.3, &c);
            for i in 0..50 {
                let direct: f64 = (0..50).filter(|&l| l != i).map(|l| c[l] * inf.second(k, 6.3, l, i)).sum::<f64>() / 49.0;
                assert!((q[i] - direct).abs() < 1e-9 * (1.0 + direct.abs()), "{k:?} {i}: {} vs {direct}", q[i]);
            }
        }
    }

    #[test]
    fn second_order_is_symmetric() {
        let (times, events) = sample(50, 4, true);
        let inf = KmInfluence::new(&times, &events).unwrap();
        for (l, i) in [(0, 1), (5, 40), (17, 33)] {
            for k in [Transform::Survival, Transform::Restricted] {
                assert!((inf.second(k, 7.0, l, i) - inf.second(k, 7.0, i, l)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn first_order_is_centered() {
        let (times, events) = sample(80, 5, true);
        let inf = KmInfluence::new(&times, &events).unwrap();
        // a Gateaux derivative along δ - F averages to zero over the sample
        for k in [Transform::Survival, Transform::Restricted] {
            let phi = inf.first(k, 6.0);
            assert!(phi.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
