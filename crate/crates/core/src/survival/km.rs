use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Product-limit fit. Arrays indexed by distinct event time.
///
/// Ties: at a shared time, events are processed before censorings, and
/// both are in the risk set at that time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmFit {
    pub event_times: Vec<f64>,
    /// `Y(u)`: units with observed time `>= u`.
    pub n_at_risk: Vec<f64>,
    /// `dN(u)`: events at `u`.
    pub n_events: Vec<f64>,
    /// `S(u)` just after the drop at `u`.
    pub survival: Vec<f64>,
    /// Nelson–Aalen `Λ(u)`.
    pub cum_hazard: Vec<f64>,
    pub n: usize,
    sorted_times: Vec<f64>,
}

pub fn km_fit(times: &[f64], events: &[bool]) -> Result<KmFit> {
    if times.len() != events.len() {
        return Err(Error::Invalid("times and events differ in length".into()));
    }
    let n = times.len();
    if n < 2 {
        return Err(Error::Invalid("Kaplan–Meier needs at least 2 observations".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Invalid("times must be finite and nonnegative".into()));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::DegenerateSurvival("no events in sample".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted_times: Vec<f64> = order.iter().map(|&i| times[i]).collect();

    let mut fit = KmFit {
        event_times: Vec::new(),
        n_at_risk: Vec::new(),
        n_events: Vec::new(),
        survival: Vec::new(),
        cum_hazard: Vec::new(),
        n,
        sorted_times,
    };
    let mut s = 1.0;
    let mut h = 0.0;
    let mut pos = 0;
    while pos < n {
        let t = times[order[pos]];
        let at_risk = (n - pos) as f64;
        let mut end = pos;
        let mut d = 0usize;
        while end < n && times[order[end]] == t {
            d += events[order[end]] as usize;
            end += 1;
        }
        if d > 0 {
            let d = d as f64;
            s *= 1.0 - d / at_risk;
            h += d / at_risk;
            fit.event_times.push(t);
            fit.n_at_risk.push(at_risk);
            fit.n_events.push(d);
            fit.survival.push(s);
            fit.cum_hazard.push(h);
        }
        pos = end;
    }
    Ok(fit)
}

impl KmFit {
    /// Number of event times strictly before `t`.
    #[inline]
    pub fn count_before(&self, t: f64) -> usize {
        self.event_times.partition_point(|&u| u < t)
    }

    /// Number of event times at or before `t`.
    #[inline]
    pub fn count_through(&self, t: f64) -> usize {
        self.event_times.partition_point(|&u| u <= t)
    }

    /// Survival after the first `k` event-time factors.
    #[inline]
    pub fn survival_after(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// Right-continuous `S(t)`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.survival_after(self.count_through(t))
    }

    /// Left limit `S(t-)`.
    pub fn survival_left(&self, t: f64) -> f64 {
        self.survival_after(self.count_before(t))
    }

    pub fn cum_hazard_at(&self, t: f64) -> f64 {
        match self.count_through(t) {
            0 => 0.0,
            k => self.cum_hazard[k - 1],
        }
    }

    /// `Y(u)/N`.
    pub fn at_risk_fraction(&self, u: f64) -> f64 {
        let below = self.sorted_times.partition_point(|&x| x < u);
        (self.n - below) as f64 / self.n as f64
    }

    /// Exact `∫_0^t S(u) du`.
    pub fn rmst(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut area = 0.0;
        let mut left = 0.0;
        let mut s = 1.0;
        for (k, &u) in self.event_times.iter().enumerate() {
            if u >= t {
                break;
            }
            area += s * (u - left);
            left = u;
            s = self.survival[k];
        }
        area + s * (t - left)
    }
}

/// `S(t-)`, the left-limit accessor used for estimands with `1{T >= t}`.
pub fn km_eval_left(fit: &KmFit, t: f64) -> f64 {
    fit.survival_left(t)
}

pub fn rmst(fit: &KmFit, t: f64) -> f64 {
    fit.rmst(t)
}
