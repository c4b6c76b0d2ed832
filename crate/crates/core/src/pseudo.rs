//! Pseudo-observations on a time grid.
//!
//! Jackknife values `N θ(t) - (N-1) θ_{-i}(t)` for the Kaplan–Meier survival
//! (left limit) and restricted mean functionals are computed in closed form.
//! Removing unit `i` lowers the risk set by one at every event time up to
//! `T_i` and removes its event (if any) at `T_i`. The leave-one-out
//! product-limit therefore splits into a prefix of "risk set minus one"
//! factors, one modified factor at `T_i`, and a suffix of unmodified
//! factors. Prefix products and prefix integrals of both factor sequences
//! give every leave-one-out value in `O(log N)`.
//!
//! Under covariate-dependent censoring, inverse probability of censoring
//! weighted values are used instead.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Transform};
use crate::error::{Error, Result};
use crate::survival::{km_fit, CensoringModel, KmFit};

/// Smallest admissible censoring survival in an IPCW denominator.
pub const CENSORING_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMethod {
    Jackknife,
    Ipcw,
}

/// `N x G` pseudo-observations over a sorted grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMatrix {
    pub values: DMatrix<f64>,
    pub grid: Vec<f64>,
    pub transform: Transform,
    pub method: PseudoMethod,
    pub source_hash: String,
    pub ids: Vec<String>,
}

impl PseudoMatrix {
    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    /// Column of an exact grid time.
    pub fn column_index(&self, t: f64) -> Result<usize> {
        self.grid
            .iter()
            .position(|&g| g == t)
            .ok_or_else(|| Error::Invalid(format!("time {t} is not on the pseudo-observation grid")))
    }

    pub fn column(&self, t: f64) -> Result<Vec<f64>> {
        let g = self.column_index(t)?;
        Ok(self.values.column(g).iter().cloned().collect())
    }

    pub fn column_mean(&self, g: usize) -> f64 {
        self.values.column(g).mean()
    }

    /// Long format `id,time,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "time", "value"])?;
        for (i, id) in self.ids.iter().enumerate() {
            for (g, t) in self.grid.iter().enumerate() {
                w.write_record([id.clone(), t.to_string(), format!("{:.12e}", self.values[(i, g)])])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorts and deduplicates a grid; rejects nonpositive or non-finite times.
pub fn normalize_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty time grid".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Invalid(format!("grid time {t} must be positive and finite")));
    }
    let mut out = grid.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    if out.len() != grid.len() || out.as_slice() != grid {
        log::warn!("time grid was unsorted or had duplicates; using {} sorted distinct times", out.len());
    }
    Ok(out)
}

/// Leave-one-out tables for a product-limit fit.
pub(crate) struct LeaveOneOut<'a> {
    km: &'a KmFit,
    /// Prefix products of `1 - d/Y` (length `m + 1`).
    full: Vec<f64>,
    /// Prefix products of `1 - d/(Y-1)`.
    reduced: Vec<f64>,
    /// Factor at `T_i` when unit `i` is one of the events there.
    own_event: Vec<f64>,
    /// Factor at `T_i` when unit `i` is censored at an event time.
    own_censored: Vec<f64>,
    full_area: Vec<f64>,
    reduced_area: Vec<f64>,
}

impl<'a> LeaveOneOut<'a> {
    pub(crate) fn new(km: &'a KmFit) -> Self {
        let m = km.event_times.len();
        let mut full = Vec::with_capacity(m + 1);
        let mut reduced = Vec::with_capacity(m + 1);
        let mut own_event = Vec::with_capacity(m);
        let mut own_censored = Vec::with_capacity(m);
        full.push(1.0);
        reduced.push(1.0);
        for k in 0..m {
            let (y, d) = (km.n_at_risk[k], km.n_events[k]);
            let a = 1.0 - d / y;
            let b = if y > 1.0 { 1.0 - d / (y - 1.0) } else { 0.0 };
            let c = if y > 1.0 { 1.0 - (d - 1.0) / (y - 1.0) } else { 1.0 };
            full.push(full[k] * a);
            reduced.push(reduced[k] * b);
            own_event.push(c);
            own_censored.push(b);
        }
        let mut full_area = vec![0.0; m + 1];
        let mut reduced_area = vec![0.0; m + 1];
        let mut left = 0.0;
        for k in 0..m {
            let len = km.event_times[k] - left;
            full_area[k + 1] = full_area[k] + full[k] * len;
            reduced_area[k + 1] = reduced_area[k] + reduced[k] * len;
            left = km.event_times[k];
        }
        Self {
            km,
            full,
            reduced,
            own_event,
            own_censored,
            full_area,
            reduced_area,
        }
    }

    fn partial(&self, count: usize, t: f64) -> f64 {
        if count == 0 {
            t
        } else {
            t - self.km.event_times[count - 1]
        }
    }

    /// Segment index from which the suffix of unmodified factors applies,
    /// and the leave-one-out survival at that segment.
    fn split(&self, time: f64, event: bool) -> (usize, usize, f64) {
        let before = self.km.count_before(time);
        let tie = before < self.km.event_times.len() && self.km.event_times[before] == time;
        if tie {
            let own = if event {
                self.own_event[before]
            } else {
                self.own_censored[before]
            };
            (before, before + 1, self.reduced[before] * own)
        } else {
            (before, before, self.reduced[before])
        }
    }

    fn ratio(&self, count: usize, start: usize) -> f64 {
        if count == start {
            1.0
        } else {
            self.full[count] / self.full[start]
        }
    }

    /// `S_{-i}(t-)` for a unit with the given observed time and status.
    pub(crate) fn survival(&self, time: f64, event: bool, t: f64) -> f64 {
        let count = self.km.count_before(t);
        let (before, start, base) = self.split(time, event);
        if count < start {
            debug_assert!(count <= before);
            self.reduced[count]
        } else {
            base * self.ratio(count, start)
        }
    }

    /// `∫_0^t S_{-i}(u) du`.
    pub(crate) fn restricted(&self, time: f64, event: bool, t: f64) -> f64 {
        let count = self.km.count_before(t);
        let partial = self.partial(count, t);
        let (_, start, base) = self.split(time, event);
        if count < start {
            self.reduced_area[count] + self.reduced[count] * partial
        } else {
            let middle = if count == start {
                0.0
            } else {
                base * (self.full_area[count] - self.full_area[start]) / self.full[start]
            };
            self.reduced_area[start] + middle + base * self.ratio(count, start) * partial
        }
    }

    pub(crate) fn full_survival(&self, t: f64) -> f64 {
        self.full[self.km.count_before(t)]
    }

    pub(crate) fn full_restricted(&self, t: f64) -> f64 {
        let count = self.km.count_before(t);
        self.full_area[count] + self.full[count] * self.partial(count, t)
    }
}

/// Jackknife pseudo-values for raw arrays; the workhorse behind
/// [`pseudo_km_survival`] and [`pseudo_km_rmst`].
pub fn jackknife_values(times: &[f64], events: &[bool], grid: &[f64], transform: Transform) -> Result<DMatrix<f64>> {
    let km = km_fit(times, events)?;
    let n = times.len();
    if events.iter().all(|&e| e) {
        // without censoring the jackknife value is ν(T_i; t) exactly; skip
        // the cancellation in N θ - (N-1) θ_{-i}
        return Ok(DMatrix::from_fn(n, grid.len(), |i, g| transform.apply(times[i], grid[g])));
    }
    let loo = LeaveOneOut::new(&km);
    let nf = n as f64;
    let full: Vec<f64> = grid
        .iter()
        .map(|&t| match transform {
            Transform::Survival => loo.full_survival(t),
            Transform::Restricted => loo.full_restricted(t),
        })
        .collect();
    let mut values = DMatrix::zeros(n, grid.len());
    for i in 0..n {
        for (g, &t) in grid.iter().enumerate() {
            let minus = match transform {
                Transform::Survival => loo.survival(times[i], events[i], t),
                Transform::Restricted => loo.restricted(times[i], events[i], t),
            };
            values[(i, g)] = nf * full[g] - (nf - 1.0) * minus;
        }
    }
    Ok(values)
}

fn jackknife(data: &Dataset, grid: &[f64], transform: Transform) -> Result<PseudoMatrix> {
    let grid = normalize_grid(grid)?;
    let values = jackknife_values(&data.times(), &data.events(), &grid, transform)?;
    Ok(PseudoMatrix {
        values,
        grid,
        transform,
        method: PseudoMethod::Jackknife,
        source_hash: data.fingerprint(),
        ids: data.units().iter().map(|u| u.id.clone()).collect(),
    })
}

/// Survival pseudo-observations `N S(t-) - (N-1) S_{-i}(t-)` on the pooled
/// sample.
pub fn pseudo_km_survival(data: &Dataset, grid: &[f64]) -> Result<PseudoMatrix> {
    jackknife(data, grid, Transform::Survival)
}

/// Restricted-mean pseudo-observations, the exact integral of each unit's
/// survival pseudo-trajectory.
pub fn pseudo_km_rmst(data: &Dataset, grid: &[f64]) -> Result<PseudoMatrix> {
    jackknife(data, grid, Transform::Restricted)
}

/// IPCW values for raw arrays; `g_left(i, u)` returns `G(u- | X_i, Z_i)`.
pub fn ipcw_values(
    times: &[f64],
    events: &[bool],
    ids: &[String],
    grid: &[f64],
    transform: Transform,
    g_left: impl Fn(usize, f64) -> f64,
) -> Result<DMatrix<f64>> {
    let n = times.len();
    let mut values = DMatrix::zeros(n, grid.len());
    for i in 0..n {
        for (g, &t) in grid.iter().enumerate() {
            let uncensored = events[i] || times[i] >= t;
            if !uncensored {
                continue;
            }
            let gv = g_left(i, times[i].min(t));
            if !(gv >= CENSORING_FLOOR) {
                return Err(Error::CensoringWeight {
                    unit: ids.get(i).cloned().unwrap_or_else(|| i.to_string()),
                    value: gv,
                });
            }
            values[(i, g)] = transform.apply(times[i], t) / gv;
        }
    }
    Ok(values)
}

/// `ν(T_i; t) 1{C_i >= T_i ∧ t} / G(T_i ∧ t | X_i, Z_i)`.
pub fn pseudo_ipcw(data: &Dataset, grid: &[f64], transform: Transform, model: &CensoringModel) -> Result<PseudoMatrix> {
    let grid = normalize_grid(grid)?;
    let ids: Vec<String> = data.units().iter().map(|u| u.id.clone()).collect();
    let values = ipcw_values(&data.times(), &data.events(), &ids, &grid, transform, |i, u| {
        model.survival_left(data, i, u)
    })?;
    Ok(PseudoMatrix {
        values,
        grid,
        transform,
        method: PseudoMethod::Ipcw,
        source_hash: data.fingerprint(),
        ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservedUnit;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dataset(times: &[f64], events: &[bool]) -> Dataset {
        let units = times
            .iter()
            .zip(events)
            .enumerate()
            .map(|(i, (&time, &event))| ObservedUnit {
                id: format!("u{i}"),
                treatment: 1 + i % 2,
                covariates: vec![i as f64],
                time,
                event,
            })
            .collect();
        Dataset::new(units, 2, vec!["x".into()]).unwrap()
    }

    // naive product limit on an explicit sample
    fn naive_left(times: &[f64], events: &[bool], t: f64) -> f64 {
        let mut distinct: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&x, _)| x).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        distinct
            .iter()
            .filter(|&&u| u < t)
            .map(|&u| {
                let y = times.iter().filter(|&&x| x >= u).count() as f64;
                let d = times.iter().zip(events).filter(|(&x, &e)| e && x == u).count() as f64;
                1.0 - d / y
            })
            .product()
    }

    #[test]
    fn three_point_matches_explicit_refits() {
        let times = [1.0, 2.0, 3.0];
        let events = [true, false, true];
        let d = dataset(&times, &events);
        let pm = pseudo_km_survival(&d, &[2.5]).unwrap();
        let full = naive_left(&times, &events, 2.5);
        for i in 0..3 {
            let t: Vec<f64> = times.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, &x)| x).collect();
            let e: Vec<bool> = events.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, &x)| x).collect();
            let expected = 3.0 * full - 2.0 * naive_left(&t, &e, 2.5);
            assert_abs_diff_eq!(pm.values[(i, 0)], expected, epsilon = 1e-14);
        }
        // hand values: S(2.5-) = 2/3; leaving out 1 → 1, 2 → 1/2, 3 → 1/2
        assert_abs_diff_eq!(pm.values[(0, 0)], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pm.values[(1, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pm.values[(2, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn uncensored_degenerates_to_outcomes() {
        let times = [0.5, 1.7, 2.2, 3.9, 4.4, 6.1];
        let d = dataset(&times, &[true; 6]);
        let grid = [0.25, 1.7, 2.0, 4.4, 5.0, 7.0];
        let s = pseudo_km_survival(&d, &grid).unwrap();
        let r = pseudo_km_rmst(&d, &grid).unwrap();
        for (i, &ti) in times.iter().enumerate() {
            for (g, &t) in grid.iter().enumerate() {
                assert_abs_diff_eq!(s.values[(i, g)], Transform::Survival.apply(ti, t), epsilon = 1e-12);
                assert_abs_diff_eq!(r.values[(i, g)], Transform::Restricted.apply(ti, t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_event_removed_gives_flat_curve() {
        // removing the only event leaves S ≡ 1
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [false, true, false, false];
        let d = dataset(&times, &events);
        let pm = pseudo_km_survival(&d, &[3.5]).unwrap();
        let full = naive_left(&times, &events, 3.5);
        assert_abs_diff_eq!(pm.values[(1, 0)], 4.0 * full - 3.0, epsilon = 1e-14);
    }

    #[test]
    fn ipcw_with_unit_weights_collapses_to_transform() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let d = dataset(&times, &[true; 4]);
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        for k in [Transform::Survival, Transform::Restricted] {
            let v = ipcw_values(&times, &[true; 4], &ids, &[2.5], k, |_, _| 1.0).unwrap();
            for i in 0..4 {
                assert_eq!(v[(i, 0)], k.apply(times[i], 2.5));
            }
        }
        let model = CensoringModel::fit(&d, Default::default()).unwrap();
        let pm = pseudo_ipcw(&d, &[2.5], Transform::Survival, &model).unwrap();
        assert_eq!(pm.values[(3, 0)], 1.0);
    }

    #[test]
    fn ipcw_zeroes_early_censored_units() {
        let times = [1.0, 2.0, 3.0];
        let events = [false, true, true];
        let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let v = ipcw_values(&times, &events, &ids, &[2.5], Transform::Survival, |_, _| 0.5).unwrap();
        assert_eq!(v[(0, 0)], 0.0);
        assert_eq!(v[(1, 0)], 0.0);
        assert_eq!(v[(2, 0)], 2.0);
    }

    #[test]
    fn ipcw_floor_names_unit() {
        let ids = vec!["alpha".to_string(), "beta".to_string()];
        let err = ipcw_values(&[1.0, 2.0], &[true, true], &ids, &[1.5], Transform::Survival, |i, _| {
            if i == 1 {
                1e-9
            } else {
                1.0
            }
        })
        .unwrap_err();
        assert!(err.to_string().contains("beta"));
    }

    #[test]
    fn grid_is_sorted_and_deduplicated() {
        assert_eq!(normalize_grid(&[3.0, 1.0, 3.0]).unwrap(), vec![1.0, 3.0]);
        assert!(normalize_grid(&[0.0, 1.0]).is_err());
        assert!(normalize_grid(&[]).is_err());
    }

    #[test]
    fn no_events_is_an_error() {
        let d = dataset(&[1.0, 2.0], &[false, false]);
        assert!(pseudo_km_survival(&d, &[1.0]).is_err());
    }

    #[test]
    fn censored_rmst_row_can_decrease() {
        // the only event is removed with unit 0, so its survival pseudo-value
        // past that event is 3·0 − 2·1 < 0 and its RMST row falls
        let times = [9.355, 0.1, 0.1];
        let events = [true, false, false];
        let v = jackknife_values(&times, &events, &[9.0, 9.45, 11.0], Transform::Restricted).unwrap();
        assert_abs_diff_eq!(v[(0, 0)], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[(0, 1)], 3.0 * 9.355 - 2.0 * 9.45, epsilon = 1e-12);
        assert_abs_diff_eq!(v[(0, 2)], 3.0 * 9.355 - 2.0 * 11.0, epsilon = 1e-12);
        assert!(v[(0, 2)] < v[(0, 1)]);
    }

    fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0.1f64..10.0, any::<bool>()), 3..40).prop_map(|v| {
            let times = v.iter().map(|x| x.0).collect();
            let mut events: Vec<bool> = v.iter().map(|x| x.1).collect();
            events[0] = true;
            (times, events)
        })
    }

    proptest! {
        #[test]
        fn uncensored_rmst_rows_are_nondecreasing(times in prop::collection::vec(0.1f64..10.0, 3..40)) {
            let events = vec![true; times.len()];
            let grid: Vec<f64> = (1..=25).map(|k| k as f64 * 0.45).collect();
            let v = jackknife_values(&times, &events, &grid, Transform::Restricted).unwrap();
            for i in 0..times.len() {
                for g in 1..grid.len() {
                    prop_assert!(v[(i, g)] >= v[(i, g - 1)] - 1e-9);
                }
            }
        }

        #[test]
        fn rmst_pseudo_is_integral_of_survival_pseudo((times, events) in sample(), t in 0.2f64..11.0) {
            let r = jackknife_values(&times, &events, &[t], Transform::Restricted).unwrap();
            // survival pseudo is a step function changing only at event times
            let mut knots: Vec<f64> = times.iter().zip(&events).filter(|(_, &e)| e).map(|(&x, _)| x).filter(|&x| x < t).collect();
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            let mut edges = vec![0.0];
            edges.extend(knots);
            edges.push(t);
            for i in 0..times.len() {
                let mut area = 0.0;
                for w in edges.windows(2) {
                    if w[1] > w[0] {
                        let mid = 0.5 * (w[0] + w[1]);
                        let s = jackknife_values(&times, &events, &[mid], Transform::Survival).unwrap();
                        area += s[(i, 0)] * (w[1] - w[0]);
                    }
                }
                prop_assert!((area - r[(i, 0)]).abs() < 1e-10 * (1.0 + area.abs()));
            }
        }
    }
}
