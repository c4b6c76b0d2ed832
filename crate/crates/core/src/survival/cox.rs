//! Cox proportional hazards with Breslow ties, fitted by damped Newton
//! iterations from a zero start. Used for the censoring model and the
//! Cox-based comparator estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::solve_symmetric;

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    /// Distinct event times of the baseline step function.
    pub baseline_times: Vec<f64>,
    /// Breslow `Λ0` just after each baseline time.
    pub baseline_cum_hazard: Vec<f64>,
    pub converged: bool,
    pub final_gradient_norm: f64,
    pub iterations: usize,
    pub log_partial_likelihood: f64,
}

/// Log partial likelihood with Breslow ties, its gradient and Hessian.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

struct RiskSets<'a> {
    times: &'a [f64],
    events: &'a [bool],
    x: &'a DMatrix<f64>,
    weights: Option<&'a [f64]>,
    /// Indices sorted by decreasing time.
    order: Vec<usize>,
}

impl<'a> RiskSets<'a> {
    fn new(
        times: &'a [f64],
        events: &'a [bool],
        x: &'a DMatrix<f64>,
        weights: Option<&'a [f64]>,
    ) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        Self {
            times,
            events,
            x,
            weights,
            order,
        }
    }

    #[inline]
    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn evaluate(&self, beta: &DVector<f64>, second_order: bool) -> PartialLikelihood {
        let p = self.x.ncols();
        let eta: Vec<f64> = (0..self.x.nrows())
            .map(|i| self.x.row(i).transpose().dot(beta))
            .collect();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        let mut value = 0.0;
        let mut gradient = DVector::zeros(p);
        let mut hessian = DMatrix::zeros(p, p);

        let n = self.order.len();
        let mut pos = 0;
        while pos < n {
            let t = self.times[self.order[pos]];
            let mut end = pos;
            while end < n && self.times[self.order[end]] == t {
                let i = self.order[end];
                let r = self.weight(i) * (eta[i] - shift).exp();
                let xi = self.x.row(i).transpose();
                s0 += r;
                s1.axpy(r, &xi, 1.0);
                if second_order {
                    s2.ger(r, &xi, &xi, 1.0);
                }
                end += 1;
            }
            for &i in &self.order[pos..end] {
                if !self.events[i] {
                    continue;
                }
                let w = self.weight(i);
                value += w * (eta[i] - shift - s0.ln());
                let xi = self.x.row(i).transpose();
                let mean = &s1 / s0;
                gradient.axpy(w, &(xi - &mean), 1.0);
                if second_order {
                    let mut cov = &s2 / s0;
                    cov.ger(-1.0, &mean, &mean, 1.0);
                    hessian -= cov * w;
                }
            }
            pos = end;
        }
        PartialLikelihood {
            value,
            gradient,
            hessian,
        }
    }

    fn baseline(&self, beta: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.order.len();
        let mut times = Vec::new();
        let mut increments = Vec::new();
        let mut s0 = 0.0;
        let mut pos = 0;
        while pos < n {
            let t = self.times[self.order[pos]];
            let mut end = pos;
            let mut d = 0.0;
            while end < n && self.times[self.order[end]] == t {
                let i = self.order[end];
                s0 += self.weight(i) * self.x.row(i).transpose().dot(beta).exp();
                if self.events[i] {
                    d += self.weight(i);
                }
                end += 1;
            }
            if d > 0.0 {
                times.push(t);
                increments.push(d / s0);
            }
            pos = end;
        }
        times.reverse();
        increments.reverse();
        let mut acc = 0.0;
        let cum = increments
            .into_iter()
            .map(|dh| {
                acc += dh;
                acc
            })
            .collect();
        (times, cum)
    }
}

/// Log partial likelihood (Breslow) at `beta`, with gradient and Hessian.
pub fn partial_likelihood(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    weights: Option<&[f64]>,
    beta: &[f64],
) -> PartialLikelihood {
    RiskSets::new(times, events, x, weights).evaluate(&DVector::from_column_slice(beta), true)
}

pub fn cox_fit(times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Result<CoxFit> {
    cox_fit_weighted(times, events, x, None)
}

/// Weighted partial likelihood with a weighted Breslow baseline.
pub fn cox_fit_weighted(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    weights: Option<&[f64]>,
) -> Result<CoxFit> {
    let n = times.len();
    let p = x.ncols();
    if events.len() != n || x.nrows() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Invalid("Cox inputs differ in length".into()));
    }
    if n < p + 1 {
        return Err(Error::Invalid(format!("Cox model needs n >= p + 1 (n = {n}, p = {p})")));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::DegenerateSurvival("Cox model: no events".into()));
    }
    let rs = RiskSets::new(times, events, x, weights);
    let mut beta = DVector::zeros(p);
    let mut pl = rs.evaluate(&beta, true);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=MAX_ITER {
        iterations = it;
        let gnorm = pl.gradient.norm();
        if gnorm <= 1e-8 * (1.0 + beta.norm()) {
            converged = true;
            break;
        }
        if it == MAX_ITER {
            break;
        }
        let step = solve_symmetric(&(-&pl.hessian), &pl.gradient).ok_or(Error::Singular("Cox information"))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + &step * scale;
            let next = rs.evaluate(&cand, true);
            if next.value.is_finite() && next.value >= pl.value - 1e-12 * pl.value.abs().max(1.0) {
                beta = cand;
                pl = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no ascent direction left at working precision
            converged = pl.gradient.norm() <= 1e-6 * (1.0 + beta.norm());
            break;
        }
    }
    let final_gradient_norm = pl.gradient.norm();
    if !converged {
        return Err(Error::NoConvergence {
            model: "Cox model",
            iterations,
            gradient_norm: final_gradient_norm,
        });
    }
    let (baseline_times, baseline_cum_hazard) = rs.baseline(&beta);
    Ok(CoxFit {
        coefficients: beta.iter().cloned().collect(),
        baseline_times,
        baseline_cum_hazard,
        converged,
        final_gradient_norm,
        iterations,
        log_partial_likelihood: pl.value,
    })
}

impl CoxFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// `Λ0(u)`, right-continuous.
    pub fn cum_baseline(&self, u: f64) -> f64 {
        match self.baseline_times.partition_point(|&s| s <= u) {
            0 => 0.0,
            k => self.baseline_cum_hazard[k - 1],
        }
    }

    /// `Λ0(u-)`.
    pub fn cum_baseline_left(&self, u: f64) -> f64 {
        match self.baseline_times.partition_point(|&s| s < u) {
            0 => 0.0,
            k => self.baseline_cum_hazard[k - 1],
        }
    }

    /// `exp(-Λ0(u) exp(x'β))`.
    pub fn survival(&self, u: f64, x: &[f64]) -> f64 {
        (-self.cum_baseline(u) * self.linear_predictor(x).exp()).exp()
    }

    /// Exact `∫_0^t exp(-Λ0(u) e^{lp}) du` of the model step function.
    pub fn restricted_mean(&self, t: f64, lp: f64) -> f64 {
        let risk = lp.exp();
        let mut area = 0.0;
        let mut left = 0.0;
        let mut s = 1.0;
        for (k, &u) in self.baseline_times.iter().enumerate() {
            if u >= t {
                break;
            }
            area += s * (u - left);
            left = u;
            s = (-self.baseline_cum_hazard[k] * risk).exp();
        }
        area + s * (t.max(left) - left)
    }
}

/// `G(u | x) = exp(-Λ0(u-) exp(x'β))`, the left-limit survival of a Cox
/// model fitted to censoring times.
pub fn censoring_survival(fit: &CoxFit, u: f64, x: &[f64]) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    (-fit.cum_baseline_left(u) * fit.linear_predictor(x).exp()).exp()
}

/// Which columns enter the censoring model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensoringSpec {
    pub covariates: bool,
    pub treatment_indicators: bool,
}

impl Default for CensoringSpec {
    fn default() -> Self {
        Self {
            covariates: true,
            treatment_indicators: true,
        }
    }
}

impl CensoringSpec {
    /// Design row: covariates then indicators for treatments `2..=J`.
    pub fn row(&self, data: &Dataset, i: usize) -> Vec<f64> {
        let u = &data.units()[i];
        let mut row = Vec::new();
        if self.covariates {
            row.extend_from_slice(&u.covariates);
        }
        if self.treatment_indicators {
            row.extend((2..=data.n_treatments()).map(|j| (u.treatment == j) as u8 as f64));
        }
        row
    }

    pub fn matrix(&self, data: &Dataset) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| self.row(data, i)).collect();
        let p = rows.first().map_or(0, Vec::len);
        DMatrix::from_fn(data.len(), p, |i, c| rows[i][c])
    }
}

/// Cox model for the censoring distribution `G(u | X, Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringModel {
    pub fit: CoxFit,
    pub spec: CensoringSpec,
}

impl CensoringModel {
    pub fn fit(data: &Dataset, spec: CensoringSpec) -> Result<Self> {
        let censored: Vec<bool> = data.units().iter().map(|u| !u.event).collect();
        let x = spec.matrix(data);
        let fit = if censored.iter().any(|&c| c) {
            cox_fit(&data.times(), &censored, &x)?
        } else {
            // no censoring: G ≡ 1
            CoxFit {
                coefficients: vec![0.0; x.ncols()],
                baseline_times: Vec::new(),
                baseline_cum_hazard: Vec::new(),
                converged: true,
                final_gradient_norm: 0.0,
                iterations: 0,
                log_partial_likelihood: 0.0,
            }
        };
        Ok(Self { fit, spec })
    }

    /// `G(u- | X_i, Z_i)` for unit `i` of `data`.
    pub fn survival_left(&self, data: &Dataset, i: usize, u: f64) -> f64 {
        censoring_survival(&self.fit, u, &self.spec.row(data, i))
    }
}
