//! Generalized propensity score by multinomial logistic maximum likelihood,
//! reference group 1: `log(e_j / e_1) = x'γ_j` for `j = 2..J`.
//!
//! Coefficients are flattened group-major, `(j - 2) * q + c`.

mod design;

pub use design::{Design, DesignSpec, SplineTerm};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, rank, solve_symmetric};

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;
const SEPARATION_NORM: f64 = 30.0;

/// How `I_γγ` is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationKind {
    /// Observed information, `-H / N`.
    #[default]
    Hessian,
    /// Average outer product of per-unit scores.
    OuterProduct,
}

#[derive(Debug, Clone)]
pub struct PropensityFit {
    /// `(J - 1) x q`; row `j - 2` holds `γ_j`.
    pub gamma: DMatrix<f64>,
    /// `N x J` fitted scores.
    pub scores: DMatrix<f64>,
    /// `N x (J - 1) q` per-unit score vectors.
    pub score_contributions: DMatrix<f64>,
    /// Per-unit information.
    pub information: DMatrix<f64>,
    pub information_kind: InformationKind,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub design: Design,
    /// `N x q` design matrix of the fitted sample.
    pub x: DMatrix<f64>,
}

/// Softmax scores of one design row under flattened coefficients.
pub fn scores_for(x: &[f64], gamma: &[f64], n_treatments: usize) -> Vec<f64> {
    let q = x.len();
    let mut eta = vec![0.0; n_treatments];
    for j in 1..n_treatments {
        eta[j] = (0..q).map(|c| gamma[(j - 1) * q + c] * x[c]).sum();
    }
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = eta.iter().map(|v| (v - shift).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= total);
    e
}

/// Log-likelihood contribution of a unit in arm `arm` (0-based).
pub fn unit_log_likelihood(x: &[f64], gamma: &[f64], n_treatments: usize, arm: usize) -> f64 {
    let q = x.len();
    let mut eta = vec![0.0; n_treatments];
    for j in 1..n_treatments {
        eta[j] = (0..q).map(|c| gamma[(j - 1) * q + c] * x[c]).sum();
    }
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = shift + eta.iter().map(|v| (v - shift).exp()).sum::<f64>().ln();
    eta[arm] - lse
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

fn evaluate(x: &DMatrix<f64>, arms: &[usize], j: usize, gamma: &DVector<f64>) -> Evaluation {
    let (n, q) = (x.nrows(), x.ncols());
    let d = (j - 1) * q;
    let mut value = 0.0;
    let mut gradient = DVector::zeros(d);
    let mut hessian = DMatrix::zeros(d, d);
    let mut row = vec![0.0; q];
    for i in 0..n {
        for c in 0..q {
            row[c] = x[(i, c)];
        }
        value += unit_log_likelihood(&row, gamma.as_slice(), j, arms[i]);
        let e = scores_for(&row, gamma.as_slice(), j);
        for l in 1..j {
            let r = (arms[i] == l) as u8 as f64 - e[l];
            for c in 0..q {
                gradient[(l - 1) * q + c] += r * row[c];
            }
            for m in 1..j {
                let w = e[l] * ((l == m) as u8 as f64 - e[m]);
                for c in 0..q {
                    let wc = w * row[c];
                    for c2 in 0..q {
                        hessian[((l - 1) * q + c, (m - 1) * q + c2)] -= wc * row[c2];
                    }
                }
            }
        }
    }
    Evaluation {
        value,
        gradient,
        hessian,
    }
}

/// Per-column centre and spread; the leading intercept column is left as is.
fn standardization(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut center = vec![0.0; x.ncols()];
    let mut spread = vec![1.0; x.ncols()];
    for c in 1..x.ncols() {
        let col = x.column(c);
        let m = col.sum() / n;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            center[c] = m;
            spread[c] = sd;
        }
    }
    (center, spread)
}

/// Fits the multinomial logit on `design` expanded over `data`.
pub fn fit_propensity(data: &Dataset, spec: &DesignSpec) -> Result<PropensityFit> {
    let design = Design::build(spec, data)?;
    fit_with_design(data, design, InformationKind::Hessian)
}

pub fn fit_with_design(data: &Dataset, design: Design, information_kind: InformationKind) -> Result<PropensityFit> {
    let j = data.n_treatments();
    if j < 2 {
        return Err(Error::Invalid("propensity model needs at least 2 treatment groups".into()));
    }
    let x = design.matrix(data);
    let (n, q) = (x.nrows(), x.ncols());
    if rank(&x) < q {
        return Err(Error::Singular("propensity design"));
    }
    let arms = data.arms();
    let nf = n as f64;
    // Newton runs on centred and scaled columns; the intercept absorbs the
    // centring when mapping back.
    let (center, spread) = standardization(&x);
    let z = DMatrix::from_fn(n, q, |i, c| (x[(i, c)] - center[c]) / spread[c]);
    let tol = 1e-8 * nf / (1.0 + (0..q).map(|c| center[c].abs() + spread[c]).fold(0.0, f64::max));
    let mut gamma = DVector::zeros((j - 1) * q);
    let mut ev = evaluate(&z, &arms, j, &gamma);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=MAX_ITER {
        iterations = it;
        let gnorm = ev.gradient.norm();
        if gnorm <= tol {
            converged = true;
            break;
        }
        if gamma.norm() > SEPARATION_NORM {
            return Err(Error::Separation {
                coef_norm: gamma.norm(),
                gradient_norm: gnorm,
            });
        }
        if it == MAX_ITER {
            break;
        }
        let step = solve_symmetric(&(-&ev.hessian), &ev.gradient).ok_or(Error::Singular("propensity information"))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &gamma + &step * scale;
            let next = evaluate(&z, &arms, j, &cand);
            if next.value.is_finite() && next.value >= ev.value {
                gamma = cand;
                ev = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            converged = ev.gradient.norm() <= 1e-6 * nf;
            break;
        }
    }
    for l in 0..j - 1 {
        let b = &mut gamma.as_mut_slice()[l * q..(l + 1) * q];
        for c in 1..q {
            b[c] /= spread[c];
            b[0] -= b[c] * center[c];
        }
    }
    let ev = evaluate(&x, &arms, j, &gamma);
    if !converged {
        return Err(Error::NoConvergence {
            model: "propensity model",
            iterations,
            gradient_norm: ev.gradient.norm(),
        });
    }

    let mut scores = DMatrix::zeros(n, j);
    let mut contributions = DMatrix::zeros(n, (j - 1) * q);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().cloned().collect();
        let e = scores_for(&row, gamma.as_slice(), j);
        for l in 0..j {
            scores[(i, l)] = e[l];
        }
        for l in 1..j {
            let r = (arms[i] == l) as u8 as f64 - e[l];
            for c in 0..q {
                contributions[(i, (l - 1) * q + c)] = r * row[c];
            }
        }
    }
    let information = match information_kind {
        InformationKind::Hessian => -&ev.hessian / nf,
        InformationKind::OuterProduct => contributions.transpose() * &contributions / nf,
    };
    let gamma = DMatrix::from_row_slice(j - 1, q, gamma.as_slice());
    Ok(PropensityFit {
        gamma,
        scores,
        score_contributions: contributions,
        information,
        information_kind,
        converged,
        iterations,
        log_likelihood: ev.value,
        design,
        x,
    })
}

impl PropensityFit {
    pub fn n_treatments(&self) -> usize {
        self.scores.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.gamma.len()
    }

    /// Flattened coefficients, group-major.
    pub fn gamma_flat(&self) -> Vec<f64> {
        let (r, c) = self.gamma.shape();
        (0..r).flat_map(|l| (0..c).map(move |k| (l, k))).map(|(l, k)| self.gamma[(l, k)]).collect()
    }

    pub fn score(&self, i: usize) -> Vec<f64> {
        self.scores.row(i).iter().cloned().collect()
    }

    /// `J x dim(γ)` matrix whose row `j` is `∂e_j(X_i)/∂γ`.
    pub fn gradients(&self, i: usize) -> DMatrix<f64> {
        let j = self.n_treatments();
        let q = self.x.ncols();
        let mut out = DMatrix::zeros(j, (j - 1) * q);
        for a in 0..j {
            let ea = self.scores[(i, a)];
            for l in 1..j {
                let w = ea * ((a == l) as u8 as f64 - self.scores[(i, l)]);
                for c in 0..q {
                    out[(a, (l - 1) * q + c)] = w * self.x[(i, c)];
                }
            }
        }
        out
    }

    /// Scores for new covariate rows under the fitted coefficients.
    pub fn predict(&self, covariates: &[f64]) -> Vec<f64> {
        scores_for(&self.design.row(covariates), &self.gamma_flat(), self.n_treatments())
    }

    pub fn information_inverse(&self) -> Result<DMatrix<f64>> {
        inverse_spd(&self.information).ok_or(Error::Singular("propensity information"))
    }
}

pub fn propensity_gradients(fit: &PropensityFit, i: usize) -> DMatrix<f64> {
    fit.gradients(i)
}

/// Units dropped by [`trim`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimLog {
    pub lo: f64,
    pub hi: f64,
    pub removed: Vec<String>,
    pub kept: usize,
}

/// Drops units with `max_j e_j > hi` or `min_j e_j < lo`. The caller refits
/// the propensity model on the result.
pub fn trim(data: &Dataset, fit: &PropensityFit, lo: f64, hi: f64) -> Result<(Dataset, TrimLog)> {
    if !(0.0..1.0).contains(&lo) || !(lo < hi && hi <= 1.0) {
        return Err(Error::Invalid(format!("trimming thresholds must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")));
    }
    let mut keep = Vec::new();
    let mut removed = Vec::new();
    for i in 0..data.len() {
        let row = fit.scores.row(i);
        if row.max() > hi || row.min() < lo {
            removed.push(data.units()[i].id.clone());
        } else {
            keep.push(i);
        }
    }
    let trimmed = data.select(&keep)?;
    if let Some(g) = trimmed.group_sizes().iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(g + 1));
    }
    if !removed.is_empty() {
        log::info!("trimming removed {} of {} units", removed.len(), data.len());
    }
    let kept = keep.len();
    Ok((trimmed, TrimLog { lo, hi, removed, kept }))
}
