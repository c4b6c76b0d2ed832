//! Per-group outcome regressions of pseudo-observations and the augmented
//! weighting estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_pair, WeightScheme};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, rank, solve_symmetric};

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
const SSE_TOL: f64 = 1e-8;

/// Mean function `m = g^-1(x'α)`. `Cloglog` models the survival scale,
/// `m = exp(-exp(x'α))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Identity,
    Log,
    Cloglog,
}

impl Link {
    /// `(μ, dμ/dη, d²μ/dη²)`.
    fn mean(self, eta: f64) -> (f64, f64, f64) {
        match self {
            Link::Identity => (eta, 1.0, 0.0),
            Link::Log => {
                let m = eta.exp();
                (m, m, m)
            }
            Link::Cloglog => {
                // exponents combined so saturation gives zeros, not inf * 0
                let u = eta.exp();
                let d1 = (eta - u).exp();
                ((-u).exp(), -d1, (2.0 * eta - u).exp() - d1)
            }
        }
    }

    fn start(self, mean: f64) -> f64 {
        match self {
            Link::Identity => mean,
            Link::Log => mean.max(1e-3).ln(),
            Link::Cloglog => (-mean.clamp(0.01, 0.99).ln()).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModelFit {
    pub link: Link,
    /// `alpha[j]` for arm `j` (0-based).
    pub alpha: Vec<Vec<f64>>,
    /// `N x J` fitted `m_j(X_i)` for every unit and arm.
    pub fitted: DMatrix<f64>,
}

/// Intercept followed by the raw covariates.
pub fn outcome_design(data: &Dataset) -> DMatrix<f64> {
    let p = data.n_covariates();
    DMatrix::from_fn(data.len(), p + 1, |i, c| if c == 0 { 1.0 } else { data.units()[i].covariates[c - 1] })
}

struct Gee {
    sse: f64,
    /// `Σ D_i (θ_i - μ_i)`.
    score: DVector<f64>,
    /// Hessian of the half squared error.
    hessian: DMatrix<f64>,
    gauss_newton: DMatrix<f64>,
}

fn gee(link: Link, x: &DMatrix<f64>, rows: &[usize], y: &[f64], alpha: &DVector<f64>) -> Gee {
    let q = x.ncols();
    let mut g = Gee {
        sse: 0.0,
        score: DVector::zeros(q),
        hessian: DMatrix::zeros(q, q),
        gauss_newton: DMatrix::zeros(q, q),
    };
    for &i in rows {
        let xi = x.row(i).transpose();
        let (m, d1, d2) = link.mean(xi.dot(alpha));
        let r = y[i] - m;
        g.sse += 0.5 * r * r;
        g.score.axpy(d1 * r, &xi, 1.0);
        let outer = &xi * xi.transpose();
        g.gauss_newton += &outer * (d1 * d1);
        g.hessian += outer * (d1 * d1 - d2 * r);
    }
    g
}

fn fit_group(link: Link, x: &DMatrix<f64>, rows: &[usize], y: &[f64]) -> Result<DVector<f64>> {
    let q = x.ncols();
    let nj = rows.len() as f64;
    let mut alpha = DVector::zeros(q);
    alpha[0] = link.start(rows.iter().map(|&i| y[i]).sum::<f64>() / nj);
    let mut cur = gee(link, x, rows, y, &alpha);
    let tol = 1e-8 * nj;
    for it in 0..=MAX_ITER {
        if cur.score.norm() <= tol {
            return Ok(alpha);
        }
        if it == MAX_ITER {
            break;
        }
        let h = if is_positive_definite(&cur.hessian) {
            &cur.hessian
        } else {
            &cur.gauss_newton
        };
        let step = match solve_symmetric(h, &cur.score) {
            Some(s) => s,
            // the design has full rank, so a singular curvature means every
            // fitted mean has saturated
            None if it > 0 => {
                log::debug!("outcome model: curvature vanished at iteration {it}");
                return Ok(alpha);
            }
            None => return Err(Error::Singular("outcome model")),
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &alpha + &step * scale;
            let next = gee(link, x, rows, y, &cand);
            if next.sse.is_finite() && next.sse <= cur.sse {
                // relative-deviance stop; also ends fits drifting toward
                // fitted means of 0 or 1, where no finite minimizer exists
                let settled = (cur.sse - next.sse) / (next.sse + 0.1) < SSE_TOL;
                alpha = cand;
                cur = next;
                if settled {
                    return Ok(alpha);
                }
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // no decrease along a descent direction at any step length: the
            // criterion is flat to machine precision
            log::debug!("outcome model: line search stalled at iteration {it}, gradient norm {:.2e}", cur.score.norm());
            return Ok(alpha);
        }
    }
    if cur.score.norm() <= 1e-6 * nj {
        return Ok(alpha);
    }
    Err(Error::NoConvergence {
        model: "outcome model",
        iterations: MAX_ITER,
        gradient_norm: cur.score.norm(),
    })
}

/// Fits `m_j(X; α_j)` to the pseudo-observations `values` separately in
/// each arm, solving `Σ_{Z_i = j} D_i (θ_i - m_j(X_i)) = 0`.
pub fn fit_outcome_model(values: &[f64], arms: &[usize], x: &DMatrix<f64>, n_treatments: usize, link: Link) -> Result<OutcomeModelFit> {
    let (n, q) = x.shape();
    if values.len() != n || arms.len() != n {
        return Err(Error::Invalid("outcome model inputs differ in length".into()));
    }
    let mut alpha = Vec::with_capacity(n_treatments);
    let mut fitted = DMatrix::zeros(n, n_treatments);
    for j in 0..n_treatments {
        let rows: Vec<usize> = (0..n).filter(|&i| arms[i] == j).collect();
        if rows.len() <= q {
            return Err(Error::Invalid(format!(
                "outcome model for group {} needs more than {q} units, has {}",
                j + 1,
                rows.len()
            )));
        }
        let sub = x.select_rows(&rows);
        if rank(&sub) < q {
            return Err(Error::Singular("outcome model design"));
        }
        let a = fit_group(link, x, &rows, values)?;
        for i in 0..n {
            fitted[(i, j)] = link.mean(x.row(i).transpose().dot(&a)).0;
        }
        alpha.push(a.iter().cloned().collect());
    }
    Ok(OutcomeModelFit { link, alpha, fitted })
}

/// `Σ h (m_j - m_j') / Σ h` plus the Hájek-weighted residual means of each
/// arm: the doubly robust form when the scheme is IPW.
pub fn augmented_contrast(
    values: &[f64],
    arms: &[usize],
    scheme: &WeightScheme,
    om: &OutcomeModelFit,
    pair: (usize, usize),
) -> Result<f64> {
    let (a, b) = check_pair(pair, scheme.weights.ncols())?;
    let n = values.len();
    let h_total = scheme.h_total();
    let model_part: f64 = (0..n)
        .map(|i| scheme.h_values[i] * (om.fitted[(i, a)] - om.fitted[(i, b)]))
        .sum::<f64>()
        / h_total;
    let residual = |g: usize| -> Result<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in (0..n).filter(|&i| arms[i] == g) {
            let w = scheme.weights[(i, g)];
            num += w * (values[i] - om.fitted[(i, g)]);
            den += w;
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Error::ZeroWeight(g + 1))
        }
    };
    Ok(model_part + residual(a)? - residual(b)?)
}
