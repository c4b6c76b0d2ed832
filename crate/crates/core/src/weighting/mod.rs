//! Balancing weights `w_j = h(X)/e_j(X)` and Hájek contrasts of weighted
//! group means.

mod outcome;

pub use outcome::{augmented_contrast, fit_outcome_model, outcome_design, Link, OutcomeModelFit};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TransformKind;
use crate::error::{Error, Result};
use crate::propensity::PropensityFit;

/// Tilting function choice. Treatment labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    /// `h ≡ 1`.
    Ipw,
    /// `h = (Σ_l 1/e_l)^-1`.
    Overlap,
    /// `h = e_l`.
    Treated { group: usize },
    /// IPW after dropping units outside `[lo, hi]` and refitting.
    TrimmedIpw { lo: f64, hi: f64 },
}

impl SchemeKind {
    pub fn label(&self) -> String {
        match self {
            SchemeKind::Ipw => "IPW".into(),
            SchemeKind::Overlap => "OW".into(),
            SchemeKind::Treated { group } => format!("ATT{group}"),
            SchemeKind::TrimmedIpw { lo, hi } => format!("IPW-trim({lo},{hi})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub kind: SchemeKind,
    pub h_values: Vec<f64>,
    /// `N x J`.
    pub weights: DMatrix<f64>,
}

impl WeightScheme {
    /// Weight of unit `i` in its own arm.
    pub fn own(&self, i: usize, arm: usize) -> f64 {
        self.weights[(i, arm)]
    }

    pub fn h_total(&self) -> f64 {
        self.h_values.iter().sum()
    }
}

fn tilt(kind: SchemeKind, e: &[f64]) -> f64 {
    match kind {
        SchemeKind::Ipw | SchemeKind::TrimmedIpw { .. } => 1.0,
        SchemeKind::Overlap => 1.0 / e.iter().map(|v| 1.0 / v).sum::<f64>(),
        SchemeKind::Treated { group } => e[group - 1],
    }
}

/// Weights from an `N x J` score matrix.
pub fn scheme_from_scores(scores: &DMatrix<f64>, kind: SchemeKind) -> Result<WeightScheme> {
    let (n, j) = scores.shape();
    if let SchemeKind::Treated { group } = kind {
        if group == 0 || group > j {
            return Err(Error::Invalid(format!("treated group {group} outside 1..={j}")));
        }
    }
    let mut h_values = Vec::with_capacity(n);
    let mut weights = DMatrix::zeros(n, j);
    for i in 0..n {
        let e: Vec<f64> = scores.row(i).iter().cloned().collect();
        let h = tilt(kind, &e);
        h_values.push(h);
        for a in 0..j {
            weights[(i, a)] = h / e[a];
        }
    }
    Ok(WeightScheme {
        kind,
        h_values,
        weights,
    })
}

pub fn make_scheme(fit: &PropensityFit, kind: SchemeKind) -> Result<WeightScheme> {
    scheme_from_scores(&fit.scores, kind)
}

/// `J x dim(γ)` matrix whose row `j` is `∂w_j(X_i)/∂γ`, by the chain rule
/// through `h` and `e_j`.
pub fn weight_gradient(fit: &PropensityFit, kind: SchemeKind, i: usize) -> DMatrix<f64> {
    let de = fit.gradients(i);
    let e = fit.score(i);
    let (j, d) = de.shape();
    let mut out = DMatrix::zeros(j, d);
    match kind {
        SchemeKind::Ipw | SchemeKind::TrimmedIpw { .. } => {
            for a in 0..j {
                let f = -1.0 / (e[a] * e[a]);
                for c in 0..d {
                    out[(a, c)] = f * de[(a, c)];
                }
            }
        }
        SchemeKind::Overlap => {
            let h = tilt(kind, &e);
            for c in 0..d {
                let dh = h * h * (0..j).map(|l| de[(l, c)] / (e[l] * e[l])).sum::<f64>();
                for a in 0..j {
                    out[(a, c)] = dh / e[a] - h * de[(a, c)] / (e[a] * e[a]);
                }
            }
        }
        SchemeKind::Treated { group } => {
            let l = group - 1;
            for a in 0..j {
                for c in 0..d {
                    out[(a, c)] = de[(l, c)] / e[a] - e[l] * de[(a, c)] / (e[a] * e[a]);
                }
            }
        }
    }
    out
}

/// Hájek weighted mean of `values` within each arm.
pub fn group_means(values: &[f64], scheme: &WeightScheme, arms: &[usize]) -> Result<Vec<f64>> {
    let j = scheme.weights.ncols();
    let mut num = vec![0.0; j];
    let mut den = vec![0.0; j];
    for (i, (&v, &a)) in values.iter().zip(arms).enumerate() {
        let w = scheme.weights[(i, a)];
        num[a] += w * v;
        den[a] += w;
    }
    (0..j)
        .map(|a| {
            if den[a] > 0.0 {
                Ok(num[a] / den[a])
            } else {
                Err(Error::ZeroWeight(a + 1))
            }
        })
        .collect()
}

/// `m_j - m_j'` from Hájek group means; `pair` is 1-based.
pub fn hajek_contrast(values: &[f64], scheme: &WeightScheme, arms: &[usize], pair: (usize, usize)) -> Result<f64> {
    let means = group_means(values, scheme, arms)?;
    let (a, b) = check_pair(pair, means.len())?;
    Ok(means[a] - means[b])
}

pub(crate) fn check_pair(pair: (usize, usize), j: usize) -> Result<(usize, usize)> {
    let (a, b) = pair;
    if a == 0 || b == 0 || a > j || b > j || a == b {
        return Err(Error::Invalid(format!("invalid treatment pair ({a}, {b}) for {j} groups")));
    }
    Ok((a - 1, b - 1))
}

/// All pairs `(j, j')` with `j < j'`, 1-based.
pub fn all_pairs(j: usize) -> Vec<(usize, usize)> {
    (1..=j).flat_map(|a| (a + 1..=j).map(move |b| (a, b))).collect()
}

/// A pairwise causal contrast with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub pair: (usize, usize),
    pub kind: TransformKind,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_95: (f64, f64),
    pub target: SchemeKind,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub influence: Vec<f64>,
}

impl ContrastEstimate {
    pub fn new(pair: (usize, usize), kind: TransformKind, target: SchemeKind, estimate: f64, std_error: f64) -> Self {
        Self {
            pair,
            kind,
            estimate,
            std_error,
            ci_95: (estimate - 1.96 * std_error, estimate + 1.96 * std_error),
            target,
            influence: Vec::new(),
        }
    }
}
