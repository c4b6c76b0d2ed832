//! Feature expansion for the propensity model: raw columns, pairwise
//! products, and natural cubic splines.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Spline term: `knots` knots (boundary included) at equally spaced
/// quantiles of the column, giving `knots - 1` basis columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub column: String,
    #[serde(default = "default_knots")]
    pub knots: usize,
}

fn default_knots() -> usize {
    4
}

/// Which columns enter the design. `raw = None` means every covariate that is
/// not expanded by a spline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub raw: Option<Vec<String>>,
    pub interactions: Vec<(String, String)>,
    pub splines: Vec<SplineTerm>,
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Raw(usize),
    Product(usize, usize),
    Spline {
        column: usize,
        lo: f64,
        span: f64,
        knots: Vec<f64>,
    },
}

/// A design resolved against a dataset. Spline scaling and knots are frozen
/// so the same expansion applies to other samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    terms: Vec<Term>,
    names: Vec<String>,
}

fn column_index(data: &Dataset, name: &str) -> Result<usize> {
    data.covariate_names()
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cube_plus(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

/// Natural cubic spline basis in truncated-power form: `x` followed by
/// `d_k(x) - d_{K-1}(x)` for `k = 1..K-2`.
fn natural_spline(x: f64, knots: &[f64], out: &mut Vec<f64>) {
    let last = knots.len() - 1;
    let d = |k: usize| (cube_plus(x - knots[k]) - cube_plus(x - knots[last])) / (knots[last] - knots[k]);
    out.push(x);
    let tail = d(last - 1);
    for k in 0..last - 1 {
        out.push(d(k) - tail);
    }
}

impl Design {
    pub fn build(spec: &DesignSpec, data: &Dataset) -> Result<Self> {
        let mut terms = Vec::new();
        let mut names = vec!["(intercept)".to_string()];
        let splined: Vec<usize> = spec
            .splines
            .iter()
            .map(|s| column_index(data, &s.column))
            .collect::<Result<_>>()?;
        let raw: Vec<usize> = match &spec.raw {
            Some(cols) => cols.iter().map(|c| column_index(data, c)).collect::<Result<_>>()?,
            None => (0..data.n_covariates()).filter(|c| !splined.contains(c)).collect(),
        };
        let cov = data.covariate_names();
        for c in raw {
            terms.push(Term::Raw(c));
            names.push(cov[c].clone());
        }
        for (a, b) in &spec.interactions {
            let (ia, ib) = (column_index(data, a)?, column_index(data, b)?);
            terms.push(Term::Product(ia, ib));
            names.push(format!("{a}:{b}"));
        }
        for (s, &c) in spec.splines.iter().zip(&splined) {
            if s.knots < 3 {
                return Err(Error::Invalid(format!("spline on {} needs at least 3 knots", s.column)));
            }
            let mut v: Vec<f64> = data.units().iter().map(|u| u.covariates[c]).collect();
            v.sort_by(f64::total_cmp);
            let (lo, hi) = (v[0], v[v.len() - 1]);
            if hi <= lo {
                return Err(Error::Invalid(format!("spline column {} is constant", s.column)));
            }
            let span = hi - lo;
            let mut knots: Vec<f64> = (0..s.knots)
                .map(|k| (quantile(&v, k as f64 / (s.knots - 1) as f64) - lo) / span)
                .collect();
            knots.dedup();
            if knots.len() < 3 {
                return Err(Error::Invalid(format!(
                    "spline column {} has too few distinct quantile knots",
                    s.column
                )));
            }
            for k in 0..knots.len() - 1 {
                names.push(format!("ns({},{})", s.column, k + 1));
            }
            terms.push(Term::Spline {
                column: c,
                lo,
                span,
                knots,
            });
        }
        Ok(Self { terms, names })
    }

    /// Raw covariates plus intercept.
    pub fn raw(data: &Dataset) -> Self {
        Self::build(&DesignSpec::default(), data).expect("raw design always resolves")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    /// Expanded row including the leading intercept.
    pub fn row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.names.len());
        out.push(1.0);
        for term in &self.terms {
            match term {
                Term::Raw(c) => out.push(x[*c]),
                Term::Product(a, b) => out.push(x[*a] * x[*b]),
                Term::Spline { column, lo, span, knots } => natural_spline((x[*column] - lo) / span, knots, &mut out),
            }
        }
        out
    }

    pub fn matrix(&self, data: &Dataset) -> DMatrix<f64> {
        let q = self.ncols();
        let mut m = DMatrix::zeros(data.len(), q);
        for (i, u) in data.units().iter().enumerate() {
            for (c, v) in self.row(&u.covariates).into_iter().enumerate() {
                m[(i, c)] = v;
            }
        }
        m
    }
}
