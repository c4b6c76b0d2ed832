//! Closed-form variance of Hájek contrasts of jackknife pseudo-observations,
//! accounting for pseudo-observation estimation (`Q`) and propensity
//! estimation (the `γ` correction).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::influence::KmInfluence;
use crate::data::{Dataset, Transform};
use crate::error::{Error, Result};
use crate::propensity::PropensityFit;
use crate::pseudo::{PseudoMatrix, PseudoMethod};
use crate::weighting::{check_pair, group_means, weight_gradient, WeightScheme};

/// Standard errors under three levels of bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub full: f64,
    /// Pseudo-observations treated as observed outcomes.
    pub no_q: f64,
    /// Propensity scores treated as known.
    pub fixed_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub std_error: f64,
    pub components: VarianceComponents,
    /// Per-unit `Ψ_j - Ψ_j'` (full).
    pub psi: Vec<f64>,
}

/// Per-unit influence of one arm's Hájek mean.
#[derive(Debug, Clone)]
pub struct GroupInfluence {
    pub mean: f64,
    /// Weighted residual part `1{Z=j} w_j (θ + φ' - m_j)`.
    pub base: Vec<f64>,
    pub q: Vec<f64>,
    /// `G_j' I^-1 S_i`.
    pub correction: Vec<f64>,
    pub h_total: f64,
}

impl GroupInfluence {
    fn psi(&self, with_q: bool, with_gamma: bool) -> Vec<f64> {
        (0..self.base.len())
            .map(|i| {
                self.base[i] + if with_q { self.q[i] } else { 0.0 } + if with_gamma { self.correction[i] } else { 0.0 }
            })
            .collect()
    }

    /// Standard error of this arm's mean alone.
    pub fn std_error(&self) -> f64 {
        self.psi(true, true).iter().map(|v| v * v).sum::<f64>().sqrt() / self.h_total
    }
}

/// Influence of every arm's weighted mean at horizon `t`.
#[allow(clippy::too_many_arguments)]
pub fn group_influences(
    inf: &KmInfluence,
    values: &[f64],
    arms: &[usize],
    fit: &PropensityFit,
    scheme: &WeightScheme,
    transform: Transform,
    t: f64,
) -> Result<Vec<GroupInfluence>> {
    let n = values.len();
    let j = scheme.weights.ncols();
    let means = group_means(values, scheme, arms)?;
    let theta = inf.theta(transform, t);
    let phi = inf.first(transform, t);
    let inv_info = fit.information_inverse()?;
    let scores = &fit.score_contributions;
    let nf = n as f64;
    let dw: Vec<DMatrix<f64>> = (0..n).map(|i| weight_gradient(fit, scheme.kind, i)).collect();
    let h_total = scheme.h_total();
    let mut out = Vec::with_capacity(j);
    for (g, &mean) in means.iter().enumerate() {
        let c: Vec<f64> = (0..n).map(|i| if arms[i] == g { scheme.weights[(i, g)] } else { 0.0 }).collect();
        let resid: Vec<f64> = (0..n).map(|i| theta + phi[i] - mean).collect();
        let base: Vec<f64> = (0..n).map(|i| c[i] * resid[i]).collect();
        let q = inf.q_weighted(transform, t, &c);
        let mut grad = DVector::zeros(scores.ncols());
        for i in (0..n).filter(|&i| arms[i] == g) {
            grad += dw[i].row(g).transpose() * resid[i];
        }
        grad /= nf;
        let proj = &inv_info * grad;
        let correction: Vec<f64> = (0..n).map(|i| scores.row(i).dot(&proj.transpose())).collect();
        out.push(GroupInfluence {
            mean,
            base,
            q,
            correction,
            h_total,
        });
    }
    Ok(out)
}

/// `sqrt(Σ (Ψ_j - Ψ_j')²) / Σ h` and its two reduced variants.
pub fn contrast_variance(groups: &[GroupInfluence], pair: (usize, usize)) -> Result<VarianceReport> {
    let (a, b) = check_pair(pair, groups.len())?;
    let h = groups[a].h_total;
    let se = |q: bool, g: bool| -> (f64, Vec<f64>) {
        let pa = groups[a].psi(q, g);
        let pb = groups[b].psi(q, g);
        let d: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        (d.iter().map(|v| v * v).sum::<f64>().sqrt() / h, d)
    };
    let (full, psi) = se(true, true);
    let components = VarianceComponents {
        full,
        no_q: se(false, true).0,
        fixed_gamma: se(true, false).0,
    };
    Ok(VarianceReport {
        std_error: full,
        components,
        psi,
    })
}

/// Closed-form standard error of the Hájek contrast for `pair` at grid time
/// `t` of a jackknife pseudo-observation matrix.
pub fn closed_form_variance(
    pm: &PseudoMatrix,
    data: &Dataset,
    fit: &PropensityFit,
    scheme: &WeightScheme,
    pair: (usize, usize),
    t: f64,
) -> Result<VarianceReport> {
    if pm.method == PseudoMethod::Ipcw {
        return Err(Error::Unsupported(
            "closed-form variance needs jackknife pseudo-observations; use the bootstrap with IPCW".into(),
        ));
    }
    let values = pm.column(t)?;
    let inf = KmInfluence::new(&data.times(), &data.events())?;
    let groups = group_influences(&inf, &values, &data.arms(), fit, scheme, pm.transform, t)?;
    contrast_variance(&groups, pair)
}
