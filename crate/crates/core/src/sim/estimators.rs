//! Per-replicate estimation for every configured method.

use nalgebra::DMatrix;

use super::{EstimandKind, Method, SimulationConfig};
use crate::analysis::{Horizon, PipelineOptions, Prepared};
use crate::data::{Dataset, Transform};
use crate::error::{Error, Result};
use crate::inference::{bootstrap, contrast_variance};
use crate::survival::{cox_fit, cox_fit_weighted, CoxFit};
use crate::weighting::{augmented_contrast, fit_outcome_model, outcome_design, Link, SchemeKind};

pub use crate::analysis::PseudoChoice;

/// Outcome of one method/estimand/pair in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub error: Option<String>,
}

impl Cell {
    pub fn failed(e: &Error) -> Self {
        Self {
            estimate: None,
            std_error: None,
            error: Some(e.to_string()),
        }
    }

    fn ok(estimate: f64, std_error: Option<f64>) -> Self {
        Self {
            estimate: Some(estimate),
            std_error,
            error: None,
        }
    }
}

fn horizons(config: &SimulationConfig, data: &Dataset) -> Vec<Horizon> {
    config
        .estimands
        .iter()
        .map(|e| match e.kind {
            EstimandKind::Spce => Horizon {
                transform: Transform::Survival,
                t: e.t,
            },
            EstimandKind::Race => Horizon {
                transform: Transform::Restricted,
                t: e.t,
            },
            EstimandKind::Asce => Horizon {
                transform: Transform::Restricted,
                t: data.max_time(),
            },
        })
        .collect()
}

fn pseudo_choice(config: &SimulationConfig) -> PseudoChoice {
    config.pseudo.unwrap_or(match config.censoring {
        super::Censoring::CovariateDependent => PseudoChoice::Ipcw,
        _ => PseudoChoice::Jackknife,
    })
}

fn has_closed_form(method: &Method, pseudo: PseudoChoice) -> bool {
    pseudo == PseudoChoice::Jackknife && matches!(method, Method::Ow | Method::Ipw | Method::TrimmedIpw { .. })
}

/// Evaluates `value(lp)` at every horizon from a Cox fit.
fn cox_value(fit: &CoxFit, h: &Horizon, lp: f64) -> f64 {
    match h.transform {
        Transform::Survival => (-fit.cum_baseline_left(h.t) * lp.exp()).exp(),
        Transform::Restricted => fit.restricted_mean(h.t, lp),
    }
}

fn arm_indicators(data: &Dataset, i: usize) -> impl Iterator<Item = f64> + '_ {
    let z = data.units()[i].treatment;
    (2..=data.n_treatments()).map(move |j| (z == j) as u8 as f64)
}

fn cox_gformula(prep: &Prepared, config: &SimulationConfig) -> Result<Vec<f64>> {
    let d = &prep.data;
    let p = d.n_covariates();
    let j = d.n_treatments();
    let rows: Vec<Vec<f64>> = (0..d.len())
        .map(|i| d.units()[i].covariates.iter().cloned().chain(arm_indicators(d, i)).collect())
        .collect();
    let x = DMatrix::from_fn(d.len(), p + j - 1, |i, c| rows[i][c]);
    let fit = cox_fit(&d.times(), &d.events(), &x)?;
    let beta = &fit.coefficients;
    let base: Vec<f64> = d
        .units()
        .iter()
        .map(|u| u.covariates.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let mut out = Vec::new();
    for h in &prep.horizons {
        let means: Vec<f64> = (0..j)
            .map(|a| {
                let shift = if a == 0 { 0.0 } else { beta[p + a - 1] };
                base.iter().map(|&lp| cox_value(&fit, h, lp + shift)).sum::<f64>() / d.len() as f64
            })
            .collect();
        for &(a, b) in &config.pairs {
            out.push(means[a - 1] - means[b - 1]);
        }
    }
    Ok(out)
}

fn ipw_cox(prep: &Prepared, config: &SimulationConfig) -> Result<Vec<f64>> {
    let d = &prep.data;
    let j = d.n_treatments();
    let scheme = prep.scheme(SchemeKind::Ipw)?;
    let weights: Vec<f64> = (0..d.len()).map(|i| scheme.own(i, prep.arms[i])).collect();
    let rows: Vec<Vec<f64>> = (0..d.len()).map(|i| arm_indicators(d, i).collect()).collect();
    let x = DMatrix::from_fn(d.len(), j - 1, |i, c| rows[i][c]);
    let fit = cox_fit_weighted(&d.times(), &d.events(), &x, Some(&weights))?;
    let mut out = Vec::new();
    for h in &prep.horizons {
        let means: Vec<f64> = (0..j)
            .map(|a| cox_value(&fit, h, if a == 0 { 0.0 } else { fit.coefficients[a - 1] }))
            .collect();
        for &(a, b) in &config.pairs {
            out.push(means[a - 1] - means[b - 1]);
        }
    }
    Ok(out)
}

fn augmented(prep: &Prepared, config: &SimulationConfig, kind: SchemeKind) -> Result<Vec<f64>> {
    let scheme = prep.scheme(kind)?;
    let x = outcome_design(&prep.data);
    let mut out = Vec::new();
    for (h, hz) in prep.horizons.iter().enumerate() {
        let link = match hz.transform {
            Transform::Survival => Link::Cloglog,
            Transform::Restricted => Link::Identity,
        };
        let om = fit_outcome_model(&prep.columns[h], &prep.arms, &x, prep.data.n_treatments(), link)?;
        for &pair in &config.pairs {
            out.push(augmented_contrast(&prep.columns[h], &prep.arms, &scheme, &om, pair)?);
        }
    }
    Ok(out)
}

/// Point estimates, with closed-form standard errors where available.
fn evaluate(
    method: &Method,
    prep: &Prepared,
    config: &SimulationConfig,
    options: &PipelineOptions,
    with_se: bool,
) -> Result<Vec<(f64, Option<f64>)>> {
    let hajek = |p: &Prepared, kind: SchemeKind| -> Result<Vec<(f64, Option<f64>)>> {
        let scheme = p.scheme(kind)?;
        let closed = with_se && has_closed_form(method, p.pseudo);
        let mut out = Vec::new();
        for h in 0..p.horizons.len() {
            if closed {
                let groups = p.group_influences(&scheme, h)?;
                for &pair in &config.pairs {
                    let v = contrast_variance(&groups, pair)?;
                    out.push((groups[pair.0 - 1].mean - groups[pair.1 - 1].mean, Some(v.std_error)));
                }
            } else {
                let means = p.means(&scheme, h)?;
                for &(a, b) in &config.pairs {
                    out.push((means[a - 1] - means[b - 1], None));
                }
            }
        }
        Ok(out)
    };
    let plain = |v: Vec<f64>| v.into_iter().map(|x| (x, None)).collect();
    match *method {
        Method::Ow => hajek(prep, SchemeKind::Overlap),
        Method::Ipw => hajek(prep, SchemeKind::Ipw),
        Method::TrimmedIpw { lo, hi } => hajek(&prep.trimmed(lo, hi, options)?.0, SchemeKind::Ipw),
        Method::AugmentedOw => augmented(prep, config, SchemeKind::Overlap).map(plain),
        Method::AugmentedIpw => augmented(prep, config, SchemeKind::Ipw).map(plain),
        Method::CoxGFormula => cox_gformula(prep, config).map(plain),
        Method::IpwCox => ipw_cox(prep, config).map(plain),
    }
}

/// All cells of one replicate, ordered method-major then estimand then pair.
pub fn analyze_replicate(config: &SimulationConfig, data: &Dataset, boot_seed: u64) -> Vec<Cell> {
    let per_method = config.estimands.len() * config.pairs.len();
    let pseudo = pseudo_choice(config);
    let options = PipelineOptions::default();
    let prep = match Prepared::new(data.clone(), horizons(config, data), pseudo, &options) {
        Ok(p) => p,
        Err(e) => return vec![Cell::failed(&e); per_method * config.methods.len()],
    };
    let mut cells = Vec::with_capacity(per_method * config.methods.len());
    let mut needs_boot = Vec::new();
    for (mi, m) in config.methods.iter().enumerate() {
        match evaluate(m, &prep, config, &options, config.standard_errors) {
            Ok(v) => {
                if config.standard_errors && !has_closed_form(m, pseudo) {
                    needs_boot.push(mi);
                }
                cells.extend(v.into_iter().map(|(e, s)| Cell::ok(e, s)));
            }
            Err(e) => cells.extend(std::iter::repeat_n(Cell::failed(&e), per_method)),
        }
    }
    if needs_boot.is_empty() {
        return cells;
    }
    let boot = bootstrap(data, config.bootstrap_replicates, boot_seed, |sample| {
        let p = Prepared::new(sample.clone(), horizons(config, sample), pseudo, &options)?;
        let mut out = Vec::new();
        for &mi in &needs_boot {
            out.extend(evaluate(&config.methods[mi], &p, config, &options, false)?.into_iter().map(|(e, _)| e));
        }
        Ok(out)
    });
    match boot {
        Ok(b) => {
            for (k, &mi) in needs_boot.iter().enumerate() {
                for c in 0..per_method {
                    cells[mi * per_method + c].std_error = Some(b.std_errors[k * per_method + c]);
                }
            }
        }
        Err(e) => {
            for &mi in &needs_boot {
                for c in 0..per_method {
                    cells[mi * per_method + c] = Cell::failed(&e);
                }
            }
        }
    }
    cells
}
