//! The weighting pipeline on one dataset: propensity fit, pseudo-observation
//! columns at each horizon, Hájek contrasts and their closed-form variance.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Transform};
use crate::error::{Error, Result};
use crate::inference::{contrast_variance, group_influences, GroupInfluence, KmInfluence, VarianceReport};
use crate::propensity::{fit_with_design, trim, Design, DesignSpec, InformationKind, PropensityFit, TrimLog};
use crate::pseudo::{ipcw_values, jackknife_values};
use crate::survival::{CensoringModel, CensoringSpec};
use crate::weighting::{group_means, make_scheme, SchemeKind, WeightScheme};

/// Pseudo-observation construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoChoice {
    /// Leave-one-out Kaplan–Meier; for independent censoring.
    Jackknife,
    /// Inverse probability of censoring weighted; for covariate-dependent
    /// censoring.
    Ipcw,
}

/// A transformation and its evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub transform: Transform,
    pub t: f64,
}

/// Options shared by every [`Prepared`] built in a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOptions {
    pub design: DesignSpec,
    pub information: InformationKind,
    pub censoring: CensoringSpec,
}

/// Fitted propensity model and pseudo-observations on one dataset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub fit: PropensityFit,
    pub horizons: Vec<Horizon>,
    /// `columns[h][i]`: pseudo-observation of unit `i` at horizon `h`.
    pub columns: Vec<Vec<f64>>,
    pub pseudo: PseudoChoice,
    pub influence: Option<KmInfluence>,
    pub arms: Vec<usize>,
}

/// Pseudo-observation columns for the given horizons.
pub fn pseudo_columns(
    data: &Dataset,
    horizons: &[Horizon],
    pseudo: PseudoChoice,
    censoring: CensoringSpec,
) -> Result<Vec<Vec<f64>>> {
    let times = data.times();
    let events = data.events();
    let model = match pseudo {
        PseudoChoice::Ipcw => Some(CensoringModel::fit(data, censoring)?),
        PseudoChoice::Jackknife => None,
    };
    let ids: Vec<String> = data.units().iter().map(|u| u.id.clone()).collect();
    horizons
        .iter()
        .map(|h| {
            let m = match &model {
                None => jackknife_values(&times, &events, &[h.t], h.transform)?,
                Some(cm) => ipcw_values(&times, &events, &ids, &[h.t], h.transform, |i, u| cm.survival_left(data, i, u))?,
            };
            Ok(m.column(0).iter().cloned().collect())
        })
        .collect()
}

impl Prepared {
    pub fn new(data: Dataset, horizons: Vec<Horizon>, pseudo: PseudoChoice, options: &PipelineOptions) -> Result<Self> {
        let design = Design::build(&options.design, &data)?;
        let fit = fit_with_design(&data, design, options.information)?;
        let columns = pseudo_columns(&data, &horizons, pseudo, options.censoring)?;
        let influence = match pseudo {
            PseudoChoice::Jackknife => Some(KmInfluence::new(&data.times(), &data.events())?),
            PseudoChoice::Ipcw => None,
        };
        let arms = data.arms();
        Ok(Self {
            data,
            fit,
            horizons,
            columns,
            pseudo,
            influence,
            arms,
        })
    }

    /// Refits everything on the units whose fitted scores lie in `[lo, hi]`.
    pub fn trimmed(&self, lo: f64, hi: f64, options: &PipelineOptions) -> Result<(Self, TrimLog)> {
        let (data, log) = trim(&self.data, &self.fit, lo, hi)?;
        let prepared = Self::new(data, self.horizons.clone(), self.pseudo, options)?;
        Ok((prepared, log))
    }

    pub fn scheme(&self, kind: SchemeKind) -> Result<WeightScheme> {
        make_scheme(&self.fit, kind)
    }

    /// Hájek group means at horizon `h`.
    pub fn means(&self, scheme: &WeightScheme, h: usize) -> Result<Vec<f64>> {
        group_means(&self.columns[h], scheme, &self.arms)
    }

    /// Per-arm influence for the closed-form variance at horizon `h`.
    pub fn group_influences(&self, scheme: &WeightScheme, h: usize) -> Result<Vec<GroupInfluence>> {
        let inf = self.influence.as_ref().ok_or_else(|| {
            Error::Unsupported("closed-form variance needs jackknife pseudo-observations; use the bootstrap".into())
        })?;
        let hz = self.horizons[h];
        group_influences(inf, &self.columns[h], &self.arms, &self.fit, scheme, hz.transform, hz.t)
    }

    /// Point estimate and closed-form variance for one pair at horizon `h`.
    pub fn contrast(&self, scheme: &WeightScheme, h: usize, pair: (usize, usize)) -> Result<(f64, VarianceReport)> {
        let groups = self.group_influences(scheme, h)?;
        let report = contrast_variance(&groups, pair)?;
        Ok((groups[pair.0 - 1].mean - groups[pair.1 - 1].mean, report))
    }
}
