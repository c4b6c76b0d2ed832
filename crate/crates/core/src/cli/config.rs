//! Run configuration shared by the `estimate`, `curves`, `balance` and
//! `pseudo` commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{Horizon, PipelineOptions, PseudoChoice};
use crate::balance::DEFAULT_THRESHOLD;
use crate::data::{Dataset, Schema, Transform};
use crate::error::{Error, Result};
use crate::inference::MIN_REPLICATES;
use crate::propensity::{DesignSpec, InformationKind};
use crate::sim::EstimandKind;
use crate::survival::CensoringSpec;
use crate::weighting::SchemeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringAssumption {
    Independent,
    #[serde(alias = "dependent")]
    CovariateDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum VarianceMethod {
    ClosedForm,
    Bootstrap { replicates: usize },
}

/// An estimand kind at one or more horizons. ASCE ignores `times` and uses
/// the last observed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
}

fn default_times() -> Vec<f64> {
    vec![60.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub schema: Schema,
    pub design: DesignSpec,
    pub information: InformationKind,
    pub schemes: Vec<SchemeKind>,
    pub estimands: Vec<EstimandSpec>,
    /// 1-based pairs; all pairs when absent.
    pub pairs: Option<Vec<(usize, usize)>>,
    /// `start:stop:step` or a comma-separated list.
    pub grid: String,
    pub censoring: CensoringAssumption,
    pub censoring_model: CensoringSpec,
    /// Closed form for independent censoring, bootstrap otherwise.
    pub variance: Option<VarianceMethod>,
    pub seed: u64,
    pub balance_threshold: f64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: Schema::default(),
            design: DesignSpec::default(),
            information: InformationKind::default(),
            schemes: vec![SchemeKind::Overlap, SchemeKind::Ipw],
            estimands: vec![
                EstimandSpec {
                    kind: EstimandKind::Spce,
                    times: default_times(),
                },
                EstimandSpec {
                    kind: EstimandKind::Race,
                    times: default_times(),
                },
            ],
            pairs: None,
            grid: "0:110:0.5".into(),
            censoring: CensoringAssumption::Independent,
            censoring_model: CensoringSpec::default(),
            variance: None,
            seed: 1,
            balance_threshold: DEFAULT_THRESHOLD,
            output: None,
        }
    }
}

/// One requested estimand resolved against the data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedEstimand {
    pub label: String,
    pub horizon: Horizon,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn pseudo(&self) -> PseudoChoice {
        match self.censoring {
            CensoringAssumption::Independent => PseudoChoice::Jackknife,
            CensoringAssumption::CovariateDependent => PseudoChoice::Ipcw,
        }
    }

    /// Fills in the variance default and rejects combinations without a
    /// valid variance estimator.
    pub fn resolve(mut self) -> Result<Self> {
        let variance = match (self.censoring, self.variance) {
            (CensoringAssumption::CovariateDependent, Some(VarianceMethod::ClosedForm)) => {
                return Err(Error::Invalid(
                    "closed-form variance is unavailable with covariate-dependent censoring; use the bootstrap".into(),
                ))
            }
            (_, Some(v)) => v,
            (CensoringAssumption::Independent, None) => VarianceMethod::ClosedForm,
            (CensoringAssumption::CovariateDependent, None) => VarianceMethod::Bootstrap { replicates: 200 },
        };
        if let VarianceMethod::Bootstrap { replicates } = variance {
            if replicates < MIN_REPLICATES {
                return Err(Error::Invalid(format!("bootstrap needs at least {MIN_REPLICATES} replicates")));
            }
        }
        self.variance = Some(variance);
        if self.schemes.is_empty() || self.estimands.is_empty() {
            return Err(Error::Invalid("schemes and estimands must be nonempty".into()));
        }
        if !(self.balance_threshold > 0.0) {
            return Err(Error::Invalid("balance threshold must be positive".into()));
        }
        parse_grid(&self.grid)?;
        Ok(self)
    }

    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            design: self.design.clone(),
            information: self.information,
            censoring: self.censoring_model,
        }
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Invalid("no input file given (set `input` or pass --input)".into()))
    }

    pub fn estimands_for(&self, data: &Dataset) -> Result<Vec<ResolvedEstimand>> {
        let max = data.max_time();
        let mut out = Vec::new();
        for e in &self.estimands {
            if e.kind == EstimandKind::Asce {
                out.push(ResolvedEstimand {
                    label: "ASCE".into(),
                    horizon: Horizon {
                        transform: Transform::Restricted,
                        t: max,
                    },
                });
                continue;
            }
            if e.times.is_empty() {
                return Err(Error::Invalid(format!("{:?} needs at least one time", e.kind)));
            }
            for &t in &e.times {
                if !(t > 0.0 && t <= max) {
                    return Err(Error::Invalid(format!("estimand time {t} outside (0, {max}]")));
                }
                let (label, transform) = match e.kind {
                    EstimandKind::Spce => (format!("SPCE({t})"), Transform::Survival),
                    _ => (format!("RACE({t})"), Transform::Restricted),
                };
                out.push(ResolvedEstimand {
                    label,
                    horizon: Horizon { transform, t },
                });
            }
        }
        Ok(out)
    }
}

/// Parses `start:stop:step` (points `start + step, ..., stop`) or a
/// comma-separated list of positive times.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::Invalid(format!("grid `{spec}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let points: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0 && stop > start && start >= 0.0) {
            return Err(bad("need 0 <= start < stop and step > 0"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        (1..=count).map(|k| start + k as f64 * step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if points.is_empty() || points.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(bad("times must be positive and finite"));
    }
    Ok(points)
}
