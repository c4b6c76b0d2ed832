//! Replication harness for the simulation study: scenario configuration,
//! per-replicate estimation, truth, and bias/RMSE/coverage summaries.

mod estimators;
mod generate;
mod truth;

pub use estimators::{analyze_replicate, Cell};
pub use crate::analysis::PseudoChoice;
pub use generate::{
    gen_censoring, gen_covariates, gen_dataset, gen_outcome, gen_treatment, lognormal_time, weibull_time, Censoring,
    Covariates, OutcomeModel, Overlap, SimParameters,
};
pub use truth::{
    conditional_mean, true_estimand, true_estimands, Estimand, EstimandKind, Target, TruthEstimate, TruthRequest,
};

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::replicate_rng;
use crate::weighting::check_pair;

/// Estimators compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Ow,
    Ipw,
    TrimmedIpw { lo: f64, hi: f64 },
    AugmentedOw,
    AugmentedIpw,
    CoxGFormula,
    IpwCox,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Ow => "OW",
            Method::Ipw => "IPW",
            Method::TrimmedIpw { .. } => "IPW-trim",
            Method::AugmentedOw => "AOW",
            Method::AugmentedIpw => "AIPW",
            Method::CoxGFormula => "Cox",
            Method::IpwCox => "IPW-Cox",
        }
    }

    pub fn target(&self) -> Target {
        match *self {
            Method::Ow | Method::AugmentedOw => Target::Overlap,
            Method::TrimmedIpw { lo, hi } => Target::Trimmed { lo, hi },
            _ => Target::Combined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub outcome_model: OutcomeModel,
    pub censoring: Censoring,
    pub overlap: Overlap,
    pub estimands: Vec<Estimand>,
    pub methods: Vec<Method>,
    /// 1-based `(j, j')`; effects are `m_j - m_j'`.
    pub pairs: Vec<(usize, usize)>,
    pub replicates: usize,
    pub seed: u64,
    pub parameters: SimParameters,
    pub truth_draws: usize,
    pub bootstrap_replicates: usize,
    /// Skip all standard errors (and coverage) when false.
    pub standard_errors: bool,
    /// Overrides the pseudo-observation construction implied by `censoring`.
    pub pseudo: Option<PseudoChoice>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 300,
            outcome_model: OutcomeModel::WeibullPh,
            censoring: Censoring::Independent,
            overlap: Overlap::Good,
            estimands: vec![
                Estimand {
                    kind: EstimandKind::Spce,
                    t: 60.0,
                },
                Estimand {
                    kind: EstimandKind::Race,
                    t: 60.0,
                },
                Estimand {
                    kind: EstimandKind::Asce,
                    t: 60.0,
                },
            ],
            methods: vec![Method::Ow, Method::Ipw],
            pairs: vec![(2, 3)],
            replicates: 1000,
            seed: 1,
            parameters: SimParameters::default(),
            truth_draws: 1_000_000,
            bootstrap_replicates: 100,
            standard_errors: true,
            pseudo: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Invalid("replicates must be positive".into()));
        }
        if self.n < 30 {
            return Err(Error::Invalid(format!("sample size {} is too small (minimum 30)", self.n)));
        }
        if self.estimands.is_empty() || self.methods.is_empty() || self.pairs.is_empty() {
            return Err(Error::Invalid("estimands, methods and pairs must be nonempty".into()));
        }
        for p in &self.pairs {
            check_pair(*p, 3)?;
        }
        for e in &self.estimands {
            if e.kind != EstimandKind::Asce && !(e.t > 0.0 && e.t.is_finite()) {
                return Err(Error::Invalid(format!("estimand horizon {} must be positive", e.t)));
            }
        }
        for m in &self.methods {
            if let Method::TrimmedIpw { lo, hi } = m {
                if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                    return Err(Error::Invalid(format!("trimming thresholds ({lo}, {hi}) invalid")));
                }
            }
        }
        Ok(())
    }

    pub fn scenario_label(&self) -> String {
        let model = match self.outcome_model {
            OutcomeModel::WeibullPh => "A",
            OutcomeModel::LogNormalAft => "B",
        };
        let cens = match self.censoring {
            Censoring::Independent => "independent",
            Censoring::CovariateDependent => "dependent",
            Censoring::None => "uncensored",
        };
        let overlap = match self.overlap {
            Overlap::Good => "good",
            Overlap::Poor => "poor",
        };
        format!("{model}-{cens}-{overlap}")
    }

    fn cells(&self) -> usize {
        self.methods.len() * self.estimands.len() * self.pairs.len()
    }

    fn cell_index(&self, m: usize, e: usize, p: usize) -> usize {
        (m * self.estimands.len() + e) * self.pairs.len() + p
    }
}

/// Parses `table1-<A|B>-<independent|dependent>[-<good|poor>]` into the
/// scenario configs it names (both overlaps when unspecified).
pub fn named_scenarios(name: &str, base: &SimulationConfig) -> Result<Vec<SimulationConfig>> {
    let parts: Vec<&str> = name.split('-').collect();
    let bad = || Error::Invalid(format!("unknown scenario `{name}`; expected table1-<A|B>-<independent|dependent>[-<good|poor>]"));
    if parts.len() < 3 || parts.len() > 4 || parts[0] != "table1" {
        return Err(bad());
    }
    let model = match parts[1] {
        "A" | "a" => OutcomeModel::WeibullPh,
        "B" | "b" => OutcomeModel::LogNormalAft,
        _ => return Err(bad()),
    };
    let censoring = match parts[2] {
        "independent" => Censoring::Independent,
        "dependent" => Censoring::CovariateDependent,
        _ => return Err(bad()),
    };
    let overlaps = match parts.get(3) {
        None => vec![Overlap::Good, Overlap::Poor],
        Some(&"good") => vec![Overlap::Good],
        Some(&"poor") => vec![Overlap::Poor],
        Some(_) => return Err(bad()),
    };
    Ok(overlaps
        .into_iter()
        .map(|overlap| SimulationConfig {
            outcome_model: model,
            censoring,
            overlap,
            ..base.clone()
        })
        .collect())
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    pub n: usize,
    pub estimand: String,
    pub pair: String,
    pub method: String,
    pub truth: f64,
    pub truth_gap: f64,
    pub abs_bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub mc_sd: f64,
    pub mean_se: Option<f64>,
    pub failures: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub rows: Vec<MetricRow>,
    /// Per replicate, per cell: estimate and standard error.
    #[serde(skip)]
    pub replicate_cells: Vec<Vec<Cell>>,
}

impl SimulationResult {
    pub fn row(&self, method: &str, estimand: &str, pair: (usize, usize)) -> Option<&MetricRow> {
        let pair = format!("{}v{}", pair.0, pair.1);
        self.rows
            .iter()
            .find(|r| r.method == method && r.estimand == estimand && r.pair == pair)
    }
}

/// Generates one replicate dataset from its stream.
pub fn replicate_dataset(config: &SimulationConfig, r: usize) -> Result<(crate::data::Dataset, u64)> {
    let mut rng = replicate_rng(config.seed, r as u64);
    let data = gen_dataset(
        config.n,
        config.outcome_model,
        config.censoring,
        config.overlap,
        &config.parameters,
        &mut rng,
    )?;
    Ok((data, rng.random()))
}

/// Runs every replicate and summarizes against Monte Carlo truths.
pub fn run_study(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    log::info!("scenario {} (N = {}, {} replicates)", config.scenario_label(), config.n, config.replicates);
    let cells = config.cells();
    let replicate_cells: Vec<Vec<Cell>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| match replicate_dataset(config, r) {
            Ok((data, boot_seed)) => analyze_replicate(config, &data, boot_seed),
            Err(e) => vec![Cell::failed(&e); cells],
        })
        .collect();

    let mut requests = Vec::new();
    for m in &config.methods {
        for e in &config.estimands {
            for &pair in &config.pairs {
                let estimand = match e.kind {
                    EstimandKind::Asce => Estimand {
                        kind: e.kind,
                        t: f64::INFINITY,
                    },
                    _ => *e,
                };
                requests.push(TruthRequest {
                    estimand,
                    target: m.target(),
                    pair,
                });
            }
        }
    }
    let truths = true_estimands(
        &config.parameters,
        config.outcome_model,
        config.overlap,
        &requests,
        config.truth_draws,
        config.seed,
    );
    for (req, t) in requests.iter().zip(&truths) {
        if t.gap >= 1e-4 {
            log::debug!(
                "truth for {} / {:?}: doubling draws moved the value by {:.2e}",
                req.estimand.label(),
                req.target,
                t.gap
            );
        }
    }

    let mut rows = Vec::with_capacity(cells);
    for (mi, m) in config.methods.iter().enumerate() {
        for (ei, e) in config.estimands.iter().enumerate() {
            for (pi, &pair) in config.pairs.iter().enumerate() {
                let idx = config.cell_index(mi, ei, pi);
                let truth = truths[idx];
                rows.push(summarize(config, m, e, pair, truth, replicate_cells.iter().map(|c| &c[idx])));
            }
        }
    }
    Ok(SimulationResult {
        config: config.clone(),
        rows,
        replicate_cells,
    })
}

fn summarize<'a>(
    config: &SimulationConfig,
    method: &Method,
    estimand: &Estimand,
    pair: (usize, usize),
    truth: TruthEstimate,
    cells: impl Iterator<Item = &'a Cell>,
) -> MetricRow {
    let mut est = Vec::new();
    let mut se = Vec::new();
    let mut failures = 0;
    for c in cells {
        match c.estimate {
            Some(v) => {
                est.push(v);
                if let Some(s) = c.std_error {
                    se.push((v, s));
                }
            }
            None => failures += 1,
        }
    }
    let k = est.len() as f64;
    let mean = est.iter().sum::<f64>() / k;
    let mse = est.iter().map(|v| (v - truth.value).powi(2)).sum::<f64>() / k;
    let mc_sd = if est.len() > 1 {
        (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let (coverage, mean_se) = if se.is_empty() {
        (None, None)
    } else {
        let s = se.len() as f64;
        let covered = se.iter().filter(|(v, s)| (v - truth.value).abs() <= 1.96 * s).count() as f64;
        (Some(covered / s), Some(se.iter().map(|(_, s)| s).sum::<f64>() / s))
    };
    MetricRow {
        scenario: config.scenario_label(),
        n: config.n,
        estimand: estimand.label(),
        pair: format!("{}v{}", pair.0, pair.1),
        method: method.label().to_string(),
        truth: truth.value,
        truth_gap: truth.gap,
        abs_bias: (mean - truth.value).abs(),
        rmse: mse.sqrt(),
        coverage,
        mc_sd,
        mean_se,
        failures,
        successes: est.len(),
    }
}

/// Flat CSV, one row per scenario/estimand/pair/method.
pub fn write_table_csv(results: &[SimulationResult], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        for row in &r.rows {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(results: &[SimulationResult], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, results)?;
    Ok(())
}
