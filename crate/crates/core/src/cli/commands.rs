use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{parse_grid, ResolvedEstimand, RunConfig, VarianceMethod};
use crate::analysis::{Horizon, PipelineOptions, Prepared, PseudoChoice};
use crate::balance::{balance_table, design_balance, write_tables_csv, BalanceTable};
use crate::data::{fmt12, load_csv, Dataset, Transform};
use crate::error::{Error, Result};
use crate::inference::{bootstrap, contrast_variance};
use crate::propensity::{fit_with_design, Design, TrimLog};
use crate::pseudo::{pseudo_ipcw, pseudo_km_rmst, pseudo_km_survival};
use crate::sim::{run_study, named_scenarios, write_json, write_table_csv, SimulationConfig, SimulationResult};
use crate::survival::CensoringModel;
use crate::weighting::{all_pairs, check_pair, make_scheme, SchemeKind};

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct CommandError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for CommandError {}

impl CommandError {
    /// 3 for numerical failures, 2 for configuration or data errors.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_numerical() {
            3
        } else {
            2
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, CommandError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|error| CommandError { stage, error })
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json_to(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Loaded input with its provenance.
pub struct Input {
    pub data: Dataset,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn load_input(config: &RunConfig) -> CmdResult<Input> {
    let path = config.input_path().stage("config")?.to_path_buf();
    let bytes = std::fs::read(&path).map_err(Error::from).stage("data")?;
    let data = load_csv(&path, &config.schema).stage("data")?;
    Ok(Input {
        data,
        path,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn pairs(config: &RunConfig, j: usize) -> CmdResult<Vec<(usize, usize)>> {
    match &config.pairs {
        None => Ok(all_pairs(j)),
        Some(p) => {
            for &pair in p {
                check_pair(pair, j).stage("config")?;
            }
            Ok(p.clone())
        }
    }
}

/// The prepared sample a scheme is evaluated on (trimmed and refitted for
/// trimmed IPW).
fn prepare_for(base: &Prepared, kind: SchemeKind, options: &PipelineOptions) -> Result<(Prepared, Option<TrimLog>)> {
    match kind {
        SchemeKind::TrimmedIpw { lo, hi } => {
            let (p, log) = base.trimmed(lo, hi, options)?;
            Ok((p, Some(log)))
        }
        _ => Ok((base.clone(), None)),
    }
}

/// Bootstrap of `stat(prepared sample)` with the scheme's trimming redone in
/// every replicate.
fn bootstrap_scheme(
    data: &Dataset,
    horizons: &[Horizon],
    pseudo: PseudoChoice,
    options: &PipelineOptions,
    kind: SchemeKind,
    replicates: usize,
    seed: u64,
    stat: impl Fn(&Prepared) -> Result<Vec<f64>> + Sync,
) -> Result<crate::inference::BootstrapResult> {
    bootstrap(data, replicates, seed, |sample| {
        let base = Prepared::new(sample.clone(), horizons.to_vec(), pseudo, options)?;
        let (p, _) = prepare_for(&base, kind, options)?;
        stat(&p)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastRow {
    pub scheme: String,
    pub estimand: String,
    pub transform: Transform,
    pub t: f64,
    pub pair: (usize, usize),
    pub labels: (String, String),
    pub estimate: f64,
    pub se_full: f64,
    pub se_no_q: Option<f64>,
    pub se_fixed_gamma: Option<f64>,
    pub ci_95: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeReport {
    pub scheme: String,
    pub group_sizes: Vec<usize>,
    pub trim: Option<TrimLog>,
    pub bootstrap_failures: Option<usize>,
    pub contrasts: Vec<ContrastRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropensitySummary {
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub min_score: f64,
    pub max_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub input: PathBuf,
    pub input_sha256: String,
    pub n: usize,
    pub treatments: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub pseudo: PseudoChoice,
    pub propensity: PropensitySummary,
    pub schemes: Vec<SchemeReport>,
    pub config: RunConfig,
}

pub fn estimate(config: RunConfig) -> CmdResult<EstimateReport> {
    let config = config.resolve().stage("config")?;
    let input = load_input(&config)?;
    let data = &input.data;
    let pairs = pairs(&config, data.n_treatments())?;
    let estimands = config.estimands_for(data).stage("config")?;
    let horizons: Vec<Horizon> = estimands.iter().map(|e| e.horizon).collect();
    let options = config.options();
    let pseudo = config.pseudo();
    let base = Prepared::new(data.clone(), horizons.clone(), pseudo, &options).stage("propensity/pseudo-observations")?;
    let labels = data.label_map().to_vec();
    let variance = config.variance.expect("resolved");

    let mut schemes = Vec::new();
    for &kind in &config.schemes {
        let (prep, trim) = prepare_for(&base, kind, &options).stage("trimming")?;
        let scheme = prep.scheme(kind).stage("weighting")?;
        let mut rows = Vec::new();
        let mut failures = None;
        let make_row = |e: &ResolvedEstimand, pair: (usize, usize), est: f64, se: f64, no_q, fixed| ContrastRow {
            scheme: kind.label(),
            estimand: e.label.clone(),
            transform: e.horizon.transform,
            t: e.horizon.t,
            pair,
            labels: (labels[pair.0 - 1].clone(), labels[pair.1 - 1].clone()),
            estimate: est,
            se_full: se,
            se_no_q: no_q,
            se_fixed_gamma: fixed,
            ci_95: (est - 1.96 * se, est + 1.96 * se),
        };
        match variance {
            VarianceMethod::ClosedForm => {
                for (h, e) in estimands.iter().enumerate() {
                    let groups = prep.group_influences(&scheme, h).stage("variance")?;
                    for &pair in &pairs {
                        let v = contrast_variance(&groups, pair).stage("variance")?;
                        let est = groups[pair.0 - 1].mean - groups[pair.1 - 1].mean;
                        let c = v.components;
                        rows.push(make_row(e, pair, est, c.full, Some(c.no_q), Some(c.fixed_gamma)));
                    }
                }
            }
            VarianceMethod::Bootstrap { replicates } => {
                let point = |p: &Prepared| -> Result<Vec<f64>> {
                    let s = p.scheme(kind)?;
                    let mut out = Vec::new();
                    for h in 0..horizons.len() {
                        let m = p.means(&s, h)?;
                        out.extend(pairs.iter().map(|&(a, b)| m[a - 1] - m[b - 1]));
                    }
                    Ok(out)
                };
                let est = point(&prep).stage("weighting")?;
                let boot = bootstrap_scheme(data, &horizons, pseudo, &options, kind, replicates, config.seed, point)
                    .stage("bootstrap")?;
                let mut k = 0;
                for e in &estimands {
                    for &pair in &pairs {
                        rows.push(make_row(e, pair, est[k], boot.std_errors[k], None, None));
                        k += 1;
                    }
                }
                failures = Some(boot.failures);
            }
        }
        schemes.push(SchemeReport {
            scheme: kind.label(),
            group_sizes: prep.data.group_sizes(),
            trim,
            bootstrap_failures: failures,
            contrasts: rows,
        });
    }

    let scores = &base.fit.scores;
    Ok(EstimateReport {
        input: input.path.clone(),
        input_sha256: input.sha256.clone(),
        n: data.len(),
        treatments: labels.clone(),
        group_sizes: data.group_sizes(),
        pseudo,
        propensity: PropensitySummary {
            converged: base.fit.converged,
            iterations: base.fit.iterations,
            log_likelihood: base.fit.log_likelihood,
            min_score: scores.min(),
            max_score: scores.max(),
        },
        schemes,
        config,
    })
}

pub fn run_estimate(config: RunConfig) -> CmdResult<()> {
    let out = config.output.clone();
    let report = estimate(config)?;
    write_json_to(out.as_deref(), &report).stage("output")
}

/// One point of a causal survival curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub scheme: String,
    pub group: usize,
    pub label: String,
    pub time: f64,
    pub survival: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn curves(config: RunConfig) -> CmdResult<Vec<CurvePoint>> {
    let config = config.resolve().stage("config")?;
    let input = load_input(&config)?;
    let data = &input.data;
    let grid = parse_grid(&config.grid).stage("config")?;
    if let Some(&t) = grid.iter().find(|&&t| t > data.max_time()) {
        return Err(Error::Invalid(format!("grid time {t} exceeds the last observed time {}", data.max_time())))
            .stage("config");
    }
    let horizons: Vec<Horizon> = grid
        .iter()
        .map(|&t| Horizon {
            transform: Transform::Survival,
            t,
        })
        .collect();
    let options = config.options();
    let pseudo = config.pseudo();
    let base = Prepared::new(data.clone(), horizons.clone(), pseudo, &options).stage("propensity/pseudo-observations")?;
    let labels = data.label_map();
    let j = data.n_treatments();

    let mut out = Vec::new();
    for &kind in &config.schemes {
        let (prep, _) = prepare_for(&base, kind, &options).stage("trimming")?;
        let scheme = prep.scheme(kind).stage("weighting")?;
        // (mean, se) indexed [h][group]
        let table: Vec<Vec<(f64, f64)>> = match config.variance.expect("resolved") {
            VarianceMethod::ClosedForm => (0..grid.len())
                .map(|h| {
                    let groups = prep.group_influences(&scheme, h)?;
                    Ok(groups.iter().map(|g| (g.mean, g.std_error())).collect())
                })
                .collect::<Result<_>>()
                .stage("variance")?,
            VarianceMethod::Bootstrap { replicates } => {
                let stat = |p: &Prepared| -> Result<Vec<f64>> {
                    let s = p.scheme(kind)?;
                    let mut v = Vec::with_capacity(grid.len() * j);
                    for h in 0..grid.len() {
                        v.extend(p.means(&s, h)?);
                    }
                    Ok(v)
                };
                let est = stat(&prep).stage("weighting")?;
                let boot = bootstrap_scheme(data, &horizons, pseudo, &options, kind, replicates, config.seed, stat)
                    .stage("bootstrap")?;
                (0..grid.len())
                    .map(|h| (0..j).map(|g| (est[h * j + g], boot.std_errors[h * j + g])).collect())
                    .collect()
            }
        };
        for g in 0..j {
            for (h, &t) in grid.iter().enumerate() {
                let (m, se) = table[h][g];
                out.push(CurvePoint {
                    scheme: kind.label(),
                    group: g + 1,
                    label: labels[g].clone(),
                    time: t,
                    survival: m,
                    std_error: se,
                    lower: m - 1.96 * se,
                    upper: m + 1.96 * se,
                });
            }
        }
    }
    Ok(out)
}

pub fn run_curves(config: RunConfig) -> CmdResult<()> {
    let out = config.output.clone();
    let points = curves(config)?;
    let write = || -> Result<()> {
        let mut w = csv::Writer::from_writer(output(out.as_deref())?);
        w.write_record(["scheme", "group", "label", "time", "survival", "std_error", "lower", "upper"])?;
        for p in &points {
            w.write_record([
                p.scheme.clone(),
                p.group.to_string(),
                p.label.clone(),
                p.time.to_string(),
                fmt12(p.survival),
                fmt12(p.std_error),
                fmt12(p.lower),
                fmt12(p.upper),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().stage("output")
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub input: PathBuf,
    pub input_sha256: String,
    pub threshold: f64,
    /// Whether every raw covariate is below the threshold, per weighting.
    pub passes: Vec<(String, bool)>,
    pub raw: BalanceTable,
    pub design: BalanceTable,
    pub config: RunConfig,
}

pub fn balance(config: RunConfig) -> CmdResult<BalanceReport> {
    let config = config.resolve().stage("config")?;
    let input = load_input(&config)?;
    let data = &input.data;
    let design = Design::build(&config.design, data).stage("propensity")?;
    let fit = fit_with_design(data, design, config.information).stage("propensity")?;
    let mut schemes = Vec::new();
    for &kind in &config.schemes {
        if let SchemeKind::TrimmedIpw { .. } = kind {
            log::warn!("balance: skipping {} (it changes the sample)", kind.label());
            continue;
        }
        schemes.push(make_scheme(&fit, kind).stage("weighting")?);
    }
    let refs: Vec<_> = schemes.iter().collect();
    let raw = balance_table(
        &data.covariate_matrix(),
        data.covariate_names().to_vec(),
        &data.arms(),
        data.n_treatments(),
        &refs,
        config.balance_threshold,
    )
    .stage("balance")?;
    let design = design_balance(data, &fit, &refs, config.balance_threshold).stage("balance")?;
    let passes = raw.all().map(|b| (b.label.clone(), raw.passes(&b.label).unwrap_or(false))).collect();
    Ok(BalanceReport {
        input: input.path.clone(),
        input_sha256: input.sha256.clone(),
        threshold: config.balance_threshold,
        passes,
        raw,
        design,
        config,
    })
}

/// Writes the long CSV to `config.output` (stdout when absent) and the full
/// report to `json` when given.
pub fn run_balance(config: RunConfig, json: Option<&Path>) -> CmdResult<()> {
    let out = config.output.clone();
    let report = balance(config)?;
    let tables = [("raw", &report.raw), ("design", &report.design)];
    match out {
        Some(p) => write_tables_csv(p, &tables).stage("output")?,
        None => {
            let tmp = |t: &BalanceTable, s: &str| -> Result<()> { t.write_csv_to(std::io::stdout().lock(), s) };
            tmp(&report.raw, "raw").stage("output")?;
            tmp(&report.design, "design").stage("output")?;
        }
    }
    if let Some(j) = json {
        write_json_to(Some(j), &report).stage("output")?;
    }
    Ok(())
}

/// Dumps pseudo-observations (`id,time,value`) on the configured grid.
pub fn run_pseudo(config: RunConfig, transform: Transform) -> CmdResult<()> {
    let config = config.resolve().stage("config")?;
    let input = load_input(&config)?;
    let data = &input.data;
    let grid = parse_grid(&config.grid).stage("config")?;
    let pm = match (config.pseudo(), transform) {
        (PseudoChoice::Jackknife, Transform::Survival) => pseudo_km_survival(data, &grid),
        (PseudoChoice::Jackknife, Transform::Restricted) => pseudo_km_rmst(data, &grid),
        (PseudoChoice::Ipcw, _) => {
            CensoringModel::fit(data, config.censoring_model).and_then(|m| pseudo_ipcw(data, &grid, transform, &m))
        }
    }
    .stage("pseudo-observations")?;
    output(config.output.as_deref())
        .and_then(|w| pm.write_csv_to(w))
        .stage("output")
}

/// Flags of the `simulate` command.
#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub scenario: String,
    pub config: Option<PathBuf>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub truth_draws: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

pub fn simulate(args: &SimulateArgs) -> CmdResult<Vec<SimulationResult>> {
    let mut base = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(Error::from).stage("config")?;
            serde_json::from_str::<SimulationConfig>(&text).map_err(Error::from).stage("config")?
        }
        None => SimulationConfig::default(),
    };
    if let Some(n) = args.n {
        base.n = n;
    }
    if let Some(r) = args.reps {
        base.replicates = r;
    }
    if let Some(s) = args.seed {
        base.seed = s;
    }
    if let Some(d) = args.truth_draws {
        base.truth_draws = d;
    }
    let scenarios = named_scenarios(&args.scenario, &base).stage("config")?;
    for s in &scenarios {
        s.validate().stage("config")?;
    }
    let mut results = Vec::new();
    for s in &scenarios {
        eprintln!("simulating {} (N = {}, {} replicates)", s.scenario_label(), s.n, s.replicates);
        results.push(run_study(s).stage("simulation")?);
    }
    Ok(results)
}

pub fn run_simulate(args: &SimulateArgs) -> CmdResult<()> {
    let results = simulate(args)?;
    let dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(Error::from).stage("output")?;
    let stem = format!("{}-n{}-seed{}", args.scenario, results[0].config.n, results[0].config.seed);
    write_table_csv(&results, dir.join(format!("{stem}.csv"))).stage("output")?;
    write_json(&results, dir.join(format!("{stem}.json"))).stage("output")?;
    let table = dir.join(format!("{stem}.csv"));
    eprintln!("wrote {}", table.display());
    Ok(())
}
