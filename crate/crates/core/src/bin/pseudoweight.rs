use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pseudoweight::cli::{self, CensoringAssumption, CmdResult, RunConfig, SimulateArgs, VarianceMethod};
use pseudoweight::data::Transform;

#[derive(Parser)]
#[command(name = "pseudoweight", version, about = "Propensity score weighting for survival outcomes via pseudo-observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise weighted contrasts with standard errors (JSON).
    Estimate(Common),
    /// Weighted causal survival curves over the grid (CSV).
    Curves(Common),
    /// Covariate balance before and after weighting (CSV, optional JSON).
    Balance {
        #[command(flatten)]
        common: Common,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Pseudo-observations on the grid (CSV: id,time,value).
    Pseudo {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "survival")]
        transform: TransformArg,
    },
    /// Replicate a simulation scenario, e.g. table1-A-independent.
    Simulate {
        #[arg(long)]
        scenario: String,
        /// Base simulation config (JSON); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        truth_draws: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time grid, `start:stop:step` or a comma list.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum)]
    censoring: Option<CensoringArg>,
    /// Use the bootstrap with this many replicates.
    #[arg(long)]
    bootstrap: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CensoringArg {
    Independent,
    Dependent,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    Survival,
    Restricted,
}

fn resolve(c: Common) -> CmdResult<RunConfig> {
    let mut config = match &c.config {
        Some(p) => RunConfig::from_file(p).map_err(|error| cli::CommandError { stage: "config", error })?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.input {
        config.input = Some(v);
    }
    if let Some(v) = c.out {
        config.output = Some(v);
    }
    if let Some(v) = c.seed {
        config.seed = v;
    }
    if let Some(v) = c.grid {
        config.grid = v;
    }
    if let Some(v) = c.censoring {
        config.censoring = match v {
            CensoringArg::Independent => CensoringAssumption::Independent,
            CensoringArg::Dependent => CensoringAssumption::CovariateDependent,
        };
    }
    if let Some(replicates) = c.bootstrap {
        config.variance = Some(VarianceMethod::Bootstrap { replicates });
    }
    Ok(config)
}

fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Estimate(c) => cli::run_estimate(resolve(c)?),
        Command::Curves(c) => cli::run_curves(resolve(c)?),
        Command::Balance { common, json } => cli::run_balance(resolve(common)?, json.as_deref()),
        Command::Pseudo { common, transform } => {
            let t = match transform {
                TransformArg::Survival => Transform::Survival,
                TransformArg::Restricted => Transform::Restricted,
            };
            cli::run_pseudo(resolve(common)?, t)
        }
        Command::Simulate {
            scenario,
            config,
            n,
            reps,
            seed,
            truth_draws,
            out,
        } => cli::run_simulate(&SimulateArgs {
            scenario,
            config,
            n,
            reps,
            seed,
            truth_draws,
            out_dir: out,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
