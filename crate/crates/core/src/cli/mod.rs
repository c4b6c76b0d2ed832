//! Command implementations behind the `pseudoweight` binary.

mod commands;
mod config;

pub use commands::{
    balance, curves, estimate, load_input, run_balance, run_curves, run_estimate, run_pseudo, run_simulate, simulate,
    BalanceReport, CmdResult, CommandError, ContrastRow, CurvePoint, EstimateReport, Input, PropensitySummary,
    SchemeReport, SimulateArgs,
};
pub use config::{parse_grid, CensoringAssumption, EstimandSpec, ResolvedEstimand, RunConfig, VarianceMethod};
