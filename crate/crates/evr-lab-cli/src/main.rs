//! `evr-lab`: plan, bound, allocate, and simulate portfolios of hypothesis
//! tests that share one dataset.
//!
//! Command groups: `evr` (bounds, thresholds, capacity, power,
//! certification, tail bounds), `alloc` (splits, seeded draws, overlap
//! accounting), `sim` (Monte Carlo error-count studies), and `report`
//! (tables and figure data). Every report is CSV by default (JSON via
//! `--format json`) and opens with a provenance header. Stochastic
//! commands require an explicit `--seed`; the `EVR_LAB_THREADS`
//! environment variable caps simulation workers without ever changing
//! numerical output.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use evr_lab::allocation::{
    egalitarian_draw, overlap_stats, parse_indices_text, split_uniform_styled, SplitStyle,
    SubsampleDraw,
};
use evr_lab::corr::CorrelationMatrix;
use evr_lab::planner::{
    capacity, certify_performant, evr_bound, expected_variance_bound, min_sample_size,
    optimize_rho0, power_two_sample, AllocationRule, DesignSpec, FractionSpec,
    PerformanceCriteria, Rho0Choice,
};
use evr_lab::report::{
    build_fwer_sd, build_subquadratic, build_table1, build_table2, format_sig, fwer_sd_csv,
    subquadratic_csv, table1_csv, table2_csv, to_json, Provenance, Table1Params, Table2Params,
};
use evr_lab::sim::{
    clt_joint_cov_check, control_group_portfolio, sur_portfolio, ErrorCountSummary,
    SimOptions, SimRule,
};
use evr_lab::tails::{tail_report, OverlapGeometry};
use evr_lab::Level;

#[derive(Parser)]
#[command(name = "evr-lab", version, about = "Error-count variance planning for shared-dataset test portfolios", max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    group: Group,
}

#[derive(Subcommand)]
enum Group {
    /// Variance and EVR bounds, threshold search, capacity, power, certification.
    #[command(subcommand)]
    Evr(EvrCmd),
    /// Data allocation: uniform splits, seeded subsample draws, overlap accounting.
    #[command(subcommand)]
    Alloc(AllocCmd),
    /// Monte Carlo error-count simulations.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Tables and figure data.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct OutputOpts {
    /// Output format.
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: OutputFormat,
    /// Write to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Significant digits for CSV numbers.
    #[arg(long, default_value_t = 6, global = true)]
    precision: usize,
}

#[derive(Args, Clone)]
struct RateArgs {
    /// Egalitarian fraction coefficient b in r(N) = b/sqrt(N).
    #[arg(long, conflicts_with = "rate")]
    b: Option<f64>,
    /// Fixed egalitarian subsample rate r in (0, 1].
    #[arg(long)]
    rate: Option<f64>,
}

impl RateArgs {
    fn fraction(&self) -> Result<FractionSpec, CliError> {
        match (self.b, self.rate) {
            (Some(b), None) => Ok(FractionSpec::Coefficient(b)),
            (None, Some(r)) => Ok(FractionSpec::FixedRate(r)),
            _ => Err(CliError::Validation(
                "exactly one of --b or --rate is required".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum EvrCmd {
    /// Expected-variance and EVR upper bounds for an egalitarian design.
    Bound {
        /// Dataset size N.
        #[arg(long = "N")]
        n_total: u64,
        /// Portfolio size C.
        #[arg(long = "C")]
        num_studies: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Association bound kappa in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Correlation threshold rho0 splitting tail from excess.
        #[arg(long)]
        rho0: f64,
        #[command(flatten)]
        rate: RateArgs,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Grid search for the rho0 minimizing the per-pair excess.
    OptimizeRho0 {
        /// Dataset size N.
        #[arg(long = "N")]
        n_total: u64,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Association bound kappa in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Grid step.
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
        #[command(flatten)]
        rate: RateArgs,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Largest portfolio with EVR at most 1 + delta.
    Capacity {
        /// Dataset size N.
        #[arg(long = "N")]
        n_total: u64,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// EVR excess tolerance delta.
        #[arg(long)]
        delta: f64,
        /// Association bound kappa in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Fix rho0 instead of grid-searching it.
        #[arg(long)]
        rho0: Option<f64>,
        /// Grid step when searching rho0.
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
        /// Per-study sample-size floor M (required for --splitting).
        #[arg(long)]
        min_per_study: Option<u64>,
        /// Plan a splitting design instead of an egalitarian one.
        #[arg(long, conflicts_with_all = ["b", "rate", "rho0"])]
        splitting: bool,
        #[command(flatten)]
        rate: RateArgs,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Power of a balanced two-sided two-sample contrast.
    Power {
        /// Effect size (Cohen's d).
        #[arg(long)]
        d: f64,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Observations per arm.
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Smallest per-arm sample size reaching a power target.
    SampleSize {
        /// Effect size (Cohen's d).
        #[arg(long)]
        d: f64,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Required power.
        #[arg(long)]
        target: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Certify a design against (rho0, beta0, gamma).
    Certify {
        /// Dataset size N.
        #[arg(long = "N")]
        n_total: u64,
        /// Portfolio size C.
        #[arg(long = "C")]
        num_studies: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Association bound kappa in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Correlation threshold rho0.
        #[arg(long)]
        rho0: f64,
        /// Type II tolerance beta0.
        #[arg(long)]
        beta0: f64,
        /// Expected budget of large-correlation pairs.
        #[arg(long)]
        gamma: f64,
        /// Effect size each study must detect.
        #[arg(long)]
        d: f64,
        /// Certify the splitting rule.
        #[arg(long, conflicts_with_all = ["b", "rate", "gluttony"])]
        splitting: bool,
        /// Certify the gluttony rule.
        #[arg(long, conflicts_with_all = ["b", "rate"])]
        gluttony: bool,
        #[command(flatten)]
        rate: RateArgs,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Exact hypergeometric overlap tail and its closed-form bounds.
    TailBounds {
        /// Population size N.
        #[arg(long = "N")]
        n_total: u64,
        /// Per-study subsample size n.
        #[arg(long)]
        n_sub: u64,
        /// Association bound kappa in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Correlation threshold rho0.
        #[arg(long)]
        rho0: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Gluttony,
    Splitting,
    Egalitarian,
}

#[derive(Args, Clone)]
struct SimRuleArgs {
    /// Rules to evaluate (repeatable; default: all three).
    #[arg(long = "rule", value_enum)]
    rules: Vec<RuleArg>,
    /// Egalitarian fraction coefficients (repeatable; default 10, 15, 20).
    #[arg(long = "b")]
    bs: Vec<f64>,
}

impl SimRuleArgs {
    fn build(&self, n_total: usize) -> Vec<SimRule> {
        let kinds: Vec<RuleArg> = if self.rules.is_empty() {
            vec![RuleArg::Gluttony, RuleArg::Splitting, RuleArg::Egalitarian]
        } else {
            self.rules.clone()
        };
        let bs: Vec<f64> = if self.bs.is_empty() { vec![10.0, 15.0, 20.0] } else { self.bs.clone() };
        let mut rules = Vec::new();
        for kind in kinds {
            match kind {
                RuleArg::Gluttony => rules.push(SimRule::gluttony()),
                RuleArg::Splitting => rules.push(SimRule::splitting()),
                RuleArg::Egalitarian => {
                    for &b in &bs {
                        rules.push(SimRule::egalitarian_b(b, n_total));
                    }
                }
            }
        }
        rules
    }
}

#[derive(Subcommand)]
enum SimCmd {
    /// Common control group with disjoint treatment pools.
    ControlGroup {
        /// Observations per arm N.
        #[arg(long = "N")]
        n_total: usize,
        /// Number of treatment contrasts C.
        #[arg(long = "C")]
        num_studies: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Replications B.
        #[arg(long, default_value_t = 5000)]
        reps: u32,
        /// Master seed (required: no silent entropy).
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        rules: SimRuleArgs,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Families of univariate regressions with correlated covariates.
    Sur {
        /// Rows per replication N.
        #[arg(long = "N")]
        n_total: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Replications B.
        #[arg(long, default_value_t = 5000)]
        reps: u32,
        /// Master seed (required: no silent entropy).
        #[arg(long)]
        seed: u64,
        /// Correlation matrix CSV for the responses.
        #[arg(long = "sigma-x")]
        sigma_x: PathBuf,
        /// Correlation matrix CSV for the regressors.
        #[arg(long = "sigma-y")]
        sigma_y: PathBuf,
        #[command(flatten)]
        rules: SimRuleArgs,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Joint-covariance check for standardized overlapping subset means.
    CltCheck {
        /// Population size N per replication.
        #[arg(long = "N")]
        n_total: usize,
        /// Subset size n (common to all subsets).
        #[arg(long)]
        n_sub: usize,
        /// Observations shared between consecutive subsets.
        #[arg(long)]
        shared: usize,
        /// Number of subsets.
        #[arg(long, default_value_t = 2)]
        num_subsets: usize,
        /// Replications B.
        #[arg(long, default_value_t = 100_000)]
        reps: u32,
        /// Master seed (required: no silent entropy).
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
}

#[derive(Subcommand)]
enum AllocCmd {
    /// Partition {0, …, N−1} into C disjoint blocks.
    Split {
        /// Population size N.
        #[arg(long = "N")]
        n_total: usize,
        /// Number of blocks C.
        #[arg(long = "C")]
        num_studies: usize,
        /// Block layout.
        #[arg(long, value_enum, default_value = "residue")]
        style: SplitStyleArg,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Seeded uniform without-replacement subsample.
    Draw {
        /// Population size N.
        #[arg(long = "N")]
        n_total: usize,
        /// Subsample size n.
        #[arg(long)]
        n_sub: usize,
        /// Master seed (required: no silent entropy).
        #[arg(long)]
        seed: u64,
        /// Study identifier mixed into the stream.
        #[arg(long, default_value_t = 0)]
        study: u64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Pairwise overlap fractions and correlation bounds of stored index sets.
    Overlap {
        /// Population size N.
        #[arg(long = "N")]
        n_total: usize,
        /// Index-set files (newline-delimited decimal or draw JSON).
        #[arg(long = "file", required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitStyleArg {
    Residue,
    Contiguous,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Planning table for the reused-control-group design.
    Table1 {
        /// Observations per arm N.
        #[arg(long = "N", default_value_t = 10_000)]
        n_total: u64,
        /// Portfolio size C.
        #[arg(long = "C", default_value_t = 10)]
        num_studies: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Effect size each study must detect.
        #[arg(long, default_value_t = 0.2)]
        d: f64,
        /// Required per-study power.
        #[arg(long, default_value_t = 0.99)]
        power_target: f64,
        /// EVR excess tolerance delta.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Association bound kappa.
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        /// rho0 grid step.
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Simulated error-count variance across the shipped correlation regimes.
    Table2 {
        /// Directory holding the regime fixtures.
        #[arg(long)]
        matrices: PathBuf,
        /// Replications per regime.
        #[arg(long, default_value_t = 5000)]
        reps: u32,
        /// Master seed (required: no silent entropy).
        #[arg(long)]
        seed: u64,
        /// Rows per replication N.
        #[arg(long = "N", default_value_t = 10_000)]
        n_total: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// FWER versus error-count standard deviation under equicorrelation.
    FigFwerSd {
        /// Portfolio size C.
        #[arg(long = "C", default_value_t = 10)]
        num_studies: usize,
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Grid points on [0, 1].
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Excess covariance R(rho, c) against its quadratic envelope.
    FigSubquadratic {
        /// Two-sided test level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Grid points on [0, 0.99].
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn command_line() -> String {
    let args: Vec<String> = std::env::args().skip(1).collect();
    format!("evr-lab {}", args.join(" "))
}

fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("EVR_LAB_THREADS") {
        Err(_) => Ok(None),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| CliError::Validation(format!("EVR_LAB_THREADS={raw:?} is not a positive integer")))?;
            if n == 0 {
                return Err(CliError::Validation("EVR_LAB_THREADS must be positive".into()));
            }
            Ok(Some(n))
        }
    }
}

fn level(alpha: f64) -> Result<Level, CliError> {
    Level::new(alpha).map_err(CliError::validation)
}

fn emit(output: &OutputOpts, text: String) -> Result<(), CliError> {
    match &output.out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text).map_err(CliError::runtime),
    }
}

/// Renders rows either as provenance-prefixed CSV or as a JSON document.
fn emit_rows<T: Serialize>(
    output: &OutputOpts,
    prov: &Provenance,
    header: &str,
    csv_rows: Vec<String>,
    rows: &[T],
) -> Result<(), CliError> {
    let text = match output.format {
        OutputFormat::Csv => {
            let mut text = prov.csv_comments();
            text.push_str(header);
            text.push('\n');
            for row in csv_rows {
                text.push_str(&row);
                text.push('\n');
            }
            text
        }
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(&to_json(rows, prov))
                .map_err(CliError::runtime)?;
            text.push('\n');
            text
        }
    };
    emit(output, text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.group {
        Group::Evr(cmd) => run_evr(cmd),
        Group::Alloc(cmd) => run_alloc(cmd),
        Group::Sim(cmd) => run_sim(cmd),
        Group::Report(cmd) => run_report(cmd),
    }
}

#[derive(Serialize)]
struct BoundRow {
    n_total: u64,
    num_studies: usize,
    rate: f64,
    n_sub: u64,
    kappa: f64,
    rho0: f64,
    pair_excess: f64,
    variance_bound: f64,
    evr_bound: f64,
}

#[derive(Serialize)]
struct CapacityRow {
    rule: String,
    n_total: u64,
    n_sub: Option<u64>,
    delta: f64,
    rho0: Option<f64>,
    epsilon: f64,
    max_studies: u64,
    binding: String,
}

fn run_evr(cmd: EvrCmd) -> Result<(), CliError> {
    match cmd {
        EvrCmd::Bound { n_total, num_studies, alpha, kappa, rho0, rate, output } => {
            let level = level(alpha)?;
            let spec = DesignSpec::new(
                n_total,
                num_studies,
                level,
                AllocationRule::Egalitarian(rate.fraction()?),
                kappa,
            )
            .map_err(CliError::validation)?;
            let crit = PerformanceCriteria::new(rho0, 0.01, 0.0).map_err(CliError::validation)?;
            let variance = expected_variance_bound(&spec, &crit).map_err(CliError::validation)?;
            let evr = evr_bound(&spec, &crit).map_err(CliError::validation)?;
            let excess = evr_lab::planner::pair_excess(&spec, rho0).map_err(CliError::validation)?;
            let row = BoundRow {
                n_total,
                num_studies,
                rate: spec.rate().unwrap_or(0.0),
                n_sub: spec.subsample_size().unwrap_or(0),
                kappa,
                rho0,
                pair_excess: excess,
                variance_bound: variance,
                evr_bound: evr,
            };
            let p = output.precision;
            let line = format!(
                "{},{},{},{},{},{},{},{},{}",
                row.n_total,
                row.num_studies,
                format_sig(row.rate, p),
                row.n_sub,
                format_sig(row.kappa, p),
                format_sig(row.rho0, p),
                format_sig(row.pair_excess, p),
                format_sig(row.variance_bound, p),
                format_sig(row.evr_bound, p)
            );
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "n_total,num_studies,rate,n_sub,kappa,rho0,pair_excess,variance_bound,evr_bound",
                vec![line],
                &[row],
            )
        }
        EvrCmd::OptimizeRho0 { n_total, alpha, kappa, grid_step, rate, output } => {
            let level = level(alpha)?;
            let spec = DesignSpec::new(
                n_total,
                2,
                level,
                AllocationRule::Egalitarian(rate.fraction()?),
                kappa,
            )
            .map_err(CliError::validation)?;
            let search = optimize_rho0(&spec, grid_step).map_err(CliError::validation)?;
            #[derive(Serialize)]
            struct Row {
                n_total: u64,
                rate: f64,
                kappa: f64,
                grid_step: f64,
                rho0: f64,
                epsilon: f64,
            }
            let row = Row {
                n_total,
                rate: spec.rate().unwrap_or(0.0),
                kappa,
                grid_step,
                rho0: search.rho0,
                epsilon: search.epsilon,
            };
            let p = output.precision;
            let line = format!(
                "{},{},{},{},{},{}",
                row.n_total,
                format_sig(row.rate, p),
                format_sig(row.kappa, p),
                format_sig(row.grid_step, p),
                format_sig(row.rho0, p),
                format_sig(row.epsilon, p)
            );
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "n_total,rate,kappa,grid_step,rho0,epsilon",
                vec![line],
                &[row],
            )
        }
        EvrCmd::Capacity {
            n_total,
            alpha,
            delta,
            kappa,
            rho0,
            grid_step,
            min_per_study,
            splitting,
            rate,
            output,
        } => {
            let level = level(alpha)?;
            let (spec, rho0_choice, floor) = if splitting {
                let m = min_per_study.ok_or_else(|| {
                    CliError::Validation("--splitting requires --min-per-study".into())
                })?;
                let spec = DesignSpec::new(n_total, 2, level, AllocationRule::Splitting, kappa)
                    .map_err(CliError::validation)?;
                (spec, Rho0Choice::Fixed(0.5), m)
            } else {
                let spec = DesignSpec::new(
                    n_total,
                    2,
                    level,
                    AllocationRule::Egalitarian(rate.fraction()?),
                    kappa,
                )
                .map_err(CliError::validation)?;
                let choice = match rho0 {
                    Some(r) => Rho0Choice::Fixed(r),
                    None => Rho0Choice::Optimized { grid_step },
                };
                (spec, choice, min_per_study.unwrap_or(2))
            };
            let result = capacity(&spec, delta, rho0_choice, floor).map_err(CliError::validation)?;
            let row = CapacityRow {
                rule: if splitting { "splitting".into() } else { "egalitarian".into() },
                n_total,
                n_sub: spec.subsample_size(),
                delta,
                rho0: result.rho0_used,
                epsilon: result.epsilon,
                max_studies: result.max_studies,
                binding: match result.binding {
                    evr_lab::planner::CapacityBinding::Evr => "evr".into(),
                    evr_lab::planner::CapacityBinding::SampleSize => "sample-size".into(),
                },
            };
            let p = output.precision;
            let line = format!(
                "{},{},{},{},{},{},{},{}",
                row.rule,
                row.n_total,
                row.n_sub.map(|v| v.to_string()).unwrap_or_default(),
                format_sig(row.delta, p),
                row.rho0.map(|v| format_sig(v, p)).unwrap_or_default(),
                format_sig(row.epsilon, p),
                row.max_studies,
                row.binding
            );
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "rule,n_total,n_sub,delta,rho0,epsilon,max_studies,binding",
                vec![line],
                &[row],
            )
        }
        EvrCmd::Power { d, alpha, n, output } => {
            let level = level(alpha)?;
            if d.is_nan() || d <= 0.0 {
                return Err(CliError::Validation(format!("effect size must be positive, got {d}")));
            }
            let power = power_two_sample(d, &level, n);
            #[derive(Serialize)]
            struct Row {
                effect_size: f64,
                alpha: f64,
                n_per_arm: u64,
                power: f64,
            }
            let row = Row { effect_size: d, alpha, n_per_arm: n, power };
            let p = output.precision;
            let line = format!(
                "{},{},{},{}",
                format_sig(d, p),
                format_sig(alpha, p),
                n,
                format_sig(power, p)
            );
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "effect_size,alpha,n_per_arm,power",
                vec![line],
                &[row],
            )
        }
        EvrCmd::SampleSize { d, alpha, target, output } => {
            let level = level(alpha)?;
            let n = min_sample_size(d, &level, target).map_err(CliError::validation)?;
            #[derive(Serialize)]
            struct Row {
                effect_size: f64,
                alpha: f64,
                power_target: f64,
                n_per_arm: u64,
                power_at_n: f64,
            }
            let row = Row {
                effect_size: d,
                alpha,
                power_target: target,
                n_per_arm: n,
                power_at_n: power_two_sample(d, &level, n),
            };
            let p = output.precision;
            let line = format!(
                "{},{},{},{},{}",
                format_sig(d, p),
                format_sig(alpha, p),
                format_sig(target, p),
                n,
                format_sig(row.power_at_n, p)
            );
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "effect_size,alpha,power_target,n_per_arm,power_at_n",
                vec![line],
                &[row],
            )
        }
        EvrCmd::Certify {
            n_total,
            num_studies,
            alpha,
            kappa,
            rho0,
            beta0,
            gamma,
            d,
            splitting,
            gluttony,
            rate,
            output,
        } => {
            let level = level(alpha)?;
            let rule = if splitting {
                AllocationRule::Splitting
            } else if gluttony {
                AllocationRule::Gluttony
            } else {
                AllocationRule::Egalitarian(rate.fraction()?)
            };
            let spec = DesignSpec::new(n_total, num_studies, level, rule, kappa)
                .map_err(CliError::validation)?;
            let crit = PerformanceCriteria::new(rho0, beta0, gamma).map_err(CliError::validation)?;
            let cert = certify_performant(&spec, &crit, d).map_err(CliError::validation)?;
            let p = output.precision;
            let line = format!(
                "{},{},{},{},{},{},{},{}",
                format_sig(cert.large_corr_pairs_expected, p),
                format_sig(cert.large_corr_budget, p),
                cert.large_corr_ok,
                cert.per_study_size,
                format_sig(cert.power_achieved, p),
                format_sig(cert.power_required, p),
                cert.power_ok,
                cert.pass
            );
            #[derive(Serialize)]
            struct Row {
                large_corr_pairs_expected: f64,
                large_corr_budget: f64,
                large_corr_ok: bool,
                per_study_size: u64,
                power_achieved: f64,
                power_required: f64,
                power_ok: bool,
                pass: bool,
            }
            let row = Row {
                large_corr_pairs_expected: cert.large_corr_pairs_expected,
                large_corr_budget: cert.large_corr_budget,
                large_corr_ok: cert.large_corr_ok,
                per_study_size: cert.per_study_size,
                power_achieved: cert.power_achieved,
                power_required: cert.power_required,
                power_ok: cert.power_ok,
                pass: cert.pass,
            };
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "large_corr_pairs_expected,large_corr_budget,large_corr_ok,per_study_size,power_achieved,power_required,power_ok,pass",
                vec![line],
                &[row],
            )
        }
        EvrCmd::TailBounds { n_total, n_sub, kappa, rho0, output } => {
            let geom = OverlapGeometry::new(n_total, n_sub, kappa, rho0)
                .map_err(CliError::validation)?;
            let report = tail_report(&geom);
            #[derive(Serialize)]
            struct Row {
                n_total: u64,
                n_sub: u64,
                kappa: f64,
                rho0: f64,
                threshold_count: f64,
                delta: f64,
                p_chernoff: f64,
                p_hoeffding: f64,
                p_markov: f64,
                p_mixed: f64,
                p_exact: Option<f64>,
            }
            let row = Row {
                n_total,
                n_sub,
                kappa,
                rho0,
                threshold_count: report.threshold_count,
                delta: report.delta,
                p_chernoff: report.p_chernoff,
                p_hoeffding: report.p_hoeffding,
                p_markov: report.p_markov,
                p_mixed: report.p_mixed,
                p_exact: report.p_exact,
            };
            let p = output.precision;
            let line = format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                n_total,
                n_sub,
                format_sig(kappa, p),
                format_sig(rho0, p),
                format_sig(row.threshold_count, p),
                format_sig(row.delta, p),
                format_sig(row.p_chernoff, p),
                format_sig(row.p_hoeffding, p),
                format_sig(row.p_markov, p),
                format_sig(row.p_mixed, p),
                row.p_exact.map(|v| format_sig(v, p)).unwrap_or_default()
            );
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "n_total,n_sub,kappa,rho0,threshold_count,delta,p_chernoff,p_hoeffding,p_markov,p_mixed,p_exact",
                vec![line],
                &[row],
            )
        }
    }
}

fn run_alloc(cmd: AllocCmd) -> Result<(), CliError> {
    match cmd {
        AllocCmd::Split { n_total, num_studies, style, output } => {
            let style = match style {
                SplitStyleArg::Residue => SplitStyle::Residue,
                SplitStyleArg::Contiguous => SplitStyle::Contiguous,
            };
            let plan = split_uniform_styled(n_total, num_studies, style)
                .map_err(CliError::validation)?;
            #[derive(Serialize)]
            struct Row {
                study: usize,
                indices: Vec<u32>,
            }
            let rows: Vec<Row> = plan
                .blocks()
                .iter()
                .enumerate()
                .map(|(study, block)| Row { study, indices: block.clone() })
                .collect();
            let mut csv_rows = Vec::new();
            for row in &rows {
                for &idx in &row.indices {
                    csv_rows.push(format!("{},{}", row.study, idx));
                }
            }
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "study,index",
                csv_rows,
                &rows,
            )
        }
        AllocCmd::Draw { n_total, n_sub, seed, study, output } => {
            let draw = egalitarian_draw(n_total, n_sub, seed, study)
                .map_err(CliError::validation)?;
            match output.format {
                OutputFormat::Csv => {
                    let prov = Provenance::new(command_line(), Some(seed));
                    let mut text = prov.csv_comments();
                    let _ = write!(
                        text,
                        "# n_total: {} n_sub: {} study_id: {}\n{}",
                        draw.n_total,
                        draw.n_sub,
                        draw.study_id,
                        draw.indices_text()
                    );
                    emit(&output, text)
                }
                OutputFormat::Json => {
                    let prov = Provenance::new(command_line(), Some(seed));
                    let mut doc = serde_json::to_value(&draw).map_err(CliError::runtime)?;
                    doc.as_object_mut()
                        .expect("draw serializes to an object")
                        .insert("meta".into(), serde_json::to_value(&prov).map_err(CliError::runtime)?);
                    let mut text = serde_json::to_string_pretty(&doc).map_err(CliError::runtime)?;
                    text.push('\n');
                    emit(&output, text)
                }
            }
        }
        AllocCmd::Overlap { n_total, files, output } => {
            let mut sets = Vec::with_capacity(files.len());
            for path in &files {
                let text = std::fs::read_to_string(path).map_err(CliError::runtime)?;
                let indices = if text.trim_start().starts_with('{') {
                    serde_json::from_str::<SubsampleDraw>(&text)
                        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
                        .indices
                } else {
                    let body: String = text
                        .lines()
                        .filter(|l| !l.trim_start().starts_with('#'))
                        .collect::<Vec<_>>()
                        .join("\n");
                    parse_indices_text(&body)
                        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
                };
                sets.push(indices);
            }
            let stats = overlap_stats(&sets, n_total).map_err(CliError::validation)?;
            #[derive(Serialize)]
            struct Row {
                i: usize,
                j: usize,
                omega: f64,
                corr_bound: f64,
            }
            let mut rows = Vec::new();
            for i in 0..stats.num_sets() {
                for j in i..stats.num_sets() {
                    rows.push(Row {
                        i,
                        j,
                        omega: stats.omega(i, j),
                        corr_bound: stats.corr_bound(i, j),
                    });
                }
            }
            let p = output.precision;
            let csv_rows = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{}",
                        r.i,
                        r.j,
                        format_sig(r.omega, p),
                        format_sig(r.corr_bound, p)
                    )
                })
                .collect();
            emit_rows(
                &output,
                &Provenance::new(command_line(), None),
                "i,j,omega,corr_bound",
                csv_rows,
                &rows,
            )
        }
    }
}

fn summaries_csv(summaries: &[ErrorCountSummary], precision: usize) -> Vec<String> {
    summaries
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{}",
                s.rule,
                s.replications,
                format_sig(s.mean_errors, precision),
                format_sig(s.variance_errors, precision),
                format_sig(s.se_variance, precision),
                format_sig(s.fwer_hat, precision)
            )
        })
        .collect()
}

const SUMMARY_HEADER: &str = "rule,replications,mean_errors,variance,se_variance,fwer_hat";

fn run_sim(cmd: SimCmd) -> Result<(), CliError> {
    let workers = workers_from_env()?;
    match cmd {
        SimCmd::ControlGroup { n_total, num_studies, alpha, reps, seed, rules, output } => {
            let level = level(alpha)?;
            let rules = rules.build(n_total);
            let opts = SimOptions { replications: reps, seed, workers };
            let summaries = control_group_portfolio(n_total, num_studies, &level, &rules, &opts)
                .map_err(CliError::validation)?;
            emit_rows(
                &output,
                &Provenance::new(command_line(), Some(seed)),
                SUMMARY_HEADER,
                summaries_csv(&summaries, output.precision),
                &summaries,
            )
        }
        SimCmd::Sur { n_total, alpha, reps, seed, sigma_x, sigma_y, rules, output } => {
            let level = level(alpha)?;
            let load = |path: &PathBuf| {
                CorrelationMatrix::from_csv_path(path).map_err(|e| match e {
                    evr_lab::corr::MatrixError::Io(_) => {
                        CliError::Runtime(format!("{}: {e}", path.display()))
                    }
                    other => CliError::Validation(format!("{}: {other}", path.display())),
                })
            };
            let sx = load(&sigma_x)?;
            let sy = load(&sigma_y)?;
            let rules = rules.build(n_total);
            let opts = SimOptions { replications: reps, seed, workers };
            let summaries = sur_portfolio(n_total, &level, &rules, &sx, &sy, &opts)
                .map_err(CliError::validation)?;
            emit_rows(
                &output,
                &Provenance::new(command_line(), Some(seed)),
                SUMMARY_HEADER,
                summaries_csv(&summaries, output.precision),
                &summaries,
            )
        }
        SimCmd::CltCheck { n_total, n_sub, shared, num_subsets, reps, seed, output } => {
            if num_subsets < 2 {
                return Err(CliError::Validation("need at least two subsets".into()));
            }
            if shared > n_sub {
                return Err(CliError::Validation("--shared cannot exceed --n-sub".into()));
            }
            let stride = n_sub - shared;
            let span = n_sub + stride * (num_subsets - 1);
            if span > n_total {
                return Err(CliError::Validation(format!(
                    "{num_subsets} subsets of {n_sub} with {shared} shared need {span} > N = {n_total} observations"
                )));
            }
            let subsets: Vec<Vec<u32>> = (0..num_subsets)
                .map(|i| {
                    let start = i * stride;
                    (start as u32..(start + n_sub) as u32).collect()
                })
                .collect();
            let opts = SimOptions { replications: reps, seed, workers };
            let check = clt_joint_cov_check(n_total, &subsets, &opts)
                .map_err(CliError::validation)?;
            #[derive(Serialize)]
            struct Row {
                i: usize,
                j: usize,
                target: f64,
                empirical: f64,
            }
            let mut rows = Vec::new();
            for i in 0..check.num_sets {
                for j in i..check.num_sets {
                    let (target, empirical) = if i == j {
                        (1.0, check.empirical_cov[i * check.num_sets + i])
                    } else {
                        (check.target_corr(i, j), check.empirical_corr(i, j))
                    };
                    rows.push(Row { i, j, target, empirical });
                }
            }
            let p = output.precision;
            let csv_rows = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{}",
                        r.i,
                        r.j,
                        format_sig(r.target, p),
                        format_sig(r.empirical, p)
                    )
                })
                .collect();
            emit_rows(
                &output,
                &Provenance::new(command_line(), Some(seed)),
                "i,j,target,empirical",
                csv_rows,
                &rows,
            )
        }
    }
}

fn run_report(cmd: ReportCmd) -> Result<(), CliError> {
    match cmd {
        ReportCmd::Table1 {
            n_total,
            num_studies,
            alpha,
            d,
            power_target,
            delta,
            kappa,
            grid_step,
            output,
        } => {
            let params = Table1Params {
                n_total,
                num_studies,
                level: level(alpha)?,
                effect_size: d,
                power_target,
                delta,
                kappa,
                bs: [10.0, 15.0, 20.0],
                grid_step,
            };
            let rows = build_table1(&params).map_err(CliError::validation)?;
            let prov = Provenance::new(command_line(), None);
            match output.format {
                OutputFormat::Csv => emit(&output, table1_csv(&rows, &prov, output.precision)),
                OutputFormat::Json => {
                    let mut text = serde_json::to_string_pretty(&to_json(&rows, &prov))
                        .map_err(CliError::runtime)?;
                    text.push('\n');
                    emit(&output, text)
                }
            }
        }
        ReportCmd::Table2 { matrices, reps, seed, n_total, alpha, output } => {
            let params = Table2Params {
                n_rows: n_total,
                level: level(alpha)?,
                bs: [10.0, 15.0, 20.0],
                replications: reps,
                seed,
                workers: workers_from_env()?,
            };
            let cells = build_table2(&matrices, &params).map_err(|e| match &e {
                evr_lab::report::ReportError::Fixture { .. } => CliError::runtime(e),
                _ => CliError::validation(e),
            })?;
            let prov = Provenance::new(command_line(), Some(seed));
            match output.format {
                OutputFormat::Csv => emit(&output, table2_csv(&cells, &prov, output.precision)),
                OutputFormat::Json => {
                    let mut text = serde_json::to_string_pretty(&to_json(&cells, &prov))
                        .map_err(CliError::runtime)?;
                    text.push('\n');
                    emit(&output, text)
                }
            }
        }
        ReportCmd::FigFwerSd { num_studies, alpha, points, output } => {
            if points < 2 {
                return Err(CliError::Validation("--points must be at least 2".into()));
            }
            let rows = build_fwer_sd(num_studies, level(alpha)?, points)
                .map_err(CliError::validation)?;
            let prov = Provenance::new(command_line(), None);
            match output.format {
                OutputFormat::Csv => emit(&output, fwer_sd_csv(&rows, &prov, output.precision)),
                OutputFormat::Json => {
                    let mut text = serde_json::to_string_pretty(&to_json(&rows, &prov))
                        .map_err(CliError::runtime)?;
                    text.push('\n');
                    emit(&output, text)
                }
            }
        }
        ReportCmd::FigSubquadratic { alpha, points, output } => {
            if points < 2 {
                return Err(CliError::Validation("--points must be at least 2".into()));
            }
            let rows = build_subquadratic(level(alpha)?, points).map_err(CliError::validation)?;
            let prov = Provenance::new(command_line(), None);
            match output.format {
                OutputFormat::Csv => {
                    emit(&output, subquadratic_csv(&rows, &prov, output.precision))
                }
                OutputFormat::Json => {
                    let mut text = serde_json::to_string_pretty(&to_json(&rows, &prov))
                        .map_err(CliError::runtime)?;
                    text.push('\n');
                    emit(&output, text)
                }
            }
        }
    }
}
