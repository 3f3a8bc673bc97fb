//! Table and figure-data builders behind the CLI's `report` commands,
//! plus the CSV/JSON rendering helpers shared by every command.
//!
//! CSV output uses '.' decimals, no thousands separators, and a default of
//! six significant digits so golden files diff cleanly; every report opens
//! with a provenance comment block (tool version, command line, seed).

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corr::{CorrelationMatrix, MatrixError};
use crate::planner::{
    capacity, min_sample_size, optimize_rho0, power_two_sample, power_two_sample_unbalanced,
    AllocationRule, DesignSpec, FractionSpec, PlanError, Rho0Choice,
};
use crate::rejection::{
    error_count_variance_equicorr, fwer_sd_curve, quadratic_bound_gap, rejection_covariance,
    EquicorrDesign, Level, RejectionError,
};
use crate::sim::{sur_portfolio, SimError, SimOptions, SimRule};

/// Errors from report construction.
#[derive(Debug, Error)]
pub enum ReportError {
    /// Planning failure.
    #[error(transparent)]
    Plan(#[from] PlanError),
    /// Rejection-calculus failure.
    #[error(transparent)]
    Rejection(#[from] RejectionError),
    /// Fixture loading failure.
    #[error("loading {path}: {source}")]
    Fixture {
        /// Offending file.
        path: String,
        /// Underlying error.
        source: MatrixError,
    },
    /// Simulation failure.
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Provenance carried at the top of every emitted report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    /// Tool version.
    pub version: String,
    /// Command line that produced the report.
    pub command: String,
    /// Master seed, for stochastic reports.
    pub seed: Option<u64>,
}

impl Provenance {
    /// Provenance for the given reconstructed command line.
    pub fn new(command: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            seed,
        }
    }

    /// CSV comment block.
    pub fn csv_comments(&self) -> String {
        let mut out = format!("# evr-lab {}\n# command: {}\n", self.version, self.command);
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        out
    }
}

/// Formats `x` with `sig` significant digits, '%g' style: fixed notation in
/// a moderate exponent window, scientific outside it, trailing zeros trimmed.
pub fn format_sig(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (_, exp_str) = sci.split_once('e').expect("{:e} always carries an exponent");
    let exp: i32 = exp_str.parse().expect("exponent is an integer");
    if exp < -4 || exp >= sig as i32 {
        let (mantissa, _) = sci.split_once('e').unwrap();
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

/// Renders one CSV cell: plain integers stay integers, floats go through
/// [`format_sig`], absent optionals become empty cells.
pub fn csv_cell(value: Option<f64>, sig: usize) -> String {
    match value {
        None => String::new(),
        Some(v) => format_sig(v, sig),
    }
}

/// Parameters of the reused-control-group planning table.
#[derive(Debug, Clone, Copy)]
pub struct Table1Params {
    /// Observations per arm N.
    pub n_total: u64,
    /// Portfolio size C.
    pub num_studies: usize,
    /// Test level.
    pub level: Level,
    /// Effect size (Cohen's d) each study must detect.
    pub effect_size: f64,
    /// Required per-study power.
    pub power_target: f64,
    /// EVR excess tolerance δ for the capacity column.
    pub delta: f64,
    /// Association bound κ (1/2 for disjoint treatment arms).
    pub kappa: f64,
    /// Egalitarian fraction coefficients to tabulate.
    pub bs: [f64; 3],
    /// ρ₀ grid step.
    pub grid_step: f64,
}

impl Default for Table1Params {
    fn default() -> Self {
        Self {
            n_total: 10_000,
            num_studies: 10,
            level: Level::new(0.05).expect("0.05 is a valid level"),
            effect_size: 0.2,
            power_target: 0.99,
            delta: 0.1,
            kappa: 0.5,
            bs: [10.0, 15.0, 20.0],
            grid_step: 1e-4,
        }
    }
}

/// One planning-table row.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    /// Allocation design label.
    pub design: String,
    /// Treatment observations per study.
    pub n_treat: u64,
    /// Control observations per study.
    pub n_ctrl: u64,
    /// Per-study power at the required effect size.
    pub power: f64,
    /// Expected pairwise statistic correlation.
    pub expected_rho: f64,
    /// Expected variance (closed form) or its upper bound.
    pub variance_bound: f64,
    /// Optimal ρ₀ (egalitarian rows only).
    pub rho0: Option<f64>,
    /// Largest portfolio respecting EVR ≤ 1 + δ and the power floor.
    pub max_studies: u64,
}

/// Builds the planning table for the reused-control-group design:
/// gluttony, splitting, and three egalitarian variants.
pub fn build_table1(params: &Table1Params) -> Result<Vec<Table1Row>, ReportError> {
    let level = params.level;
    let v = level.indicator_variance();
    let c = params.num_studies as f64;
    let n = params.n_total;
    let mut rows = Vec::with_capacity(5);

    // Gluttony: full overlap, so the pairwise correlation equals the
    // statistic association bound kappa.
    let glut_design = EquicorrDesign::new(params.num_studies, params.kappa, level)?;
    let r_kappa = rejection_covariance(params.kappa, &level);
    let glut_capacity = 1 + (params.delta * v / r_kappa) as u64;
    rows.push(Table1Row {
        design: "gluttony".into(),
        n_treat: n,
        n_ctrl: n,
        power: power_two_sample(params.effect_size, &level, n),
        expected_rho: params.kappa,
        variance_bound: error_count_variance_equicorr(&glut_design),
        rho0: None,
        max_studies: glut_capacity,
    });

    // Splitting: the control arm is partitioned; blocks of size N/C.
    let block = n / params.num_studies as u64;
    let m = min_sample_size(params.effect_size, &level, params.power_target)?;
    rows.push(Table1Row {
        design: "splitting".into(),
        n_treat: n,
        n_ctrl: block,
        power: power_two_sample_unbalanced(params.effect_size, &level, n, block),
        expected_rho: 0.0,
        variance_bound: c * v,
        rho0: None,
        max_studies: n / m,
    });

    for b in params.bs {
        let spec = DesignSpec::new(
            n,
            params.num_studies,
            level,
            AllocationRule::Egalitarian(FractionSpec::Coefficient(b)),
            params.kappa,
        )?;
        let n_sub = spec.subsample_size().expect("egalitarian rule");
        let search = optimize_rho0(&spec, params.grid_step)?;
        // The per-study floor is the powered sample size M; an egalitarian
        // variant whose subsample cannot reach the power target reports
        // zero capacity rather than a bound it cannot honor.
        let cap = capacity(&spec, params.delta, Rho0Choice::Fixed(search.rho0), m)?;
        rows.push(Table1Row {
            design: format!("egalitarian_b{b}"),
            n_treat: n_sub,
            n_ctrl: n_sub,
            power: power_two_sample(params.effect_size, &level, n_sub),
            expected_rho: params.kappa * spec.rate().expect("egalitarian rule"),
            variance_bound: c * v + c * (c - 1.0) * search.epsilon,
            rho0: Some(search.rho0),
            max_studies: cap.max_studies,
        });
    }
    Ok(rows)
}

/// Renders the planning table as CSV.
pub fn table1_csv(rows: &[Table1Row], prov: &Provenance, sig: usize) -> String {
    let mut out = prov.csv_comments();
    out.push_str("design,n_treat,n_ctrl,power,expected_rho,variance_bound,rho0,max_studies\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.design,
            r.n_treat,
            r.n_ctrl,
            format_sig(r.power, sig),
            format_sig(r.expected_rho, sig),
            format_sig(r.variance_bound, sig),
            csv_cell(r.rho0, sig),
            r.max_studies
        ));
    }
    out
}

/// Fixture tags of the shipped correlation regimes, in table order.
pub const REGIME_TAGS: [&str; 6] = [
    "full",
    "pm33_100",
    "pm67_100",
    "pm33_67",
    "pos33_67",
    "pos67_100",
];

/// Parameters of the simulated regression-family table.
#[derive(Debug, Clone, Copy)]
pub struct Table2Params {
    /// Rows per replication N.
    pub n_rows: usize,
    /// Test level.
    pub level: Level,
    /// Egalitarian fraction coefficients.
    pub bs: [f64; 3],
    /// Replications per regime.
    pub replications: u32,
    /// Master seed.
    pub seed: u64,
    /// Worker cap.
    pub workers: Option<usize>,
}

impl Table2Params {
    /// Worked-example defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            n_rows: 10_000,
            level: Level::new(0.05).expect("0.05 is a valid level"),
            bs: [10.0, 15.0, 20.0],
            replications: 5000,
            seed,
            workers: None,
        }
    }
}

/// One simulated cell of the regression-family table.
#[derive(Debug, Clone, Serialize)]
pub struct Table2Cell {
    /// Correlation-regime tag.
    pub regime: String,
    /// Allocation design label.
    pub design: String,
    /// Replications behind the cell.
    pub replications: u32,
    /// Mean error count.
    pub mean_errors: f64,
    /// Plug-in variance of the error count.
    pub variance: f64,
    /// Jackknife standard error of the variance.
    pub se_variance: f64,
    /// Fraction of replications with at least one rejection.
    pub fwer_hat: f64,
}

fn table2_rules(params: &Table2Params) -> Vec<SimRule> {
    let mut rules = vec![SimRule::gluttony(), SimRule::splitting()];
    for b in params.bs {
        rules.push(SimRule::egalitarian_b(b, params.n_rows));
    }
    rules
}

/// Loads one fixture matrix from `dir/<tag>/sigma_<which>.csv`.
pub fn load_regime_matrix(
    dir: &Path,
    tag: &str,
    which: &str,
) -> Result<CorrelationMatrix, ReportError> {
    let path = dir.join(tag).join(format!("sigma_{which}.csv"));
    CorrelationMatrix::from_csv_path(&path).map_err(|source| ReportError::Fixture {
        path: path.display().to_string(),
        source,
    })
}

/// Simulates the regression-family table over every shipped correlation
/// regime: 6 regimes x 5 designs, one summary row per cell. Each regime
/// shares its replication draws across all designs.
pub fn build_table2(dir: &Path, params: &Table2Params) -> Result<Vec<Table2Cell>, ReportError> {
    let rules = table2_rules(params);
    let mut cells = Vec::with_capacity(REGIME_TAGS.len() * rules.len());
    for (regime_idx, tag) in REGIME_TAGS.iter().enumerate() {
        let sigma_x = load_regime_matrix(dir, tag, "x")?;
        let sigma_y = load_regime_matrix(dir, tag, "y")?;
        let opts = SimOptions {
            replications: params.replications,
            // One independent stream family per regime.
            seed: crate::allocation::seeding::stream_seed(params.seed, &[regime_idx as u64]),
            workers: params.workers,
        };
        let summaries = sur_portfolio(params.n_rows, &params.level, &rules, &sigma_x, &sigma_y, &opts)?;
        for s in summaries {
            cells.push(Table2Cell {
                regime: tag.to_string(),
                design: s.rule.clone(),
                replications: s.replications,
                mean_errors: s.mean_errors,
                variance: s.variance_errors,
                se_variance: s.se_variance,
                fwer_hat: s.fwer_hat,
            });
        }
    }
    Ok(cells)
}

/// Renders the simulated table as CSV (long format, one row per cell).
pub fn table2_csv(cells: &[Table2Cell], prov: &Provenance, sig: usize) -> String {
    let mut out = prov.csv_comments();
    out.push_str("regime,design,replications,mean_errors,variance,se_variance,fwer_hat\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.regime,
            c.design,
            c.replications,
            format_sig(c.mean_errors, sig),
            format_sig(c.variance, sig),
            format_sig(c.se_variance, sig),
            format_sig(c.fwer_hat, sig),
        ));
    }
    out
}

/// One row of the FWER-versus-standard-deviation curve.
#[derive(Debug, Clone, Serialize)]
pub struct FwerSdRow {
    /// Common pairwise correlation.
    pub rho: f64,
    /// Familywise error rate.
    pub fwer: f64,
    /// Standard deviation of the error count.
    pub sd: f64,
}

/// Builds the FWER/SD trade-off curve on a uniform grid.
pub fn build_fwer_sd(
    num_tests: usize,
    level: Level,
    grid_points: usize,
) -> Result<Vec<FwerSdRow>, ReportError> {
    let grid: Vec<f64> = (0..grid_points)
        .map(|k| k as f64 / (grid_points - 1) as f64)
        .collect();
    Ok(fwer_sd_curve(num_tests, level, &grid)?
        .into_iter()
        .map(|p| FwerSdRow { rho: p.rho, fwer: p.fwer, sd: p.sd })
        .collect())
}

/// Renders the FWER/SD curve as CSV.
pub fn fwer_sd_csv(rows: &[FwerSdRow], prov: &Provenance, sig: usize) -> String {
    let mut out = prov.csv_comments();
    out.push_str("rho,fwer,sd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            format_sig(r.rho, sig),
            format_sig(r.fwer, sig),
            format_sig(r.sd, sig)
        ));
    }
    out
}

/// One row of the excess-covariance growth figure.
#[derive(Debug, Clone, Serialize)]
pub struct SubquadraticRow {
    /// Pairwise correlation.
    pub rho: f64,
    /// Excess covariance R(ρ, c).
    pub excess_cov: f64,
    /// Quadratic envelope α(1−α)ρ².
    pub quadratic_envelope: f64,
    /// Envelope minus excess (nonnegative on the tabulated grid).
    pub gap: f64,
}

/// Tabulates R(ρ, c) against its quadratic envelope on [0, 1).
pub fn build_subquadratic(
    level: Level,
    grid_points: usize,
) -> Result<Vec<SubquadraticRow>, ReportError> {
    let mut rows = Vec::with_capacity(grid_points);
    for k in 0..grid_points {
        let rho = 0.99 * k as f64 / (grid_points - 1) as f64;
        let excess = rejection_covariance(rho, &level);
        let gap = quadratic_bound_gap(rho, &level)?;
        rows.push(SubquadraticRow {
            rho,
            excess_cov: excess,
            quadratic_envelope: level.indicator_variance() * rho * rho,
            gap,
        });
    }
    Ok(rows)
}

/// Renders the excess-covariance figure data as CSV.
pub fn subquadratic_csv(rows: &[SubquadraticRow], prov: &Provenance, sig: usize) -> String {
    let mut out = prov.csv_comments();
    out.push_str("rho,excess_cov,quadratic_envelope,gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_sig(r.rho, sig),
            format_sig(r.excess_cov, sig),
            format_sig(r.quadratic_envelope, sig),
            format_sig(r.gap, sig)
        ));
    }
    out
}

/// Wraps serializable rows in a `{meta, rows}` JSON document.
pub fn to_json<T: Serialize>(rows: &[T], prov: &Provenance) -> serde_json::Value {
    serde_json::json!({
        "meta": {
            "tool": "evr-lab",
            "version": prov.version,
            "command": prov.command,
            "seed": prov.seed,
        },
        "rows": rows,
    })
}
