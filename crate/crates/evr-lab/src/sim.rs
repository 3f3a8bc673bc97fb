//! Replicated global-null Monte Carlo simulations.
//!
//! Three scenarios: a common control group shared by several treatment
//! contrasts, families of univariate regressions with correlated
//! covariates, and a joint-covariance check for standardized subset means.
//! Every random quantity derives from the master seed through the stream
//! paths in [`crate::allocation::seeding`], keyed by replication index,
//! rule, study, and arm — so aggregate output is bitwise identical for any
//! worker count, and replications are embarrassingly parallel.
//!
//! Egalitarian draws in the control-group scenario subsample both the
//! control pool and each study's treatment pool to the common size; the
//! treatment pools are disjoint across studies by construction, which is
//! what caps the cross-statistic association at one half.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::allocation::{sample_without_replacement, seeding, split_uniform, overlap_stats};
use crate::corr::{CholeskyFactor, CorrelationMatrix, MatrixError};
use crate::rejection::Level;

const CTRL_STREAM: u64 = 0x11;
const TREAT_STREAM: u64 = 0x22;
const DRAW_STREAM: u64 = 0x33;
const X_STREAM: u64 = 0x44;
const Y_STREAM: u64 = 0x55;
const CLT_STREAM: u64 = 0x66;

/// Errors from simulation configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// Replication count must be positive.
    #[error("replication count must be positive")]
    NoReplications,
    /// Worker count must be positive when given.
    #[error("worker count must be positive")]
    ZeroWorkers,
    /// No rules requested.
    #[error("at least one allocation rule is required")]
    NoRules,
    /// A rule cannot be realized at the configured sizes.
    #[error("rule {label:?} infeasible: {reason}")]
    RuleInfeasible { label: String, reason: String },
    /// Correlation matrices must match the portfolio dimension.
    #[error("matrix dimension {got} does not match the {expected} studies")]
    DimensionMismatch { got: usize, expected: usize },
    /// A subset for the covariance check was empty or out of range.
    #[error("subset {index} is empty")]
    EmptySubset { index: usize },
    /// Propagated matrix error.
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    /// Propagated allocation error.
    #[error("allocation error: {0}")]
    Alloc(String),
    /// Thread-pool construction failed.
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Replication count, master seed, and optional worker cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Number of replications B.
    pub replications: u32,
    /// Master seed; all randomness derives from it.
    pub seed: u64,
    /// Worker threads (`None` = machine parallelism). Never changes output.
    pub workers: Option<usize>,
}

/// One allocation rule to evaluate inside a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRule {
    /// Label carried into the summary row.
    pub label: String,
    /// Concrete allocation behavior.
    pub kind: RuleKind,
}

/// Concrete per-simulation allocation behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleKind {
    /// Each study uses every observation.
    Gluttony,
    /// Studies use disjoint residue-class blocks.
    Splitting,
    /// Each study draws an independent uniform subsample of this size.
    Egalitarian {
        /// Per-study subsample size.
        n_sub: usize,
    },
}

impl SimRule {
    /// Gluttony with a conventional label.
    pub fn gluttony() -> Self {
        Self { label: "gluttony".into(), kind: RuleKind::Gluttony }
    }

    /// Splitting with a conventional label.
    pub fn splitting() -> Self {
        Self { label: "splitting".into(), kind: RuleKind::Splitting }
    }

    /// Egalitarian subsampling labeled by its fraction coefficient b.
    pub fn egalitarian_b(b: f64, n_total: usize) -> Self {
        let n_sub = ((n_total as f64).sqrt() * b).round() as usize;
        Self { label: format!("egalitarian_b{b}"), kind: RuleKind::Egalitarian { n_sub } }
    }
}

/// Monte Carlo summary of the Type I error count for one rule.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ErrorCountSummary {
    /// Label of the rule that produced the counts.
    pub rule: String,
    /// Number of replications.
    pub replications: u32,
    /// Mean error count (expected Cα under the global null).
    pub mean_errors: f64,
    /// Plug-in variance of the error count.
    pub variance_errors: f64,
    /// Jackknife-over-replications standard error of the variance.
    pub se_variance: f64,
    /// Fraction of replications with at least one rejection.
    pub fwer_hat: f64,
}

fn summarize(rule: &str, counts: &[u16]) -> ErrorCountSummary {
    let b = counts.len() as f64;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut any = 0u64;
    for &c in counts {
        let x = c as f64;
        s1 += x;
        s2 += x * x;
        any += u64::from(c > 0);
    }
    let mean = s1 / b;
    let variance = (s2 / b - mean * mean).max(0.0);
    // Leave-one-out plug-in variances from the sufficient statistics.
    let mut dev_sq = 0.0;
    let mut v_sum = 0.0;
    let mut loo = Vec::with_capacity(counts.len());
    for &c in counts {
        let x = c as f64;
        let m_i = (s1 - x) / (b - 1.0);
        let v_i = ((s2 - x * x) / (b - 1.0) - m_i * m_i).max(0.0);
        v_sum += v_i;
        loo.push(v_i);
    }
    let v_bar = v_sum / b;
    for v_i in loo {
        dev_sq += (v_i - v_bar) * (v_i - v_bar);
    }
    let se_variance = ((b - 1.0) / b * dev_sq).sqrt();
    ErrorCountSummary {
        rule: rule.to_string(),
        replications: counts.len() as u32,
        mean_errors: mean,
        variance_errors: variance,
        se_variance,
        fwer_hat: any as f64 / b,
    }
}

fn run_pool<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T, SimError> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(SimError::ZeroWorkers),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| SimError::Pool(e.to_string()))
            .map(|pool| pool.install(job)),
    }
}

fn fill_standard_normal(rng: &mut impl Rng, out: &mut [f64]) {
    for slot in out.iter_mut() {
        *slot = rng.sample(StandardNormal);
    }
}

fn validate(opts: &SimOptions, rules: &[SimRule]) -> Result<(), SimError> {
    if opts.replications == 0 {
        return Err(SimError::NoReplications);
    }
    if opts.workers == Some(0) {
        return Err(SimError::ZeroWorkers);
    }
    if rules.is_empty() {
        return Err(SimError::NoRules);
    }
    Ok(())
}

/// Common-control-group scenario: one control pool of `n_per_arm`
/// observations and `num_studies` disjoint treatment pools of the same
/// size, all standard normal under the global null. Each rule decides how
/// much of each pool a study's balanced-contrast z statistic consumes.
pub fn control_group_portfolio(
    n_per_arm: usize,
    num_studies: usize,
    level: &Level,
    rules: &[SimRule],
    opts: &SimOptions,
) -> Result<Vec<ErrorCountSummary>, SimError> {
    validate(opts, rules)?;
    if n_per_arm == 0 || num_studies == 0 {
        return Err(SimError::RuleInfeasible {
            label: "portfolio".into(),
            reason: "empty arms or portfolio".into(),
        });
    }
    for rule in rules {
        match rule.kind {
            RuleKind::Splitting if num_studies > n_per_arm => {
                return Err(SimError::RuleInfeasible {
                    label: rule.label.clone(),
                    reason: format!("cannot split {n_per_arm} controls into {num_studies} blocks"),
                });
            }
            RuleKind::Egalitarian { n_sub } if n_sub == 0 || n_sub > n_per_arm => {
                return Err(SimError::RuleInfeasible {
                    label: rule.label.clone(),
                    reason: format!("subsample {n_sub} infeasible for pools of {n_per_arm}"),
                });
            }
            _ => {}
        }
    }
    let split = split_uniform(n_per_arm, num_studies)
        .map_err(|e| SimError::Alloc(e.to_string()))?;
    let critical = level.critical();
    let seed = opts.seed;
    let num_rules = rules.len();

    let job = || {
        (0..opts.replications)
            .into_par_iter()
            .map(|rep| {
                let rep = rep as u64;
                let mut ctrl = vec![0.0; n_per_arm];
                fill_standard_normal(&mut seeding::stream_rng(seed, &[CTRL_STREAM, rep]), &mut ctrl);
                let mut treats = vec![0.0; n_per_arm * num_studies];
                for study in 0..num_studies {
                    let slice = &mut treats[study * n_per_arm..(study + 1) * n_per_arm];
                    fill_standard_normal(
                        &mut seeding::stream_rng(seed, &[TREAT_STREAM, rep, study as u64]),
                        slice,
                    );
                }
                let ctrl_mean = ctrl.iter().sum::<f64>() / n_per_arm as f64;

                let mut counts = vec![0u16; num_rules];
                for (rule_idx, rule) in rules.iter().enumerate() {
                    let mut errors = 0u16;
                    for study in 0..num_studies {
                        let treat = &treats[study * n_per_arm..(study + 1) * n_per_arm];
                        let z = match rule.kind {
                            RuleKind::Gluttony => {
                                let tm = treat.iter().sum::<f64>() / n_per_arm as f64;
                                (tm - ctrl_mean) / (2.0 / n_per_arm as f64).sqrt()
                            }
                            RuleKind::Splitting => {
                                let block = split.block(study);
                                let cm = block.iter().map(|&i| ctrl[i as usize]).sum::<f64>()
                                    / block.len() as f64;
                                let tm = treat.iter().sum::<f64>() / n_per_arm as f64;
                                (tm - cm)
                                    / (1.0 / n_per_arm as f64 + 1.0 / block.len() as f64).sqrt()
                            }
                            RuleKind::Egalitarian { n_sub } => {
                                let path = [DRAW_STREAM, rep, rule_idx as u64, study as u64];
                                let mut rng_c = seeding::stream_rng(seed, &{
                                    let mut p = path.to_vec();
                                    p.push(0);
                                    p
                                });
                                let mut rng_t = seeding::stream_rng(seed, &{
                                    let mut p = path.to_vec();
                                    p.push(1);
                                    p
                                });
                                let ci = sample_without_replacement(
                                    &mut rng_c,
                                    n_per_arm as u32,
                                    n_sub,
                                );
                                let ti = sample_without_replacement(
                                    &mut rng_t,
                                    n_per_arm as u32,
                                    n_sub,
                                );
                                let cm = ci.iter().map(|&i| ctrl[i as usize]).sum::<f64>()
                                    / n_sub as f64;
                                let tm = ti.iter().map(|&i| treat[i as usize]).sum::<f64>()
                                    / n_sub as f64;
                                (tm - cm) / (2.0 / n_sub as f64).sqrt()
                            }
                        };
                        errors += u16::from(z.abs() > critical);
                    }
                    counts[rule_idx] = errors;
                }
                counts
            })
            .collect::<Vec<Vec<u16>>>()
    };
    let per_rep = run_pool(opts.workers, job)?;
    Ok(collect_summaries(rules, &per_rep))
}

/// Families-of-regressions scenario: N rows of (X, Y) with X ~ N(0, Σ_X)
/// and Y ~ N(0, Σ_Y) independent of each other (the global null). Study i
/// regresses X_i on Y_i (with intercept) over the rows its rule allocates
/// and performs a two-sided slope test against the normal critical value.
pub fn sur_portfolio(
    n_rows: usize,
    level: &Level,
    rules: &[SimRule],
    sigma_x: &CorrelationMatrix,
    sigma_y: &CorrelationMatrix,
    opts: &SimOptions,
) -> Result<Vec<ErrorCountSummary>, SimError> {
    validate(opts, rules)?;
    let num_studies = sigma_x.dim();
    if sigma_y.dim() != num_studies {
        return Err(SimError::DimensionMismatch { got: sigma_y.dim(), expected: num_studies });
    }
    if n_rows < 3 {
        return Err(SimError::RuleInfeasible {
            label: "portfolio".into(),
            reason: "need at least 3 rows for a slope test".into(),
        });
    }
    for rule in rules {
        match rule.kind {
            RuleKind::Splitting if num_studies > n_rows => {
                return Err(SimError::RuleInfeasible {
                    label: rule.label.clone(),
                    reason: "more studies than rows".into(),
                });
            }
            RuleKind::Egalitarian { n_sub } if n_sub < 3 || n_sub > n_rows => {
                return Err(SimError::RuleInfeasible {
                    label: rule.label.clone(),
                    reason: format!("subsample {n_sub} infeasible for {n_rows} rows"),
                });
            }
            _ => {}
        }
    }
    let lx = sigma_x.factorize()?;
    let ly = sigma_y.factorize()?;
    let split = split_uniform(n_rows, num_studies).map_err(|e| SimError::Alloc(e.to_string()))?;
    let critical = level.critical();
    let seed = opts.seed;
    let num_rules = rules.len();

    let job = || {
        (0..opts.replications)
            .into_par_iter()
            .map(|rep| {
                let rep = rep as u64;
                let xs = draw_correlated(seed, X_STREAM, rep, n_rows, &lx);
                let ys = draw_correlated(seed, Y_STREAM, rep, n_rows, &ly);
                let mut counts = vec![0u16; num_rules];
                for (rule_idx, rule) in rules.iter().enumerate() {
                    let mut errors = 0u16;
                    for study in 0..num_studies {
                        let t = match rule.kind {
                            RuleKind::Gluttony => slope_t_full(&xs, &ys, num_studies, study),
                            RuleKind::Splitting => slope_t_rows(
                                &xs,
                                &ys,
                                num_studies,
                                study,
                                split.block(study).iter().map(|&r| r as usize),
                            ),
                            RuleKind::Egalitarian { n_sub } => {
                                let rows = sample_without_replacement(
                                    &mut seeding::stream_rng(
                                        seed,
                                        &[DRAW_STREAM, rep, rule_idx as u64, study as u64],
                                    ),
                                    n_rows as u32,
                                    n_sub,
                                );
                                slope_t_rows(
                                    &xs,
                                    &ys,
                                    num_studies,
                                    study,
                                    rows.iter().map(|&r| r as usize),
                                )
                            }
                        };
                        errors += u16::from(t.abs() > critical);
                    }
                    counts[rule_idx] = errors;
                }
                counts
            })
            .collect::<Vec<Vec<u16>>>()
    };
    let per_rep = run_pool(opts.workers, job)?;
    Ok(collect_summaries(rules, &per_rep))
}

fn draw_correlated(
    seed: u64,
    stream: u64,
    rep: u64,
    n_rows: usize,
    factor: &CholeskyFactor,
) -> Vec<f64> {
    let dim = factor.dim();
    let mut rng = seeding::stream_rng(seed, &[stream, rep]);
    let mut out = vec![0.0; n_rows * dim];
    let mut z = vec![0.0; dim];
    for row in 0..n_rows {
        fill_standard_normal(&mut rng, &mut z);
        factor.apply(&z, &mut out[row * dim..(row + 1) * dim]);
    }
    out
}

fn slope_t_full(xs: &[f64], ys: &[f64], dim: usize, study: usize) -> f64 {
    let n = xs.len() / dim;
    slope_t_rows(xs, ys, dim, study, 0..n)
}

/// Two-sided slope t statistic of the with-intercept regression of
/// x[study] on y[study] over the given rows.
fn slope_t_rows(
    xs: &[f64],
    ys: &[f64],
    dim: usize,
    study: usize,
    rows: impl Iterator<Item = usize>,
) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for row in rows {
        let x = xs[row * dim + study];
        let y = ys[row * dim + study];
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let sxx_c = sxx - sx * sx / n;
    let syy_c = syy - sy * sy / n;
    let sxy_c = sxy - sx * sy / n;
    let slope = sxy_c / syy_c;
    let rss = (sxx_c - slope * sxy_c).max(0.0);
    let se = (rss / (n - 2.0) / syy_c).sqrt();
    if se == 0.0 {
        return 0.0;
    }
    slope / se
}

fn collect_summaries(rules: &[SimRule], per_rep: &[Vec<u16>]) -> Vec<ErrorCountSummary> {
    rules
        .iter()
        .enumerate()
        .map(|(idx, rule)| {
            let counts: Vec<u16> = per_rep.iter().map(|row| row[idx]).collect();
            summarize(&rule.label, &counts)
        })
        .collect()
}

/// Empirical joint-covariance check for standardized subset means.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCovCheck {
    /// Number of subsets C.
    pub num_sets: usize,
    /// Replications used.
    pub replications: u32,
    /// Predicted covariance ω_ij/√(r_i r_j) (unit diagonal), row-major.
    pub target: Vec<f64>,
    /// Empirical covariance of the standardized means, row-major.
    pub empirical_cov: Vec<f64>,
    /// Largest |empirical − target| over entries, in SE units.
    pub max_abs_dev: f64,
    /// 1/√B.
    pub se_scale: f64,
}

impl JointCovCheck {
    /// Empirical correlation of subsets i and j.
    pub fn empirical_corr(&self, i: usize, j: usize) -> f64 {
        let c = self.num_sets;
        self.empirical_cov[i * c + j]
            / (self.empirical_cov[i * c + i] * self.empirical_cov[j * c + j]).sqrt()
    }

    /// Target correlation of subsets i and j.
    pub fn target_corr(&self, i: usize, j: usize) -> f64 {
        self.target[i * self.num_sets + j]
    }
}

/// Draws iid standard normals and compares the empirical covariance of the
/// standardized subset means S_i = √n_i · mean(D_i) with the overlap
/// prediction ω_ij/√(r_i r_j).
pub fn clt_joint_cov_check(
    n_total: usize,
    subsets: &[Vec<u32>],
    opts: &SimOptions,
) -> Result<JointCovCheck, SimError> {
    if opts.replications == 0 {
        return Err(SimError::NoReplications);
    }
    if subsets.is_empty() {
        return Err(SimError::EmptySubset { index: 0 });
    }
    for (index, s) in subsets.iter().enumerate() {
        if s.is_empty() {
            return Err(SimError::EmptySubset { index });
        }
    }
    let stats = overlap_stats(subsets, n_total).map_err(|e| SimError::Alloc(e.to_string()))?;
    let num_sets = subsets.len();
    let target = stats.corr_bound_entries().to_vec();
    let seed = opts.seed;
    let b = opts.replications as u64;

    let job = || {
        (0..opts.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = seeding::stream_rng(seed, &[CLT_STREAM, rep as u64]);
                let mut data = vec![0.0; n_total];
                fill_standard_normal(&mut rng, &mut data);
                subsets
                    .iter()
                    .map(|set| {
                        let sum: f64 = set.iter().map(|&i| data[i as usize]).sum();
                        sum / (set.len() as f64).sqrt()
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<Vec<f64>>>()
    };
    let stats_rows = run_pool(opts.workers, job)?;

    let bf = b as f64;
    let mut means = vec![0.0; num_sets];
    for row in &stats_rows {
        for (m, &s) in means.iter_mut().zip(row) {
            *m += s;
        }
    }
    for m in means.iter_mut() {
        *m /= bf;
    }
    let mut cov = vec![0.0; num_sets * num_sets];
    for row in &stats_rows {
        for i in 0..num_sets {
            for j in 0..num_sets {
                cov[i * num_sets + j] += (row[i] - means[i]) * (row[j] - means[j]);
            }
        }
    }
    for c in cov.iter_mut() {
        *c /= bf;
    }

    let se_scale = 1.0 / bf.sqrt();
    let mut max_abs_dev: f64 = 0.0;
    for i in 0..num_sets {
        for j in i..num_sets {
            let (emp, tgt, se) = if i == j {
                // Var of a sample variance of N(0,1) data is 2/B.
                (cov[i * num_sets + i], 1.0, (2.0f64).sqrt() * se_scale)
            } else {
                let corr = cov[i * num_sets + j]
                    / (cov[i * num_sets + i] * cov[j * num_sets + j]).sqrt();
                let tgt = target[i * num_sets + j];
                (corr, tgt, (1.0 - tgt * tgt).max(0.0) * se_scale)
            };
            let dev = if se > 0.0 {
                (emp - tgt).abs() / se
            } else if (emp - tgt).abs() < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            };
            max_abs_dev = max_abs_dev.max(dev);
        }
    }
    Ok(JointCovCheck {
        num_sets,
        replications: opts.replications,
        target,
        empirical_cov: cov,
        max_abs_dev,
        se_scale,
    })
}

/// Scale factor N^(1−j/2) r^(j/2) of the j-th joint cumulant of
/// standardized subset means under independent uniform subsampling at
/// rate r (orders j ≥ 2; j = 2 returns r itself).
pub fn cumulant_scale(n_total: u64, rate: f64, order: u32) -> f64 {
    let j = order as f64;
    (n_total as f64).powf(1.0 - 0.5 * j) * rate.powf(0.5 * j)
}

/// Exact cumulant geometry factor |D_1 ∩ … ∩ D_j| / √(|D_1|⋯|D_j|) for
/// explicit subsets.
pub fn cumulant_scale_exact(subsets: &[Vec<u32>]) -> f64 {
    if subsets.is_empty() {
        return 0.0;
    }
    let mut common: Vec<u32> = {
        let mut first = subsets[0].clone();
        first.sort_unstable();
        first
    };
    for set in &subsets[1..] {
        let mut sorted = set.clone();
        sorted.sort_unstable();
        let mut next = Vec::with_capacity(common.len().min(sorted.len()));
        let (mut i, mut j) = (0, 0);
        while i < common.len() && j < sorted.len() {
            match common[i].cmp(&sorted[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    next.push(common[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        common = next;
    }
    let log_denom: f64 = subsets.iter().map(|s| (s.len() as f64).ln()).sum();
    common.len() as f64 / (0.5 * log_denom).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rejection::{error_count_variance_equicorr, EquicorrDesign};
    use approx::assert_abs_diff_eq;

    fn level05() -> Level {
        Level::new(0.05).unwrap()
    }

    fn small_rules(n_total: usize) -> Vec<SimRule> {
        vec![
            SimRule::gluttony(),
            SimRule::splitting(),
            SimRule { label: "egalitarian".into(), kind: RuleKind::Egalitarian { n_sub: n_total / 5 } },
        ]
    }

    #[test]
    fn control_group_mean_invariance_and_closed_form() {
        let n = 400;
        let c = 5;
        let opts = SimOptions { replications: 4000, seed: 987, workers: None };
        let rules = small_rules(n);
        let summaries =
            control_group_portfolio(n, c, &level05(), &rules, &opts).unwrap();
        let expected_mean = c as f64 * 0.05;
        for s in &summaries {
            let se_mean = (s.variance_errors / s.replications as f64).sqrt();
            assert!(
                (s.mean_errors - expected_mean).abs() <= 3.0 * se_mean,
                "{}: mean {} vs {expected_mean}",
                s.rule,
                s.mean_errors
            );
        }
        // Gluttony pairwise correlation is exactly 1/2: plug-in variance
        // must agree with the closed form within 3 jackknife SEs.
        let design = EquicorrDesign::new(c, 0.5, level05()).unwrap();
        let closed = error_count_variance_equicorr(&design);
        let glut = &summaries[0];
        assert!(
            (glut.variance_errors - closed).abs() <= 3.0 * glut.se_variance,
            "gluttony variance {} vs closed form {closed} (SE {})",
            glut.variance_errors,
            glut.se_variance
        );
        // Splitting behaves independently.
        let split = &summaries[1];
        let base = c as f64 * 0.0475;
        assert!((split.variance_errors - base).abs() <= 3.0 * split.se_variance);
    }

    #[test]
    fn control_group_deterministic_across_workers() {
        let opts1 = SimOptions { replications: 300, seed: 11, workers: Some(1) };
        let opts4 = SimOptions { replications: 300, seed: 11, workers: Some(4) };
        let rules = small_rules(200);
        let a = control_group_portfolio(200, 4, &level05(), &rules, &opts1).unwrap();
        let b = control_group_portfolio(200, 4, &level05(), &rules, &opts4).unwrap();
        assert_eq!(a, b);
        let c = control_group_portfolio(
            200,
            4,
            &level05(),
            &rules,
            &SimOptions { seed: 12, ..opts1 },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn control_group_rejects_infeasible_rules() {
        let opts = SimOptions { replications: 10, seed: 1, workers: None };
        let too_big = vec![SimRule {
            label: "egalitarian".into(),
            kind: RuleKind::Egalitarian { n_sub: 300 },
        }];
        assert!(matches!(
            control_group_portfolio(200, 4, &level05(), &too_big, &opts),
            Err(SimError::RuleInfeasible { .. })
        ));
        assert!(control_group_portfolio(200, 4, &level05(), &[], &opts).is_err());
        assert!(matches!(
            control_group_portfolio(
                200,
                4,
                &level05(),
                &small_rules(200),
                &SimOptions { replications: 0, seed: 1, workers: None }
            ),
            Err(SimError::NoReplications)
        ));
    }

    #[test]
    fn sur_identity_matches_independence() {
        let sigma = CorrelationMatrix::identity(4);
        let opts = SimOptions { replications: 3000, seed: 555, workers: None };
        let rules = vec![SimRule::splitting(), SimRule::gluttony()];
        let summaries =
            sur_portfolio(1000, &level05(), &rules, &sigma, &sigma, &opts).unwrap();
        let base = 4.0 * 0.0475;
        for s in &summaries {
            let se_mean = (s.variance_errors / s.replications as f64).sqrt();
            assert!((s.mean_errors - 0.2).abs() <= 3.0 * se_mean, "{s:?}");
            assert!(
                (s.variance_errors - base).abs() <= 3.0 * s.se_variance,
                "{s:?} vs {base}"
            );
        }
    }

    #[test]
    fn sur_deterministic_and_validated() {
        let sigma = CorrelationMatrix::equicorrelated(3, 0.4).unwrap();
        let opts = SimOptions { replications: 200, seed: 31, workers: Some(2) };
        let rules = vec![
            SimRule::gluttony(),
            SimRule { label: "egalitarian".into(), kind: RuleKind::Egalitarian { n_sub: 50 } },
        ];
        let a = sur_portfolio(500, &level05(), &rules, &sigma, &sigma, &opts).unwrap();
        let b = sur_portfolio(500, &level05(), &rules, &sigma, &sigma, &opts).unwrap();
        assert_eq!(a, b);
        let other = CorrelationMatrix::identity(4);
        assert!(matches!(
            sur_portfolio(500, &level05(), &rules, &sigma, &other, &opts),
            Err(SimError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn clt_check_degenerate_geometries() {
        let opts = SimOptions { replications: 20_000, seed: 777, workers: None };
        // Identical subsets: the two standardized means are the same statistic.
        let set: Vec<u32> = (0..200).collect();
        let check = clt_joint_cov_check(1000, &[set.clone(), set.clone()], &opts).unwrap();
        assert_abs_diff_eq!(check.empirical_corr(0, 1), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(check.target_corr(0, 1), 1.0, epsilon = 1e-12);
        // Disjoint subsets: independent.
        let a: Vec<u32> = (0..200).collect();
        let b: Vec<u32> = (200..400).collect();
        let check = clt_joint_cov_check(1000, &[a, b], &opts).unwrap();
        assert_eq!(check.target_corr(0, 1), 0.0);
        assert!(
            check.empirical_corr(0, 1).abs() <= 3.0 / (opts.replications as f64).sqrt(),
            "corr = {}",
            check.empirical_corr(0, 1)
        );
        assert!(check.max_abs_dev <= 4.0, "max dev {}", check.max_abs_dev);
    }

    #[test]
    fn clt_check_half_overlap() {
        // Equal sizes n with overlap n/2: target correlation 1/2, and the
        // correlation bound dominates the empirical correlation.
        let opts = SimOptions { replications: 40_000, seed: 424_242, workers: None };
        let a: Vec<u32> = (0..400).collect();
        let b: Vec<u32> = (200..600).collect();
        let check = clt_joint_cov_check(2000, &[a, b], &opts).unwrap();
        assert_abs_diff_eq!(check.target_corr(0, 1), 0.5, epsilon = 1e-12);
        let se = (1.0 - 0.25) / (opts.replications as f64).sqrt();
        let emp = check.empirical_corr(0, 1);
        assert!((emp - 0.5).abs() <= 3.0 * se, "corr {emp}");
        assert!(emp.abs() <= check.target_corr(0, 1) + 3.0 * se);
    }

    #[test]
    fn clt_check_rejects_empty_subsets() {
        let opts = SimOptions { replications: 10, seed: 1, workers: None };
        assert!(matches!(
            clt_joint_cov_check(100, &[vec![], vec![0, 1]], &opts),
            Err(SimError::EmptySubset { index: 0 })
        ));
        assert!(clt_joint_cov_check(100, &[], &opts).is_err());
    }

    #[test]
    fn cumulant_scales() {
        assert_abs_diff_eq!(cumulant_scale(12345, 0.37, 2), 0.37, epsilon = 1e-15);
        assert_abs_diff_eq!(cumulant_scale(100, 0.25, 3), 0.0125, epsilon = 1e-15);
        // Identical subsets of size n at order 4: n / n^2 = 1/n.
        let set: Vec<u32> = (0..50).collect();
        let subsets = vec![set.clone(), set.clone(), set.clone(), set];
        assert_abs_diff_eq!(cumulant_scale_exact(&subsets), 1.0 / 50.0, epsilon = 1e-12);
        // Disjoint subsets: zero.
        let a: Vec<u32> = (0..10).collect();
        let b: Vec<u32> = (10..20).collect();
        assert_eq!(cumulant_scale_exact(&[a, b]), 0.0);
    }
}
