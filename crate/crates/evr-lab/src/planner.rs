//! The decision layer: expected-variance and EVR bounds for subsampled
//! portfolios, grid search for the correlation threshold ρ₀, two-sample
//! power and sample-size planning, performance certification, and dataset
//! capacity under an EVR tolerance.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::gaussian::{std_normal_cdf, std_normal_quantile};
use crate::rejection::{rejection_covariance, Level};
use crate::tails::{p_mixed, OverlapGeometry, TailError};

/// Errors from planning operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    /// Zero-sized dataset or portfolio.
    #[error("dataset and portfolio sizes must be positive")]
    EmptyDesign,
    /// Association bound outside (0, 1].
    #[error("kappa must lie in (0, 1], got {0}")]
    InvalidKappa(f64),
    /// Fraction-function parameter not usable.
    #[error("invalid subsample fraction: {0}")]
    InvalidFraction(String),
    /// Operation defined only for a subset of allocation rules.
    #[error("operation requires the {required} rule")]
    WrongRule { required: &'static str },
    /// Grid search has no feasible grid point.
    #[error("rho0 grid is empty: kappa*r = {floor} already reaches 1")]
    EmptyGrid { floor: f64 },
    /// Grid step must be positive.
    #[error("grid step must be positive, got {0}")]
    InvalidGridStep(f64),
    /// Power target outside (alpha, 1).
    #[error("power target must lie in (alpha, 1), got {0}")]
    InvalidPowerTarget(f64),
    /// Requested power cannot be reached at any supported sample size.
    #[error("power target {0} unreachable")]
    UnreachableTarget(f64),
    /// Effect size must be positive.
    #[error("effect size must be positive, got {0}")]
    InvalidEffectSize(f64),
    /// EVR tolerance must be positive.
    #[error("EVR excess tolerance delta must be positive, got {0}")]
    InvalidDelta(f64),
    /// Threshold/criteria parameter out of range.
    #[error("invalid performance criteria: {0}")]
    InvalidCriteria(String),
    /// Propagated overlap-geometry error.
    #[error(transparent)]
    Tail(#[from] TailError),
}

/// How each study obtains its observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationRule {
    /// Every study uses the full dataset.
    Gluttony,
    /// Disjoint equal blocks; requires coordination but zero overlap.
    Splitting,
    /// Independent uniform subsamples of a common size.
    Egalitarian(FractionSpec),
}

/// Per-study subsample size as a fraction of N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FractionSpec {
    /// r(N) = b / √N.
    Coefficient(f64),
    /// Constant rate r ∈ (0, 1].
    FixedRate(f64),
}

/// A portfolio design: dataset size, study count, level, allocation rule,
/// and the association bound κ on |E[ψ_i ψ_j]| (1 when nothing is known;
/// 1/2 for disjoint-treatment common-control contrasts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    n_total: u64,
    num_studies: usize,
    level: Level,
    rule: AllocationRule,
    kappa: f64,
}

impl DesignSpec {
    /// Validates the design. For egalitarian rules the implied subsample
    /// size round(N·r) must be at least one observation.
    pub fn new(
        n_total: u64,
        num_studies: usize,
        level: Level,
        rule: AllocationRule,
        kappa: f64,
    ) -> Result<Self, PlanError> {
        if n_total == 0 || num_studies == 0 {
            return Err(PlanError::EmptyDesign);
        }
        if kappa.is_nan() || kappa <= 0.0 || kappa > 1.0 {
            return Err(PlanError::InvalidKappa(kappa));
        }
        let spec = Self { n_total, num_studies, level, rule, kappa };
        if let AllocationRule::Egalitarian(fraction) = rule {
            let rate = match fraction {
                FractionSpec::Coefficient(b) => {
                    if b.is_nan() || b <= 0.0 {
                        return Err(PlanError::InvalidFraction(format!(
                            "coefficient b must be positive, got {b}"
                        )));
                    }
                    b / (n_total as f64).sqrt()
                }
                FractionSpec::FixedRate(r) => r,
            };
            if rate.is_nan() || rate <= 0.0 || rate > 1.0 {
                return Err(PlanError::InvalidFraction(format!(
                    "implied rate {rate} outside (0, 1]"
                )));
            }
            if spec.subsample_size() == Some(0) {
                return Err(PlanError::InvalidFraction(
                    "implied subsample size rounds to zero".into(),
                ));
            }
        }
        Ok(spec)
    }

    /// Dataset size N.
    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    /// Portfolio size C.
    pub fn num_studies(&self) -> usize {
        self.num_studies
    }

    /// Test level.
    pub fn level(&self) -> Level {
        self.level
    }

    /// Allocation rule.
    pub fn rule(&self) -> AllocationRule {
        self.rule
    }

    /// Association bound κ.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Subsample fraction r(N); `None` unless the rule is egalitarian.
    pub fn rate(&self) -> Option<f64> {
        match self.rule {
            AllocationRule::Egalitarian(FractionSpec::Coefficient(b)) => {
                Some(b / (self.n_total as f64).sqrt())
            }
            AllocationRule::Egalitarian(FractionSpec::FixedRate(r)) => Some(r),
            _ => None,
        }
    }

    /// Implied per-study subsample size round(N·r), clamped to [0, N].
    pub fn subsample_size(&self) -> Option<u64> {
        self.rate()
            .map(|r| ((self.n_total as f64 * r).round() as u64).min(self.n_total))
    }

    /// Overlap geometry of an egalitarian pair at threshold ρ₀.
    pub fn geometry(&self, rho0: f64) -> Result<OverlapGeometry, PlanError> {
        let n_sub = self
            .subsample_size()
            .ok_or(PlanError::WrongRule { required: "egalitarian" })?;
        Ok(OverlapGeometry::new(self.n_total, n_sub, self.kappa, rho0)?)
    }
}

/// Certification thresholds: correlation threshold ρ₀, Type II tolerance
/// β₀, and the expected budget γ of large-correlation pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceCriteria {
    /// Correlation threshold ρ₀ ∈ (0, 1].
    pub rho0: f64,
    /// Type II error tolerance β₀ ∈ (0, 1).
    pub beta0: f64,
    /// Expected number of pairs allowed to exceed ρ₀.
    pub gamma: f64,
}

impl PerformanceCriteria {
    /// Validates the thresholds.
    pub fn new(rho0: f64, beta0: f64, gamma: f64) -> Result<Self, PlanError> {
        if rho0.is_nan() || rho0 <= 0.0 || rho0 > 1.0 {
            return Err(PlanError::InvalidCriteria(format!("rho0 = {rho0}")));
        }
        if beta0.is_nan() || beta0 <= 0.0 || beta0 >= 1.0 {
            return Err(PlanError::InvalidCriteria(format!("beta0 = {beta0}")));
        }
        if gamma.is_nan() || gamma < 0.0 {
            return Err(PlanError::InvalidCriteria(format!("gamma = {gamma}")));
        }
        Ok(Self { rho0, beta0, gamma })
    }
}

/// ε(ρ₀) = α(1−α)·p_mixed + R(ρ₀, c): the per-pair excess-variance weight
/// of an egalitarian design at threshold ρ₀.
pub fn pair_excess(spec: &DesignSpec, rho0: f64) -> Result<f64, PlanError> {
    let geom = spec.geometry(rho0)?;
    let level = spec.level;
    Ok(level.indicator_variance() * p_mixed(&geom) + rejection_covariance(rho0, &level))
}

/// Upper bound on the expected error-count variance E_S[V(E)]:
/// Cα(1−α) + C(C−1)·ε(ρ₀) for egalitarian designs, and the exact
/// independent value Cα(1−α) for splitting.
pub fn expected_variance_bound(
    spec: &DesignSpec,
    crit: &PerformanceCriteria,
) -> Result<f64, PlanError> {
    let c = spec.num_studies as f64;
    let base = c * spec.level.indicator_variance();
    match spec.rule {
        AllocationRule::Splitting => Ok(base),
        AllocationRule::Egalitarian(_) => {
            Ok(base + c * (c - 1.0) * pair_excess(spec, crit.rho0)?)
        }
        AllocationRule::Gluttony => Err(PlanError::WrongRule {
            required: "splitting or egalitarian",
        }),
    }
}

/// Upper bound on the Expected Variance Ratio:
/// EVR ≤ 1 + (C−1)·ε(ρ₀)/(α(1−α)). Exactly 1 for splitting.
pub fn evr_bound(spec: &DesignSpec, crit: &PerformanceCriteria) -> Result<f64, PlanError> {
    let c = spec.num_studies as f64;
    Ok(expected_variance_bound(spec, crit)? / (c * spec.level.indicator_variance()))
}

/// Result of the ρ₀ grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rho0Search {
    /// Minimizing threshold (smallest grid point on ties).
    pub rho0: f64,
    /// Minimum per-pair excess ε(ρ₀).
    pub epsilon: f64,
}

/// Grid search for the ρ₀ minimizing ε(ρ₀) over {κr + step, κr + 2·step, …, 1}.
///
/// ε trades the exponentially decaying tail weight against the quadratically
/// growing excess covariance; ties break toward the smallest ρ₀, so the
/// result is independent of evaluation order.
pub fn optimize_rho0(spec: &DesignSpec, grid_step: f64) -> Result<Rho0Search, PlanError> {
    if grid_step.is_nan() || grid_step <= 0.0 {
        return Err(PlanError::InvalidGridStep(grid_step));
    }
    let rate = spec
        .rate()
        .ok_or(PlanError::WrongRule { required: "egalitarian" })?;
    let floor = spec.kappa * rate;
    if floor + grid_step > 1.0 {
        return Err(PlanError::EmptyGrid { floor });
    }
    let mut best: Option<Rho0Search> = None;
    let mut k = 1u64;
    loop {
        let rho0 = floor + k as f64 * grid_step;
        if rho0 > 1.0 + 1e-12 {
            break;
        }
        let epsilon = pair_excess(spec, rho0.min(1.0))?;
        if best.is_none_or(|b| epsilon < b.epsilon) {
            best = Some(Rho0Search { rho0: rho0.min(1.0), epsilon });
        }
        k += 1;
    }
    best.ok_or(PlanError::EmptyGrid { floor })
}

/// CDF of the noncentral t distribution (Lenth's incomplete-beta series,
/// summed outward from the dominant Poisson index so that even large
/// noncentrality parameters stay in floating-point range).
pub(crate) fn noncentral_t_cdf(t: f64, df: f64, delta: f64) -> f64 {
    debug_assert!(df > 0.0);
    if t.is_nan() || delta.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    if t < 0.0 {
        return 1.0 - noncentral_t_cdf(-t, df, -delta);
    }
    let base = std_normal_cdf(-delta);
    if t == 0.0 {
        return base;
    }
    let x = t * t / (t * t + df);
    let b = 0.5 * df;
    let lambda = 0.5 * delta * delta;
    if lambda == 0.0 {
        return base + 0.5 * beta_reg(0.5, b, x);
    }
    if lambda > 1e6 {
        // Far outside the series' practical range; at two-sample scales a
        // noncentrality this large comes with an enormous df, where the
        // moment-matched normal approximation is already exact to within
        // the series tolerance.
        let approx = (t * (1.0 - 0.25 / df) - delta) / (1.0 + 0.5 * t * t / df).sqrt();
        return std_normal_cdf(approx);
    }
    let ln_lambda = lambda.ln();
    let j0 = lambda.floor();
    // Poisson weights p_j = e^{-λ} λ^j / j! and the companion
    // q_j = e^{-λ} λ^j δ / (√2 Γ(j + 3/2)), evaluated in log space at the
    // modal index and recurred outward in both directions. The incomplete
    // beta factors are bounded by one, so the remaining tail after index j
    // is bounded by the geometric envelope of the weights; the loops stop
    // only once that envelope is negligible, which stays sound even when
    // the per-term beta factors vary by many orders of magnitude.
    let ln_p0 = -lambda + j0 * ln_lambda - ln_gamma(j0 + 1.0);
    let ln_q0 = -lambda + j0 * ln_lambda + delta.abs().ln() - 0.5 * std::f64::consts::LN_2
        - ln_gamma(j0 + 1.5);
    let q_sign = delta.signum();
    let term = |p: f64, q: f64, j: f64| p * beta_reg(j + 0.5, b, x) + q * beta_reg(j + 1.0, b, x);

    let mut sum = 0.0;
    // Upward from the mode: weight ratio λ/(j+1) < 1 past the mode.
    let (mut p, mut q) = (ln_p0.exp(), q_sign * ln_q0.exp());
    let mut j = j0;
    loop {
        sum += term(p, q, j);
        let ratio = lambda / (j + 1.0);
        if ratio < 1.0 {
            let envelope = (p + q.abs()) * ratio / (1.0 - ratio);
            if envelope < 1e-18 * (1.0 + sum.abs()) {
                break;
            }
        }
        p *= lambda / (j + 1.0);
        q *= lambda / (j + 1.5);
        j += 1.0;
    }
    // Downward from the mode: weight ratio j/λ < 1 below the mode.
    let (mut p, mut q) = (ln_p0.exp(), q_sign * ln_q0.exp());
    let mut j = j0;
    while j >= 1.0 {
        let ratio = j / lambda;
        if ratio < 1.0 {
            let envelope = (p + q.abs()) * ratio / (1.0 - ratio);
            if envelope < 1e-18 * (1.0 + sum.abs()) {
                break;
            }
        }
        p *= j / lambda;
        q *= (j + 0.5) / lambda;
        j -= 1.0;
        sum += term(p, q, j);
    }
    (base + 0.5 * sum).clamp(0.0, 1.0)
}

/// Power of a balanced two-sided two-sample mean contrast at Cohen's d,
/// computed from the noncentral t distribution with 2n−2 degrees of freedom.
///
/// Requires at least two observations per arm (the test needs a variance
/// estimate); below that the power is reported as zero.
pub fn power_two_sample(effect_size: f64, level: &Level, n_per_arm: u64) -> f64 {
    if n_per_arm < 2 {
        return 0.0;
    }
    power_two_sample_unbalanced(effect_size, level, n_per_arm, n_per_arm)
}

/// Power of the two-sided two-sample contrast with unequal arm sizes.
pub fn power_two_sample_unbalanced(effect_size: f64, level: &Level, n1: u64, n2: u64) -> f64 {
    if n1 == 0 || n2 == 0 || n1 + n2 < 3 {
        return 0.0;
    }
    let df = (n1 + n2 - 2) as f64;
    let ncp = effect_size / (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();
    // Past ~1e7 degrees of freedom the t quantile differs from the normal
    // one by under 1e-7 ulp-scale corrections, and the root finder behind
    // the exact quantile becomes unreliable.
    let t_crit = if df > 1e7 {
        std_normal_quantile(1.0 - level.alpha() / 2.0).expect("level alpha lies in (0,1)")
    } else {
        StudentsT::new(0.0, 1.0, df)
            .expect("df >= 1")
            .inverse_cdf(1.0 - level.alpha() / 2.0)
    };
    (1.0 - noncentral_t_cdf(t_crit, df, ncp) + noncentral_t_cdf(-t_crit, df, ncp))
        .clamp(0.0, 1.0)
}

/// A balanced power query: effect size (Cohen's d), level, and per-arm n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerQuery {
    /// Standardized effect size, must be positive.
    pub effect_size: f64,
    /// Test level.
    pub level: Level,
    /// Observations per arm.
    pub n_per_arm: u64,
}

impl PowerQuery {
    /// Validates the query.
    pub fn new(effect_size: f64, level: Level, n_per_arm: u64) -> Result<Self, PlanError> {
        if effect_size.is_nan() || effect_size <= 0.0 {
            return Err(PlanError::InvalidEffectSize(effect_size));
        }
        Ok(Self { effect_size, level, n_per_arm })
    }

    /// Evaluates the power.
    pub fn power(&self) -> f64 {
        power_two_sample(self.effect_size, &self.level, self.n_per_arm)
    }
}

/// Smallest per-arm sample size reaching `power_target` for a balanced
/// two-sample contrast at `effect_size`. The search floor is two
/// observations per arm, the smallest size at which the test exists.
pub fn min_sample_size(
    effect_size: f64,
    level: &Level,
    power_target: f64,
) -> Result<u64, PlanError> {
    if effect_size.is_nan() || effect_size <= 0.0 {
        return Err(PlanError::InvalidEffectSize(effect_size));
    }
    if power_target.is_nan() || power_target <= level.alpha() || power_target >= 1.0 {
        return Err(PlanError::InvalidPowerTarget(power_target));
    }
    let power = |n: u64| power_two_sample(effect_size, level, n);
    let mut hi = 2u64;
    while power(hi) < power_target {
        hi = hi.saturating_mul(2);
        if hi > 1 << 40 {
            return Err(PlanError::UnreachableTarget(power_target));
        }
    }
    let mut lo = hi / 2; // power(lo) < target (or lo < 2)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if power(mid) >= power_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Outcome of a performance certification.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    /// C(C−1)/2 · P(|ρ| ≥ ρ₀): expected large-correlation pairs.
    pub large_corr_pairs_expected: f64,
    /// Budget γ those pairs must stay within.
    pub large_corr_budget: f64,
    /// Clause (i): pair budget respected.
    pub large_corr_ok: bool,
    /// Per-study (per-arm) allocation size used for the power clause.
    pub per_study_size: u64,
    /// Achieved power at that size.
    pub power_achieved: f64,
    /// Required power 1 − β₀.
    pub power_required: f64,
    /// Clause (ii): every study adequately powered.
    pub power_ok: bool,
    /// Overall certification.
    pub pass: bool,
}

/// Certifies a design against (ρ₀, β₀, γ): the expected number of pairs
/// with |ρ| ≥ ρ₀ must stay within γ, and every study must be powered to
/// 1 − β₀ at the given effect size.
pub fn certify_performant(
    spec: &DesignSpec,
    crit: &PerformanceCriteria,
    effect_size: f64,
) -> Result<Certification, PlanError> {
    if effect_size.is_nan() || effect_size <= 0.0 {
        return Err(PlanError::InvalidEffectSize(effect_size));
    }
    let pair_prob = match spec.rule {
        // Disjoint blocks: overlap is identically zero.
        AllocationRule::Splitting => 0.0,
        AllocationRule::Egalitarian(_) => p_mixed(&spec.geometry(crit.rho0)?),
        // Full overlap gives no tail decay; only the vacuous bound holds.
        AllocationRule::Gluttony => 1.0,
    };
    let c = spec.num_studies as f64;
    let pairs = 0.5 * c * (c - 1.0);
    let large_corr_pairs_expected = pairs * pair_prob;
    let per_study_size = match spec.rule {
        AllocationRule::Gluttony => spec.n_total,
        AllocationRule::Splitting => spec.n_total / spec.num_studies as u64,
        AllocationRule::Egalitarian(_) => spec.subsample_size().unwrap_or(0),
    };
    let power_achieved = power_two_sample(effect_size, &spec.level, per_study_size);
    let power_required = 1.0 - crit.beta0;
    let large_corr_ok = large_corr_pairs_expected <= crit.gamma;
    let power_ok = power_achieved >= power_required;
    Ok(Certification {
        large_corr_pairs_expected,
        large_corr_budget: crit.gamma,
        large_corr_ok,
        per_study_size,
        power_achieved,
        power_required,
        power_ok,
        pass: large_corr_ok && power_ok,
    })
}

/// Which constraint ended up limiting the study count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityBinding {
    /// The EVR tolerance bound.
    Evr,
    /// The per-study sample-size floor.
    SampleSize,
}

/// How to pick ρ₀ for capacity planning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho0Choice {
    /// Use a caller-chosen threshold.
    Fixed(f64),
    /// Grid-search the minimizing threshold at the given step.
    Optimized {
        /// Grid step for the search.
        grid_step: f64,
    },
}

/// Capacity of a dataset under a rule: the largest C with EVR ≤ 1 + δ and
/// per-study allocation of at least `min_per_study` observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityResult {
    /// Largest admissible study count (0 when the size floor fails).
    pub max_studies: u64,
    /// EVR excess tolerance δ.
    pub delta: f64,
    /// Threshold used for the tail/excess split (egalitarian only).
    pub rho0_used: Option<f64>,
    /// Per-pair excess ε(ρ₀); zero for splitting.
    pub epsilon: f64,
    /// Binding constraint.
    pub binding: CapacityBinding,
}

/// Computes capacity. Splitting supports ⌊N/M⌋ studies (sample size binds);
/// egalitarian subsampling supports 1 + ⌊δ·α(1−α)/ε(ρ₀)⌋ studies provided
/// the common subsample clears the size floor — an infeasible floor is
/// reported as capacity zero rather than silently dropped.
pub fn capacity(
    spec: &DesignSpec,
    delta: f64,
    rho0: Rho0Choice,
    min_per_study: u64,
) -> Result<CapacityResult, PlanError> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(PlanError::InvalidDelta(delta));
    }
    match spec.rule {
        AllocationRule::Splitting => Ok(CapacityResult {
            max_studies: spec
                .n_total
                .checked_div(min_per_study)
                .unwrap_or(spec.n_total),
            delta,
            rho0_used: None,
            epsilon: 0.0,
            binding: CapacityBinding::SampleSize,
        }),
        AllocationRule::Egalitarian(_) => {
            let n_sub = spec.subsample_size().expect("egalitarian rule");
            let (rho0_used, epsilon) = match rho0 {
                Rho0Choice::Fixed(r) => (r, pair_excess(spec, r)?),
                Rho0Choice::Optimized { grid_step } => {
                    let search = optimize_rho0(spec, grid_step)?;
                    (search.rho0, search.epsilon)
                }
            };
            if n_sub < min_per_study {
                return Ok(CapacityResult {
                    max_studies: 0,
                    delta,
                    rho0_used: Some(rho0_used),
                    epsilon,
                    binding: CapacityBinding::SampleSize,
                });
            }
            let max_studies = 1 + (delta * spec.level.indicator_variance() / epsilon) as u64;
            Ok(CapacityResult {
                max_studies,
                delta,
                rho0_used: Some(rho0_used),
                epsilon,
                binding: CapacityBinding::Evr,
            })
        }
        AllocationRule::Gluttony => Err(PlanError::WrongRule {
            required: "splitting or egalitarian",
        }),
    }
}
