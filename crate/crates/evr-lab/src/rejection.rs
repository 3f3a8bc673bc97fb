//! Closed-form error-count calculus for jointly normal two-sided tests
//! under the global null: pairwise joint rejection probabilities, the
//! excess-covariance function R(ρ, c), the variance of the Type I error
//! count for an arbitrary correlation matrix, and the familywise error
//! rate under equicorrelation.

use std::collections::HashMap;
use std::sync::LazyLock;

use thiserror::Error;

use crate::corr::CorrelationMatrix;
use crate::gaussian::{bvn_cdf, std_normal_cdf, std_normal_pdf, std_normal_quantile};
use crate::quad::composite_gauss_legendre;

/// Errors from the rejection calculus.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RejectionError {
    /// Test level outside (0, 1).
    #[error("test level alpha must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    /// Pairwise correlation outside the admissible range of the operation.
    #[error("correlation {0} outside the admissible range {1}")]
    CorrelationOutOfRange(f64, &'static str),
    /// A design must contain at least one test.
    #[error("design must contain at least one test")]
    EmptyDesign,
}

/// A two-sided test level α together with its critical value c = Φ⁻¹(1 − α/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    alpha: f64,
    critical: f64,
}

impl Level {
    /// Builds a level from α ∈ (0, 1).
    pub fn new(alpha: f64) -> Result<Self, RejectionError> {
        if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
            return Err(RejectionError::InvalidLevel(alpha));
        }
        let critical = std_normal_quantile(1.0 - alpha / 2.0)
            .expect("1 - alpha/2 lies in (0,1) when alpha does");
        Ok(Self { alpha, critical })
    }

    /// The two-sided test level α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The critical value c with P(|Z| > c) = α.
    pub fn critical(&self) -> f64 {
        self.critical
    }

    /// Per-test rejection-indicator variance α(1 − α).
    pub fn indicator_variance(&self) -> f64 {
        self.alpha * (1.0 - self.alpha)
    }
}

/// An equicorrelated portfolio: C tests, common pairwise correlation ρ ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquicorrDesign {
    num_tests: usize,
    rho: f64,
    level: Level,
}

impl EquicorrDesign {
    /// Builds a design; `rho` must lie in [0, 1] so the implied matrix is PSD
    /// and the one-factor representation used by the FWER integral exists.
    pub fn new(num_tests: usize, rho: f64, level: Level) -> Result<Self, RejectionError> {
        if num_tests == 0 {
            return Err(RejectionError::EmptyDesign);
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(RejectionError::CorrelationOutOfRange(rho, "[0, 1]"));
        }
        Ok(Self { num_tests, rho, level })
    }

    /// Number of tests C.
    pub fn num_tests(&self) -> usize {
        self.num_tests
    }

    /// Common pairwise correlation.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Test level.
    pub fn level(&self) -> Level {
        self.level
    }
}

/// P(R_i ∩ R_j): probability that two tests with correlation ρ both reject.
///
/// Requires |ρ| < 1; callers needing the ρ → ±1 limit should use α directly.
pub fn joint_rejection_prob(rho: f64, level: &Level) -> Result<f64, RejectionError> {
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(RejectionError::CorrelationOutOfRange(rho, "(-1, 1)"));
    }
    Ok(level.alpha() * level.alpha() + rejection_covariance(rho, level))
}

/// R(ρ, c) = P(R_i ∩ R_j) − α²: the covariance of two rejection indicators.
///
/// Even in ρ, zero at ρ = 0, and equal to α(1 − α) at ρ = ±1 (handled as an
/// explicit branch). NaN propagates.
pub fn rejection_covariance(rho: f64, level: &Level) -> f64 {
    if rho.is_nan() {
        return f64::NAN;
    }
    if rho.abs() >= 1.0 {
        return level.indicator_variance();
    }
    let c = level.critical();
    let phi_c = std_normal_cdf(c);
    let upper = bvn_cdf(c, c, rho).expect("finite c, |rho| < 1");
    let lower = bvn_cdf(c, c, -rho).expect("finite c, |rho| < 1");
    // Rounding can leave a residual of order -1e-16 near rho = 0.
    (2.0 * (upper + lower - 2.0 * phi_c * phi_c)).max(0.0)
}

/// Variance of the Type I error count E = Σ 1_{R_i} under the global null:
/// Cα(1−α) + 2 Σ_{i<j} R(ρ_ij, c).
///
/// R is evaluated once per distinct off-diagonal value, so equicorrelated
/// sweeps touch the bivariate CDF only once per matrix.
pub fn error_count_variance(corr: &CorrelationMatrix, level: &Level) -> f64 {
    let dim = corr.dim();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut pair_sum = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let rho = corr.entry(i, j);
            let r = *cache
                .entry(rho.to_bits())
                .or_insert_with(|| rejection_covariance(rho, level));
            pair_sum += r;
        }
    }
    dim as f64 * level.indicator_variance() + 2.0 * pair_sum
}

/// Error-count variance for an equicorrelated design without materializing
/// the matrix: Cα(1−α) + C(C−1) R(ρ, c).
pub fn error_count_variance_equicorr(design: &EquicorrDesign) -> f64 {
    let c = design.num_tests as f64;
    c * design.level.indicator_variance()
        + c * (c - 1.0) * rejection_covariance(design.rho, &design.level)
}

static FWER_RULE: LazyLock<(Vec<f64>, Vec<f64>)> =
    LazyLock::new(|| composite_gauss_legendre(-8.5, 8.5, 3, 167));

/// Familywise error rate P(∪ R_i) for an equicorrelated portfolio.
///
/// Uses the one-factor representation T_i = √ρ Z + √(1−ρ) ε_i and reduces
/// the C-variate probability to a single smooth integral over the common
/// factor; the integrand tail beyond |z| = 8.5 is below 1e-17.
pub fn fwer_equicorrelated(design: &EquicorrDesign) -> f64 {
    let alpha = design.level.alpha();
    let c = design.level.critical();
    let n = design.num_tests as i32;
    if design.rho == 0.0 {
        return 1.0 - (1.0 - alpha).powi(n);
    }
    if design.rho == 1.0 {
        return alpha;
    }
    let s = design.rho.sqrt();
    let t = (1.0 - design.rho).sqrt();
    let (nodes, weights) = &*FWER_RULE;
    let mut none_reject = 0.0;
    for (&z, &w) in nodes.iter().zip(weights) {
        let hi = std_normal_cdf((c - s * z) / t);
        let lo = std_normal_cdf((-c - s * z) / t);
        none_reject += w * std_normal_pdf(z) * (hi - lo).powi(n);
    }
    (1.0 - none_reject).clamp(0.0, 1.0)
}

/// One point of the FWER-versus-standard-deviation trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwerSdPoint {
    /// Common pairwise correlation.
    pub rho: f64,
    /// Familywise error rate at that correlation.
    pub fwer: f64,
    /// Standard deviation of the error count at that correlation.
    pub sd: f64,
}

/// Tabulates (ρ, FWER, sd of E) along a grid of equicorrelations.
pub fn fwer_sd_curve(
    num_tests: usize,
    level: Level,
    rho_grid: &[f64],
) -> Result<Vec<FwerSdPoint>, RejectionError> {
    rho_grid
        .iter()
        .map(|&rho| {
            let design = EquicorrDesign::new(num_tests, rho, level)?;
            Ok(FwerSdPoint {
                rho,
                fwer: fwer_equicorrelated(&design),
                sd: error_count_variance_equicorr(&design).sqrt(),
            })
        })
        .collect()
}

/// α(1−α)ρ² − R(ρ, c): margin of the quadratic envelope over the excess
/// covariance, for ρ ∈ [0, 1).
pub fn quadratic_bound_gap(rho: f64, level: &Level) -> Result<f64, RejectionError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(RejectionError::CorrelationOutOfRange(rho, "[0, 1)"));
    }
    Ok(level.indicator_variance() * rho * rho - rejection_covariance(rho, level))
}
