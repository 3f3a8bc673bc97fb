//! Overlap tail probabilities for egalitarian subsampling.
//!
//! Two studies that each draw a uniform subsample of size n from a pool of
//! N observations share |D_i ∩ D_j| ~ Hypergeometric(N, n, n) observations.
//! A pairwise correlation of at least ρ₀ requires an overlap of at least
//! N·r·ρ₀/κ, where r = n/N and κ bounds the statistic association. This
//! module provides the exact hypergeometric tail for that event plus three
//! closed-form bounds (Chernoff, Hoeffding, Markov) that stay usable when
//! exact summation is not, all evaluated in log space so datasets up to
//! N = 1e9 neither overflow nor underflow.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Largest population for which the exact tail is summed term by term.
pub const EXACT_ENUMERATION_LIMIT: u64 = 10_000;

/// Errors from geometry validation and exact summation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TailError {
    /// Subsample larger than the population, or an empty population.
    #[error("subsample size {n_sub} incompatible with population {n_total}")]
    InvalidSizes { n_total: u64, n_sub: u64 },
    /// Association bound outside (0, 1].
    #[error("kappa must lie in (0, 1], got {0}")]
    InvalidKappa(f64),
    /// Correlation threshold outside (0, 1].
    #[error("rho0 must lie in (0, 1], got {0}")]
    InvalidRho0(f64),
    /// Exact summation refused above [`EXACT_ENUMERATION_LIMIT`].
    #[error(
        "exact tail infeasible for N = {n_total} (limit {limit}); use the closed-form bounds"
    )]
    ExactInfeasible { n_total: u64, limit: u64 },
}

/// Overlap geometry of a pair of equal-size uniform subsamples.
///
/// Holds the population size N, the per-study subsample size n = N·r, the
/// association bound κ ∈ (0, 1] on |E[ψ_i ψ_j]| (1 when nothing is known),
/// and the correlation threshold ρ₀ whose exceedance probability is bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapGeometry {
    n_total: u64,
    n_sub: u64,
    kappa: f64,
    rho0: f64,
}

impl OverlapGeometry {
    /// Validates N ≥ n ≥ 1, κ ∈ (0, 1], ρ₀ ∈ (0, 1].
    pub fn new(n_total: u64, n_sub: u64, kappa: f64, rho0: f64) -> Result<Self, TailError> {
        if n_total == 0 || n_sub == 0 || n_sub > n_total {
            return Err(TailError::InvalidSizes { n_total, n_sub });
        }
        if kappa.is_nan() || kappa <= 0.0 || kappa > 1.0 {
            return Err(TailError::InvalidKappa(kappa));
        }
        if rho0.is_nan() || rho0 <= 0.0 || rho0 > 1.0 {
            return Err(TailError::InvalidRho0(rho0));
        }
        Ok(Self { n_total, n_sub, kappa, rho0 })
    }

    /// Population size N.
    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    /// Per-study subsample size n.
    pub fn n_sub(&self) -> u64 {
        self.n_sub
    }

    /// Association bound κ.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Correlation threshold ρ₀.
    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// Subsample fraction r = n/N.
    pub fn rate(&self) -> f64 {
        self.n_sub as f64 / self.n_total as f64
    }

    /// Overlap-count threshold t = N·r·ρ₀/κ for the event {|ρ| ≥ ρ₀}.
    pub fn threshold_count(&self) -> f64 {
        self.n_sub as f64 * self.rho0 / self.kappa
    }

    /// Chernoff margin δ = ρ₀/(κ·r) − 1; the exponential bounds are vacuous
    /// when δ ≤ 0.
    pub fn chernoff_delta(&self) -> f64 {
        self.rho0 / (self.kappa * self.rate()) - 1.0
    }
}

/// E[|D_i ∩ D_j|] = N·r².
pub fn expected_overlap(geom: &OverlapGeometry) -> f64 {
    geom.n_sub as f64 * geom.n_sub as f64 / geom.n_total as f64
}

/// Multiplicative Chernoff bound on P(|D_i ∩ D_j| ≥ N·r·ρ₀/κ):
/// (e^δ / (1+δ)^(1+δ))^(N r²), clipped to one when δ ≤ 0.
pub fn chernoff_bound(geom: &OverlapGeometry) -> f64 {
    let delta = geom.chernoff_delta();
    if delta <= 0.0 {
        return 1.0;
    }
    let log_bound = expected_overlap(geom) * (delta - (1.0 + delta) * delta.ln_1p());
    log_bound.exp().min(1.0)
}

/// Hoeffding bound exp(−2 δ² N r³), clipped to one when δ ≤ 0.
pub fn hoeffding_bound(geom: &OverlapGeometry) -> f64 {
    let delta = geom.chernoff_delta();
    if delta <= 0.0 {
        return 1.0;
    }
    let r = geom.rate();
    let log_bound = -2.0 * delta * delta * geom.n_total as f64 * r * r * r;
    log_bound.exp().min(1.0)
}

/// Markov bound min(1, κ·r/ρ₀).
pub fn markov_bound(geom: &OverlapGeometry) -> f64 {
    (geom.kappa * geom.rate() / geom.rho0).min(1.0)
}

/// ln C(n, k) via log-gamma.
fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// ln P(|D_i ∩ D_j| = k) for the Hypergeometric(N, n, n) overlap law.
fn ln_overlap_pmf(geom: &OverlapGeometry, k: u64) -> f64 {
    let n = geom.n_total;
    let m = geom.n_sub;
    ln_choose(m, k) + ln_choose(n - m, m - k) - ln_choose(n, m)
}

/// Exact tail P(|D_i ∩ D_j| ≥ ⌈t⌉) by direct pmf summation.
///
/// Refuses populations above [`EXACT_ENUMERATION_LIMIT`]; the bounds remain
/// available at any size.
pub fn hypergeom_tail_exact(geom: &OverlapGeometry) -> Result<f64, TailError> {
    if geom.n_total > EXACT_ENUMERATION_LIMIT {
        return Err(TailError::ExactInfeasible {
            n_total: geom.n_total,
            limit: EXACT_ENUMERATION_LIMIT,
        });
    }
    let t = geom.threshold_count();
    Ok(overlap_tail_at(geom, t))
}

/// P(|D_i ∩ D_j| ≥ ⌈t⌉) for an arbitrary real threshold t.
fn overlap_tail_at(geom: &OverlapGeometry, t: f64) -> f64 {
    let hi = geom.n_sub; // overlap cannot exceed the subsample size
    let support_lo = geom.n_sub.saturating_sub(geom.n_total - geom.n_sub);
    if t > hi as f64 {
        return 0.0;
    }
    let k0 = (t.ceil().max(0.0) as u64).max(support_lo);
    if k0 <= support_lo {
        return 1.0; // the event covers the whole support
    }
    let mut tail = 0.0;
    for k in k0..=hi {
        tail += ln_overlap_pmf(geom, k).exp();
    }
    tail.min(1.0)
}

/// Report combining the exact law (when feasible) with all three bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TailBoundReport {
    /// Overlap-count threshold t = N·r·ρ₀/κ.
    pub threshold_count: f64,
    /// Chernoff margin δ = ρ₀/(κ·r) − 1.
    pub delta: f64,
    /// Multiplicative Chernoff bound.
    pub p_chernoff: f64,
    /// Hoeffding bound.
    pub p_hoeffding: f64,
    /// Markov bound.
    pub p_markov: f64,
    /// min of the three bounds, clipped to [0, 1].
    pub p_mixed: f64,
    /// Exact hypergeometric tail, present when N ≤ [`EXACT_ENUMERATION_LIMIT`].
    pub p_exact: Option<f64>,
}

/// Evaluates every bound (and the exact tail when feasible) for a geometry.
pub fn tail_report(geom: &OverlapGeometry) -> TailBoundReport {
    let p_chernoff = chernoff_bound(geom);
    let p_hoeffding = hoeffding_bound(geom);
    let p_markov = markov_bound(geom);
    let p_mixed = p_chernoff.min(p_hoeffding).min(p_markov).clamp(0.0, 1.0);
    TailBoundReport {
        threshold_count: geom.threshold_count(),
        delta: geom.chernoff_delta(),
        p_chernoff,
        p_hoeffding,
        p_markov,
        p_mixed,
        p_exact: hypergeom_tail_exact(geom).ok(),
    }
}

/// min(Chernoff, Hoeffding, Markov): the tail weight entering the
/// expected-variance and EVR bounds.
pub fn p_mixed(geom: &OverlapGeometry) -> f64 {
    tail_report(geom).p_mixed
}
