//! Variance analysis and capacity planning for portfolios of hypothesis
//! tests that share a single dataset.
//!
//! When many studies draw observations from one dataset, their test
//! statistics become correlated through data overlap. The expected number
//! of Type I errors under the global null is unaffected, but the variance
//! of the error count is not: correlated tests concentrate probability on
//! the event of many simultaneous false positives. This crate provides
//!
//! * closed-form error-count variance and familywise error rate for
//!   jointly normal test statistics ([`rejection`]),
//! * exact hypergeometric overlap laws and Chernoff/Hoeffding/Markov tail
//!   bounds on the probability of large pairwise overlaps ([`tails`]),
//! * executable allocation procedures: uniform data splitting and seeded
//!   egalitarian subsampling ([`allocation`]),
//! * expected-variance-ratio (EVR) bounds, power and sample-size
//!   calculations, and dataset capacity planning ([`planner`]),
//! * correlation-matrix ingestion and factorization ([`corr`]),
//! * replicated Monte Carlo error-count simulations ([`sim`]), and
//! * table/figure data builders used by the `evr-lab` CLI ([`report`]).

pub mod allocation;
pub mod corr;
pub mod gaussian;
pub mod planner;
pub mod rejection;
pub mod report;
pub mod sim;
pub mod tails;

mod quad;

pub use gaussian::{bvn_cdf, std_normal_cdf, std_normal_quantile, BvnQuery};
pub use rejection::Level;
