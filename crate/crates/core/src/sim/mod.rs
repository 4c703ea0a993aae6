//! Monte Carlo engines for the walk `S_n = ξ_1 + … + ξ_n`.
//!
//! Every engine splits its work into fixed-size units (replicas, batches of
//! cycles or paths, drift states), each with its own [`RngStream`] keyed by
//! the unit index. Units run in parallel and are reduced in index order, so
//! results are bit-identical for a given seed regardless of thread count.

mod cycle;
mod drift_check;
mod lindley;
pub mod spill;
mod supremum;

pub use cycle::{
    exp_moment_stau, fold_cycles, mtau_tail, run_cycle, sample_cycles, tau_stats, CycleSample,
    CycleSummary, TauStats, DEFAULT_N_CAP, MAX_TRUNCATION_FRACTION,
};
pub use drift_check::{empirical_drift_check, DriftCheckReport, DriftCheckRow};
pub use lindley::{iglehart_residual, lindley_tail, IglehartCheck, LindleyEstimate};
pub use supremum::{direct_sup_tail, SupremumEstimate};

use crate::rng::RngStream;

/// Confidence level for all reported Monte Carlo intervals.
pub const CI_LEVEL: f64 = 0.99;

// Stream-id namespaces keep engines sharing one seed independent.
pub(crate) const STREAM_LINDLEY: u64 = 1 << 48;
pub(crate) const STREAM_CYCLES: u64 = 2 << 48;
pub(crate) const STREAM_PATHS: u64 = 3 << 48;
pub(crate) const STREAM_DRIFT: u64 = 4 << 48;

pub(crate) fn stream(seed: u64, namespace: u64, index: u64) -> RngStream {
    RngStream::new(seed, namespace | index)
}
