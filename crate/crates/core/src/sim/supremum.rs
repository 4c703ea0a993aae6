use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream, CI_LEVEL, STREAM_PATHS};
use crate::error::{Error, Result};
use crate::model::IncrementModel;
use crate::stats::binomial_halfwidth;

const PATH_BATCH: u64 = 1 << 13;

/// First-passage estimate of `P(M > x) = P(μ_x < ∞)` from paths killed at `−K`.
///
/// Killing can only lose successes, so `p_hat` is biased downward, by at most
/// `bias_upper = P(M > x + K)` (supplied through an upper-bound function).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupremumEstimate {
    pub x: f64,
    pub p_hat: f64,
    pub ci_halfwidth: f64,
    pub stop_level_k: f64,
    pub bias_upper: f64,
    pub paths: u64,
}

pub fn direct_sup_tail<B: Fn(f64) -> f64>(
    model: &IncrementModel,
    x: f64,
    stop_level_k: f64,
    n_paths: u64,
    seed: u64,
    bias_fn: B,
) -> Result<SupremumEstimate> {
    if !(stop_level_k.is_finite() && stop_level_k > 0.0) {
        return Err(Error::Parameter(format!(
            "stop level K must be finite and > 0, got {stop_level_k}"
        )));
    }
    if n_paths == 0 {
        return Err(Error::Parameter("n_paths must be positive".into()));
    }
    let bias_upper = bias_fn(x + stop_level_k).max(0.0);
    if x < 0.0 {
        // S_0 = 0 > x, so μ_x = 0.
        return Ok(SupremumEstimate {
            x,
            p_hat: 1.0,
            ci_halfwidth: 0.0,
            stop_level_k,
            bias_upper: 0.0,
            paths: n_paths,
        });
    }

    let batches = n_paths.div_ceil(PATH_BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, STREAM_PATHS, b);
            let count = PATH_BATCH.min(n_paths - b * PATH_BATCH);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut s = 0.0;
                loop {
                    s += model.sample(&mut rng);
                    if s > x {
                        hits += 1;
                        break;
                    }
                    if s <= -stop_level_k {
                        break;
                    }
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    Ok(SupremumEstimate {
        x,
        p_hat: hits as f64 / n_paths as f64,
        ci_halfwidth: binomial_halfwidth(hits, n_paths, CI_LEVEL),
        stop_level_k,
        bias_upper,
        paths: n_paths,
    })
}
