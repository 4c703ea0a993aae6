use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream, CI_LEVEL, STREAM_CYCLES};
use crate::error::{Error, Result};
use crate::model::IncrementModel;
use crate::rng::RngStream;
use crate::stats::{binomial_halfwidth, z_two_sided, Running};

pub const DEFAULT_N_CAP: u64 = 10_000_000;
/// Runs with a larger fraction of truncated cycles are rejected.
pub const MAX_TRUNCATION_FRACTION: f64 = 1e-6;
const CYCLE_BATCH: u64 = 1 << 14;

/// One excursion of the walk above zero.
///
/// `tau = min{n ≥ 1 : S_n ≤ 0}`, `s_tau = S_tau`, `m_tau = max_{0≤n<tau} S_n`.
/// A truncated sample stopped at the step cap before returning to `(−∞, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    pub tau: u64,
    pub s_tau: f64,
    pub m_tau: f64,
    pub truncated: bool,
}

pub fn run_cycle(model: &IncrementModel, rng: &mut RngStream, n_cap: u64) -> CycleSample {
    let n_cap = n_cap.max(1);
    let mut s = 0.0;
    let mut m = 0.0f64;
    let mut n = 0u64;
    loop {
        n += 1;
        s += model.sample(rng);
        if s <= 0.0 {
            return CycleSample {
                tau: n,
                s_tau: s,
                m_tau: m,
                truncated: false,
            };
        }
        m = m.max(s);
        if n >= n_cap {
            return CycleSample {
                tau: n,
                s_tau: s,
                m_tau: m,
                truncated: true,
            };
        }
    }
}

/// Runs `n` cycles in fixed batches and reduces the per-batch accumulators in
/// batch order.
pub fn fold_cycles<A, I, F, M>(
    model: &IncrementModel,
    n: u64,
    n_cap: u64,
    seed: u64,
    init: I,
    fold: F,
    mut merge: M,
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, CycleSample) + Sync,
    M: FnMut(&mut A, A),
{
    let batches = n.div_ceil(CYCLE_BATCH);
    let parts: Vec<A> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, STREAM_CYCLES, b);
            let count = CYCLE_BATCH.min(n - b * CYCLE_BATCH);
            let mut acc = init();
            for _ in 0..count {
                fold(&mut acc, run_cycle(model, &mut rng, n_cap));
            }
            acc
        })
        .collect();
    let mut out = init();
    for p in parts {
        merge(&mut out, p);
    }
    out
}

pub fn sample_cycles(model: &IncrementModel, n: u64, n_cap: u64, seed: u64) -> Vec<CycleSample> {
    fold_cycles(
        model,
        n,
        n_cap,
        seed,
        Vec::new,
        |v, c| v.push(c),
        |out, part| out.extend(part),
    )
}

/// Means and 99% half-widths for `τ` and `S_τ`, with the Wald residual
/// `|E S_τ + a E τ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub tau_mean: f64,
    pub tau_ci: f64,
    pub stau_mean: f64,
    pub stau_ci: f64,
    pub wald_residual: f64,
    pub wald_ci: f64,
    pub cycles: u64,
    pub truncated: u64,
}

impl TauStats {
    pub fn wald_within_ci(&self) -> bool {
        self.wald_residual <= self.wald_ci
    }

    pub fn truncation_fraction(&self) -> f64 {
        self.truncated as f64 / (self.cycles + self.truncated) as f64
    }

    /// Errors when truncation exceeds [`MAX_TRUNCATION_FRACTION`].
    pub fn check_truncation(&self) -> Result<()> {
        let f = self.truncation_fraction();
        if f > MAX_TRUNCATION_FRACTION {
            Err(Error::CheckFailed(format!(
                "truncated cycle fraction {f:e} exceeds {MAX_TRUNCATION_FRACTION:e}"
            )))
        } else {
            Ok(())
        }
    }
}

/// Streaming reduction of cycle samples: `τ`/`S_τ` moments and exceedance
/// counts of `M_τ` over fixed thresholds. Truncated cycles are counted and
/// otherwise ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSummary {
    a: f64,
    tau: Running,
    stau: Running,
    wald: Running,
    truncated: u64,
    thresholds: Vec<f64>,
    exceed: Vec<u64>,
}

impl CycleSummary {
    pub fn new(a: f64, thresholds: &[f64]) -> Self {
        CycleSummary {
            a,
            tau: Running::new(),
            stau: Running::new(),
            wald: Running::new(),
            truncated: 0,
            thresholds: thresholds.to_vec(),
            exceed: vec![0; thresholds.len()],
        }
    }

    pub fn push(&mut self, c: &CycleSample) {
        if c.truncated {
            self.truncated += 1;
            return;
        }
        let tau = c.tau as f64;
        self.tau.push(tau);
        self.stau.push(c.s_tau);
        self.wald.push(c.s_tau + self.a * tau);
        for (e, &x) in self.exceed.iter_mut().zip(&self.thresholds) {
            if c.m_tau > x {
                *e += 1;
            }
        }
    }

    pub fn merge(&mut self, other: CycleSummary) {
        self.tau.merge(&other.tau);
        self.stau.merge(&other.stau);
        self.wald.merge(&other.wald);
        self.truncated += other.truncated;
        for (e, o) in self.exceed.iter_mut().zip(other.exceed) {
            *e += o;
        }
    }

    /// Simulates `n` cycles without retaining them.
    pub fn collect(
        model: &IncrementModel,
        n: u64,
        n_cap: u64,
        seed: u64,
        thresholds: &[f64],
    ) -> Self {
        let a = model.tail_moments().a;
        fold_cycles(
            model,
            n,
            n_cap,
            seed,
            || CycleSummary::new(a, thresholds),
            |acc, c| acc.push(&c),
            |out, part| out.merge(part),
        )
    }

    pub fn complete(&self) -> u64 {
        self.tau.count()
    }

    pub fn truncated(&self) -> u64 {
        self.truncated
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn tau_stats(&self) -> Result<TauStats> {
        let n = self.tau.count();
        if n < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 untruncated cycles, got {n}"
            )));
        }
        let z = z_two_sided(CI_LEVEL);
        Ok(TauStats {
            tau_mean: self.tau.mean(),
            tau_ci: z * self.tau.std_error(),
            stau_mean: self.stau.mean(),
            stau_ci: z * self.stau.std_error(),
            wald_residual: self.wald.mean().abs(),
            wald_ci: z * self.wald.std_error(),
            cycles: n,
            truncated: self.truncated,
        })
    }

    /// `(P̂(M_τ > x_i), 99% half-width)` for threshold `i`.
    pub fn mtau_tail(&self, i: usize) -> (f64, f64) {
        let n = self.tau.count();
        let k = self.exceed[i];
        (k as f64 / n as f64, binomial_halfwidth(k, n, CI_LEVEL))
    }
}

pub fn tau_stats(samples: &[CycleSample], model: &IncrementModel) -> Result<TauStats> {
    let mut acc = CycleSummary::new(model.tail_moments().a, &[]);
    for c in samples {
        acc.push(c);
    }
    if acc.complete() == 0 {
        return Err(Error::Parameter("no untruncated cycles".into()));
    }
    acc.tau_stats()
}

/// Fraction of untruncated cycles with `M_τ > x`, and its 99% half-width.
pub fn mtau_tail(samples: &[CycleSample], x: f64) -> Result<(f64, f64)> {
    let mut n = 0u64;
    let mut k = 0u64;
    for c in samples.iter().filter(|c| !c.truncated) {
        n += 1;
        if c.m_tau > x {
            k += 1;
        }
    }
    if n == 0 {
        return Err(Error::Parameter("no untruncated cycles".into()));
    }
    Ok((k as f64 / n as f64, binomial_halfwidth(k, n, CI_LEVEL)))
}

/// Sample mean of `exp(h0 S_τ)` over untruncated cycles.
pub fn exp_moment_stau(samples: &[CycleSample], h0: f64) -> Result<f64> {
    if !(h0 >= 0.0) {
        return Err(Error::Parameter(format!("h0 must be >= 0, got {h0}")));
    }
    let r: Running = samples
        .iter()
        .filter(|c| !c.truncated)
        .map(|c| (h0 * c.s_tau).exp())
        .collect();
    if r.count() == 0 {
        return Err(Error::Parameter("no untruncated cycles".into()));
    }
    Ok(r.mean())
}
