use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream, STREAM_DRIFT};
use crate::error::{Error, Result};
use crate::model::IncrementModel;
use crate::potential::{geometric_grid, CertificateKind, MartingaleCertificate, TailPotential};
use crate::stats::Running;

/// Standard errors beyond which a margin of the wrong sign counts as a violation.
pub const VIOLATION_Z: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCheckRow {
    pub t: f64,
    /// Monte Carlo estimate of the one-step expectation of the potential.
    pub mc_mean: f64,
    pub std_error: f64,
    /// The same expectation from the quadrature drift operator.
    pub quadrature: f64,
    pub potential: f64,
    /// Oriented margin in units of the standard error (≥ 0 is the certified sign).
    pub z_margin: f64,
    /// `(mc_mean − quadrature) / std_error`.
    pub z_quadrature: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCheckReport {
    pub kind: CertificateKind,
    pub epsilon: f64,
    pub draws: u64,
    pub rows: Vec<DriftCheckRow>,
}

impl DriftCheckReport {
    pub fn violations(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.violation).map(|r| r.t).collect()
    }

    /// Errors with the first offending `t` if any state violated the sign.
    pub fn into_result(self) -> Result<Self> {
        match self.rows.iter().find(|r| r.violation) {
            Some(r) => Err(Error::CheckFailed(format!(
                "{} drift violated at t = {} (z = {:.2})",
                self.kind, r.t, r.z_margin
            ))),
            None => Ok(self),
        }
    }
}

/// Samples the one-step drift of the certified potential at `n_states`
/// geometrically spaced states in `[R, t_max]` and compares it with both the
/// potential (sign check) and the quadrature drift operator.
///
/// Above `R` the margin is of order `ε F̄(t)` and is carried by jumps of
/// probability `≈ F̄(t)`, which plain sampling with `n_draws ≪ 1/F̄(t)` never
/// sees. Each state therefore splits `ξ` at `t/2` into two strata of known
/// probability and draws half of the sample from each conditional law
/// (inverse transform on the matching slice of tail levels).
pub fn empirical_drift_check(
    model: &IncrementModel,
    cert: &MartingaleCertificate,
    n_states: usize,
    n_draws: u64,
    seed: u64,
) -> Result<DriftCheckReport> {
    cert.check(model, cert.kind)?;
    if n_states == 0 || n_draws < 4 {
        return Err(Error::Parameter(
            "need at least one state and four draws".into(),
        ));
    }
    let pot = TailPotential::new(*model, cert.c)?;
    let states = geometric_grid(cert.r, cert.t_max, n_states);
    let kind = cert.kind;
    let value = |y: f64| match kind {
        CertificateKind::Sub => pot.g_hat(y),
        CertificateKind::Super => pot.g(y),
    };

    let rows = states
        .par_iter()
        .enumerate()
        .map(|(i, &t)| -> Result<DriftCheckRow> {
            let mut rng = stream(seed, STREAM_DRIFT, i as u64);
            let split = 0.5 * t;
            let p_upper = if model.has_density() { model.tail(split) } else { 0.0 };
            let (mean, se) = if p_upper > 0.0 && p_upper < 1.0 {
                let half = n_draws / 2;
                let mut upper = Running::new();
                let mut lower = Running::new();
                for _ in 0..half {
                    let u = p_upper * rng.open01();
                    upper.push(value(t - model.quantile_of_tail(u))?);
                }
                for _ in half..n_draws {
                    let u = p_upper + (1.0 - p_upper) * rng.open01();
                    lower.push(value(t - model.quantile_of_tail(u))?);
                }
                let p_lower = 1.0 - p_upper;
                let mean = p_upper * upper.mean() + p_lower * lower.mean();
                let var = (p_upper * upper.std_error()).powi(2) + (p_lower * lower.std_error()).powi(2);
                (mean, var.sqrt())
            } else {
                let mut acc = Running::new();
                for _ in 0..n_draws {
                    acc.push(value(t - model.sample(&mut rng))?);
                }
                (acc.mean(), acc.std_error())
            };
            let report = pot.drift_report(kind, t)?;
            let diff = mean - report.potential_value;
            let oriented = match kind {
                CertificateKind::Sub => diff,
                CertificateKind::Super => -diff,
            };
            let z_margin = if se > 0.0 {
                oriented / se
            } else if oriented < 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            Ok(DriftCheckRow {
                t,
                mc_mean: mean,
                std_error: se,
                quadrature: report.drift_value,
                potential: report.potential_value,
                z_margin,
                z_quadrature: (mean - report.drift_value) / se,
                violation: z_margin < -VIOLATION_Z,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DriftCheckReport {
        kind,
        epsilon: cert.epsilon,
        draws: n_draws,
        rows,
    })
}
