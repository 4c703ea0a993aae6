//! Asymptotic and non-asymptotic bounds on `P(M > x)` and `P(M_τ > x)`.
//!
//! With `(ε, R)` from a submartingale certificate and `(ε, R)` plus an
//! auxiliary level `r` from a supermartingale certificate:
//!
//! ```text
//! F̄_s(x+R)/(a+ε)  ≤  P(M > x)  ≤  F̄_s(x−R−r)/(a−ε)          (x > R + r)
//! F̄_s(x)/(a + F̄_s(x))  ≤  P(M > x)
//! (F̄_s(x+R) − E F̄_s(x+R−S_τ))/(a+ε)  ≤  P(M_τ > x)  ≤  a/(a−ε) Eτ F̄(x−R−r)
//! ```
//!
//! and the asymptotics `P(M > x) ~ F̄_s(x)/a`, `P(M_τ > x) ~ Eτ F̄(x)`.
//! All bounds are clamped to `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IncrementModel;
use crate::potential::{CertificateKind, MartingaleCertificate};
use crate::roots::brent;
use crate::sim::TauStats;

/// Required accuracy of the Lundberg root.
pub const LUNDBERG_RESIDUAL_TOL: f64 = 1e-12;

fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

fn check_positive_x(x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("bound needs x > 0, got {x}")))
    }
}

/// `F̄_s(x) / a`.
pub fn veraverbecke(model: &IncrementModel, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("asymptotic needs x >= 0, got {x}")));
    }
    Ok(clamp01(model.integrated_tail(x)? / model.tail_moments().a))
}

/// `F̄_s(x + R) / (a + ε)` from a submartingale certificate.
pub fn lower_bound_m(model: &IncrementModel, cert: &MartingaleCertificate, x: f64) -> Result<f64> {
    cert.check(model, CertificateKind::Sub)?;
    check_positive_x(x)?;
    let a = model.tail_moments().a;
    Ok(clamp01(model.integrated_tail(x + cert.r)? / (a + cert.epsilon)))
}

/// `F̄_s(x) / (a + F̄_s(x))`, valid for every increment law.
pub fn fkz_lower_bound(model: &IncrementModel, x: f64) -> Result<f64> {
    check_positive_x(x)?;
    let fs = model.integrated_tail(x)?;
    Ok(clamp01(fs / (model.tail_moments().a + fs)))
}

/// Smallest `r` in `r_grid` with `sup_tail_upper(r) ≤ F̄_s(R)/(a − ε)`.
///
/// `sup_tail_upper` must bound `P(M > ·)` from above; the result is only as
/// trustworthy as that input (typically a one-sided Monte Carlo bound).
pub fn choose_r<U: Fn(f64) -> f64>(
    model: &IncrementModel,
    cert: &MartingaleCertificate,
    r_grid: &[f64],
    sup_tail_upper: U,
) -> Result<f64> {
    cert.check(model, CertificateKind::Super)?;
    let a = model.tail_moments().a;
    let target = model.integrated_tail(cert.r)? / (a - cert.epsilon);
    r_grid
        .iter()
        .copied()
        .find(|&r| sup_tail_upper(r) <= target)
        .ok_or(Error::SearchExhausted {
            cap: r_grid.last().copied().unwrap_or(f64::NAN),
        })
}

fn check_upper_domain(cert: &MartingaleCertificate, r: f64, x: f64) -> Result<f64> {
    let shift = cert.r + r;
    if x > shift {
        Ok(x - shift)
    } else {
        Err(Error::Domain(format!(
            "upper bound is vacuous for x = {x} <= R + r = {shift}"
        )))
    }
}

/// `F̄_s(x − R − r) / (a − ε)` from a supermartingale certificate.
pub fn upper_bound_m(
    model: &IncrementModel,
    cert: &MartingaleCertificate,
    r: f64,
    x: f64,
) -> Result<f64> {
    cert.check(model, CertificateKind::Super)?;
    let y = check_upper_domain(cert, r, x)?;
    let a = model.tail_moments().a;
    Ok(clamp01(model.integrated_tail(y)? / (a - cert.epsilon)))
}

/// `a/(a − ε) · Eτ · F̄(x − R − r)`.
pub fn upper_bound_mtau(
    model: &IncrementModel,
    cert: &MartingaleCertificate,
    r: f64,
    tau_mean: f64,
    x: f64,
) -> Result<f64> {
    cert.check(model, CertificateKind::Super)?;
    if !(tau_mean >= 0.0) {
        return Err(Error::Parameter(format!("tau_mean must be >= 0, got {tau_mean}")));
    }
    let y = check_upper_domain(cert, r, x)?;
    let a = model.tail_moments().a;
    Ok(clamp01(a / (a - cert.epsilon) * tau_mean * model.tail(y)))
}

/// `F̄_s(y) − mean F̄_s(y − S_τ)` over the supplied `S_τ` samples.
pub fn overshoot_deficit(model: &IncrementModel, stau: &[f64], y: f64) -> Result<f64> {
    if stau.is_empty() {
        return Err(Error::Parameter("no S_tau samples".into()));
    }
    if let Some(s) = stau.iter().find(|&&s| !(s <= 0.0)) {
        return Err(Error::Parameter(format!("S_tau samples must be <= 0, got {s}")));
    }
    let base = model.integrated_tail(y)?;
    let mut sum = 0.0;
    for &s in stau {
        sum += base - model.integrated_tail(y - s)?;
    }
    Ok(sum / stau.len() as f64)
}

/// `(F̄_s(x+R) − E F̄_s(x+R−S_τ)) / (a + ε)`, floored at 0.
pub fn lower_bound_mtau(
    model: &IncrementModel,
    cert: &MartingaleCertificate,
    stau: &[f64],
    x: f64,
) -> Result<f64> {
    cert.check(model, CertificateKind::Sub)?;
    let a = model.tail_moments().a;
    let num = overshoot_deficit(model, stau, x + cert.r)?;
    Ok(clamp01(num / (a + cert.epsilon)))
}

/// `Eτ · F̄(x)`.
pub fn asymp_mtau(model: &IncrementModel, tau_mean: f64, x: f64) -> Result<f64> {
    if !(tau_mean > 0.0) {
        return Err(Error::Parameter(format!("tau_mean must be > 0, got {tau_mean}")));
    }
    Ok(clamp01(tau_mean * model.tail(x)))
}

/// Cramér–Lundberg exponent `h0 > 0` with `E e^{h0 ξ} = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LundbergBaseline {
    pub h0: f64,
    pub residual: f64,
    /// Sample mean of `exp(h0 S_τ)` when `S_τ` samples were supplied.
    pub exp_moment_stau: Option<f64>,
}

impl LundbergBaseline {
    /// Doob bound `P(M > x) ≤ e^{−h0 x}`.
    pub fn doob(&self, x: f64) -> f64 {
        clamp01((-self.h0 * x).exp())
    }

    /// `1 − E e^{h0 S_τ}`, the factor relating `P(M_τ > x)` to `P(M > x)`.
    pub fn cycle_prefactor(&self) -> Option<f64> {
        self.exp_moment_stau.map(|m| 1.0 - m)
    }
}

pub fn lundberg(model: &IncrementModel, stau: Option<&[f64]>) -> Result<LundbergBaseline> {
    let h_sup = model.mgf_abscissa();
    if !(h_sup > 0.0) {
        return Err(Error::NoExponent(
            "moment generating function diverges for every h > 0".into(),
        ));
    }
    let excess = |h: f64| model.mgf(h).map(|v| v - 1.0);

    // E e^{hξ} is convex with slope −a at 0, so it dips below 1 first.
    let mut hi = if h_sup.is_finite() { 0.5 * h_sup } else { 1.0 };
    let mut lo = None;
    for _ in 0..200 {
        let v = excess(hi)?;
        if v > 0.0 {
            break;
        }
        lo = Some(hi);
        hi = if h_sup.is_finite() {
            0.5 * (hi + h_sup)
        } else {
            2.0 * hi
        };
        if hi >= h_sup || hi > 1e6 {
            return Err(Error::NoRoot(format!(
                "E e^(h xi) stays below 1 up to h = {hi}"
            )));
        }
    }
    let lo = match lo {
        Some(lo) => lo,
        None => {
            let mut h = hi;
            loop {
                h *= 0.5;
                if h < 1e-12 * hi {
                    return Err(Error::NoRoot("no point with E e^(h xi) < 1".into()));
                }
                if excess(h)? < 0.0 {
                    break h;
                }
            }
        }
    };
    let f = |h: f64| excess(h).unwrap_or(f64::NAN);
    let h0 = brent(f, lo, hi, 1e-15)?;
    let residual = excess(h0)?.abs();
    if residual > LUNDBERG_RESIDUAL_TOL {
        return Err(Error::NoRoot(format!("root residual {residual:e} too large")));
    }
    let exp_moment_stau = match stau {
        Some(s) if !s.is_empty() => {
            Some(s.iter().map(|&v| (h0 * v).exp()).sum::<f64>() / s.len() as f64)
        }
        Some(_) => return Err(Error::Parameter("empty S_tau sample".into())),
        None => None,
    };
    Ok(LundbergBaseline {
        h0,
        residual,
        exp_moment_stau,
    })
}

/// One x-row of a bound table. Absent cells carry a reason code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub x: f64,
    pub lower_m: Option<f64>,
    pub upper_m: Option<f64>,
    pub fkz_lower: Option<f64>,
    pub asymp_m: Option<f64>,
    pub lower_mtau: Option<f64>,
    pub upper_mtau: Option<f64>,
    pub asymp_mtau: Option<f64>,
    pub doob: Option<f64>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundProvenance {
    pub epsilon: Option<f64>,
    pub sub_r: Option<f64>,
    pub super_r: Option<f64>,
    pub r: Option<f64>,
    pub r_source: Option<String>,
    pub tau_mean: Option<f64>,
    pub tau_ci: Option<f64>,
    pub cycles: Option<u64>,
    pub stau_samples: usize,
    pub h0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub rows: Vec<BoundRow>,
    pub provenance: BoundProvenance,
}

/// Everything a bound table can draw on; absent inputs leave cells empty.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub model: &'a IncrementModel,
    pub sub: Option<&'a MartingaleCertificate>,
    pub sup: Option<&'a MartingaleCertificate>,
    /// Auxiliary level `r` and a description of where it came from.
    pub r: Option<(f64, &'a str)>,
    pub tau: Option<&'a TauStats>,
    pub stau: Option<&'a [f64]>,
    pub lundberg: Option<&'a LundbergBaseline>,
}

fn cell(v: Result<f64>, code: &str, reasons: &mut Vec<String>) -> Option<f64> {
    match v {
        Ok(v) => Some(v),
        Err(_) => {
            reasons.push(code.to_string());
            None
        }
    }
}

fn missing(code: &str, reasons: &mut Vec<String>) -> Option<f64> {
    if !reasons.iter().any(|r| r == code) {
        reasons.push(code.to_string());
    }
    None
}

impl BoundTable {
    pub fn build(inputs: &BoundInputs<'_>, x_grid: &[f64]) -> Result<BoundTable> {
        let m = inputs.model;
        if let Some(c) = inputs.sub {
            c.check(m, CertificateKind::Sub)?;
        }
        if let Some(c) = inputs.sup {
            c.check(m, CertificateKind::Super)?;
        }
        let rows = x_grid
            .par_iter()
            .map(|&x| Self::row(inputs, x))
            .collect::<Vec<_>>();
        let provenance = BoundProvenance {
            epsilon: inputs.sub.or(inputs.sup).map(|c| c.epsilon),
            sub_r: inputs.sub.map(|c| c.r),
            super_r: inputs.sup.map(|c| c.r),
            r: inputs.r.map(|(r, _)| r),
            r_source: inputs.r.map(|(_, s)| s.to_string()),
            tau_mean: inputs.tau.map(|t| t.tau_mean),
            tau_ci: inputs.tau.map(|t| t.tau_ci),
            cycles: inputs.tau.map(|t| t.cycles),
            stau_samples: inputs.stau.map_or(0, |s| s.len()),
            h0: inputs.lundberg.map(|l| l.h0),
        };
        Ok(BoundTable { rows, provenance })
    }

    fn row(inp: &BoundInputs<'_>, x: f64) -> BoundRow {
        let m = inp.model;
        let mut reasons = Vec::new();
        let positive = x > 0.0;

        let asymp_m = if x >= 0.0 {
            cell(veraverbecke(m, x), "asymp_error", &mut reasons)
        } else {
            missing("x_negative", &mut reasons)
        };
        let fkz_lower = if positive {
            cell(fkz_lower_bound(m, x), "fkz_error", &mut reasons)
        } else {
            missing("x_nonpositive", &mut reasons)
        };
        let lower_m = match inp.sub {
            Some(c) if positive => cell(lower_bound_m(m, c, x), "lower_m_error", &mut reasons),
            Some(_) => missing("x_nonpositive", &mut reasons),
            None => missing("no_sub_certificate", &mut reasons),
        };
        let (upper_m, upper_mtau) = match (inp.sup, inp.r) {
            (Some(c), Some((r, _))) if x > c.r + r => {
                let um = cell(upper_bound_m(m, c, r, x), "upper_m_error", &mut reasons);
                let ut = match inp.tau {
                    Some(t) => cell(
                        upper_bound_mtau(m, c, r, t.tau_mean + t.tau_ci, x),
                        "upper_mtau_error",
                        &mut reasons,
                    ),
                    None => missing("no_tau_stats", &mut reasons),
                };
                (um, ut)
            }
            (Some(_), Some(_)) => (
                missing("vacuous_x_le_R_plus_r", &mut reasons),
                None,
            ),
            (None, _) => (missing("no_super_certificate", &mut reasons), None),
            (Some(_), None) => (missing("no_r", &mut reasons), None),
        };
        let lower_mtau = match (inp.sub, inp.stau) {
            (Some(c), Some(s)) => cell(lower_bound_mtau(m, c, s, x), "lower_mtau_error", &mut reasons),
            (None, _) => missing("no_sub_certificate", &mut reasons),
            (_, None) => missing("no_stau_samples", &mut reasons),
        };
        let asymp_mtau = match inp.tau {
            Some(t) => cell(asymp_mtau(m, t.tau_mean, x), "asymp_mtau_error", &mut reasons),
            None => missing("no_tau_stats", &mut reasons),
        };
        let doob = inp.lundberg.map(|l| l.doob(x));

        let mut row = BoundRow {
            x,
            lower_m,
            upper_m,
            fkz_lower,
            asymp_m,
            lower_mtau,
            upper_mtau,
            asymp_mtau,
            doob,
            reasons,
        };
        row.enforce_order();
        row
    }

    /// Every populated row satisfies `lower ≤ upper`.
    pub fn is_consistent(&self) -> bool {
        self.rows.iter().all(BoundRow::is_consistent)
    }
}

impl BoundRow {
    pub fn is_consistent(&self) -> bool {
        let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a <= b,
            _ => true,
        };
        le(self.lower_m, self.upper_m)
            && le(self.fkz_lower, self.upper_m)
            && le(self.lower_mtau, self.upper_mtau)
    }

    // Estimation noise in the cycle statistics can in principle cross the M_τ
    // pair; such cells are withdrawn rather than emitted.
    fn enforce_order(&mut self) {
        if let (Some(l), Some(u)) = (self.lower_mtau, self.upper_mtau) {
            if l > u {
                self.lower_mtau = None;
                self.upper_mtau = None;
                self.reasons.push("mtau_bounds_crossed".into());
            }
        }
        let upper_ok = match self.upper_m {
            Some(u) => self.lower_m.is_none_or(|l| l <= u) && self.fkz_lower.is_none_or(|l| l <= u),
            None => true,
        };
        if !upper_ok {
            self.upper_m = None;
            self.reasons.push("m_bounds_crossed".into());
        }
    }
}
