//! Increment laws `ξ = Y − μ` and the tail functionals built on them.
//!
//! Every family is a nonnegative variable `Y` shifted left by `μ`, so the
//! support infimum is `−μ` and the tail clamps to 1 below it. Pareto and
//! exponential families carry closed forms for the integrated tail and the
//! moments; the Weibull family goes through quadrature.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

fn default_quad_tol() -> f64 {
    DEFAULT_QUAD_TOL
}

/// Shape of the unshifted variable `Y ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `P(Y > y) = (1 + y/σ)^(−α)`, `α > 1`.
    ParetoShift { alpha: f64, sigma: f64 },
    /// `P(Y > y) = exp(−(y/σ)^β)`; heavy for `β < 1`.
    WeibullShift { beta: f64, sigma: f64 },
    /// `P(Y > y) = exp(−λ y)`.
    ExpShift { lambda: f64 },
    /// `Y ≡ 0`, so `ξ ≡ −μ`. Deterministic walk used in tests.
    PointMass,
}

/// Serialized form of a model, e.g.
/// `{"family":"pareto_shift","alpha":3,"sigma":1,"mu":1.5,"quad_tol":1e-10}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(flatten)]
    pub family: Family,
    pub mu: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
}

/// `a = −Eξ`, `a₊ = ∫₀^∞ F̄`, `a₋ = ∫_{−∞}^0 F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMoments {
    pub a: f64,
    pub a_plus: f64,
    pub a_minus: f64,
}

/// A validated increment law with negative mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParams", into = "ModelParams")]
pub struct IncrementModel {
    family: Family,
    mu: f64,
    quad_tol: f64,
    moments: TailMoments,
}

impl TryFrom<ModelParams> for IncrementModel {
    type Error = Error;

    fn try_from(params: ModelParams) -> Result<Self> {
        IncrementModel::new(params)
    }
}

impl From<IncrementModel> for ModelParams {
    fn from(m: IncrementModel) -> Self {
        m.params()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl IncrementModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        match params.family {
            Family::ParetoShift { alpha, sigma } => {
                check_positive("sigma", sigma)?;
                if !(alpha.is_finite() && alpha > 1.0) {
                    return Err(Error::Parameter(format!(
                        "alpha must be > 1 for a finite mean, got {alpha}"
                    )));
                }
            }
            Family::WeibullShift { beta, sigma } => {
                check_positive("beta", beta)?;
                check_positive("sigma", sigma)?;
            }
            Family::ExpShift { lambda } => check_positive("lambda", lambda)?,
            Family::PointMass => {}
        }
        if !params.mu.is_finite() {
            return Err(Error::Parameter(format!("mu must be finite, got {}", params.mu)));
        }
        if !(params.quad_tol > 0.0 && params.quad_tol <= 1e-2) {
            return Err(Error::Parameter(format!(
                "quad_tol must lie in (0, 1e-2], got {}",
                params.quad_tol
            )));
        }

        let mut model = IncrementModel {
            family: params.family,
            mu: params.mu,
            quad_tol: params.quad_tol,
            moments: TailMoments {
                a: 0.0,
                a_plus: 0.0,
                a_minus: 0.0,
            },
        };
        let mean = model.mean_y() - params.mu;
        if !(mean < 0.0) {
            return Err(Error::NonNegativeMean { mean });
        }
        model.moments = model.compute_moments()?;
        Ok(model)
    }

    pub fn pareto_shift(alpha: f64, sigma: f64, mu: f64) -> Result<Self> {
        Self::new(ModelParams {
            family: Family::ParetoShift { alpha, sigma },
            mu,
            quad_tol: DEFAULT_QUAD_TOL,
        })
    }

    pub fn weibull_shift(beta: f64, sigma: f64, mu: f64) -> Result<Self> {
        Self::new(ModelParams {
            family: Family::WeibullShift { beta, sigma },
            mu,
            quad_tol: DEFAULT_QUAD_TOL,
        })
    }

    pub fn exp_shift(lambda: f64, mu: f64) -> Result<Self> {
        Self::new(ModelParams {
            family: Family::ExpShift { lambda },
            mu,
            quad_tol: DEFAULT_QUAD_TOL,
        })
    }

    /// Degenerate increment `ξ ≡ −a`.
    pub fn point_mass(a: f64) -> Result<Self> {
        Self::new(ModelParams {
            family: Family::PointMass,
            mu: a,
            quad_tol: DEFAULT_QUAD_TOL,
        })
    }

    /// The canonical heavy-tailed example: Pareto `α = 3, σ = 1, μ = 1.5`, so `a = 1`.
    pub fn canonical_pareto() -> Self {
        Self::pareto_shift(3.0, 1.0, 1.5).expect("canonical parameters are valid")
    }

    /// Same law with a different quadrature tolerance.
    pub fn with_quad_tol(&self, quad_tol: f64) -> Result<Self> {
        let mut params = self.params();
        params.quad_tol = quad_tol;
        Self::new(params)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            family: self.family,
            mu: self.mu,
            quad_tol: self.quad_tol,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn shift(&self) -> f64 {
        self.mu
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn quadrature(&self) -> Quadrature {
        Quadrature::with_rel_tol(self.quad_tol)
    }

    pub fn support_inf(&self) -> f64 {
        -self.mu
    }

    pub fn has_density(&self) -> bool {
        !matches!(self.family, Family::PointMass)
    }

    fn mean_y(&self) -> f64 {
        match self.family {
            Family::ParetoShift { alpha, sigma } => sigma / (alpha - 1.0),
            Family::WeibullShift { beta, sigma } => sigma * gamma(1.0 + 1.0 / beta),
            Family::ExpShift { lambda } => 1.0 / lambda,
            Family::PointMass => 0.0,
        }
    }

    /// `P(Y > y)` for `y ≥ 0`.
    #[inline]
    fn tail_y(&self, y: f64) -> f64 {
        match self.family {
            Family::ParetoShift { alpha, sigma } => (1.0 + y / sigma).powf(-alpha),
            Family::WeibullShift { beta, sigma } => (-(y / sigma).powf(beta)).exp(),
            Family::ExpShift { lambda } => (-lambda * y).exp(),
            Family::PointMass => 0.0,
        }
    }

    /// `F̄(x) = P(ξ > x)`.
    #[inline]
    pub fn tail(&self, x: f64) -> f64 {
        let y = x + self.mu;
        if y < 0.0 {
            return 1.0;
        }
        if matches!(self.family, Family::PointMass) {
            return 0.0;
        }
        self.tail_y(y)
    }

    /// `F(x) = P(ξ ≤ x)`.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        let y = x + self.mu;
        if y < 0.0 {
            return 0.0;
        }
        match self.family {
            // 1 − (1+y/σ)^(−α) without cancellation near y = 0.
            Family::ParetoShift { alpha, sigma } => -(-alpha * (y / sigma).ln_1p()).exp_m1(),
            Family::WeibullShift { beta, sigma } => -(-(y / sigma).powf(beta)).exp_m1(),
            Family::ExpShift { lambda } => -(-lambda * y).exp_m1(),
            Family::PointMass => 1.0,
        }
    }

    /// Density of ξ; zero below the support and for the point mass.
    pub fn density(&self, x: f64) -> f64 {
        let y = x + self.mu;
        if y < 0.0 {
            return 0.0;
        }
        match self.family {
            Family::ParetoShift { alpha, sigma } => {
                alpha / sigma * (1.0 + y / sigma).powf(-alpha - 1.0)
            }
            Family::WeibullShift { beta, sigma } => {
                let z = y / sigma;
                if z == 0.0 {
                    return match beta.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 1.0 / sigma,
                        _ => 0.0,
                    };
                }
                beta / sigma * z.powf(beta - 1.0) * (-z.powf(beta)).exp()
            }
            Family::ExpShift { lambda } => lambda * (-lambda * y).exp(),
            Family::PointMass => 0.0,
        }
    }

    /// `F̄_s(x) = ∫_x^∞ F̄(u) du`.
    pub fn integrated_tail(&self, x: f64) -> Result<f64> {
        let y = x + self.mu;
        if y < 0.0 {
            // F̄ ≡ 1 on [x, −μ).
            return Ok(-y + self.integrated_tail_y(0.0)?);
        }
        self.integrated_tail_y(y)
    }

    fn integrated_tail_y(&self, y: f64) -> Result<f64> {
        match self.family {
            Family::ParetoShift { alpha, sigma } => {
                Ok(sigma / (alpha - 1.0) * (1.0 + y / sigma).powf(1.0 - alpha))
            }
            Family::ExpShift { lambda } => Ok((-lambda * y).exp() / lambda),
            Family::PointMass => Ok(0.0),
            Family::WeibullShift { beta, sigma } => {
                // Local decay length 1/hazard(y) sets the map scale.
                let decay = if y > 0.0 {
                    sigma.powf(beta) * y.powf(1.0 - beta) / beta
                } else {
                    sigma
                };
                let scale = decay.max(sigma);
                let r = self.quadrature().integrate_to_infinity(
                    |u| (-(u / sigma).powf(beta)).exp(),
                    y,
                    scale,
                )?;
                Ok(r.value)
            }
        }
    }

    fn compute_moments(&self) -> Result<TailMoments> {
        let a = self.mu - self.mean_y();
        let a_plus = self.integrated_tail(0.0)?;
        let a_minus = match self.family {
            Family::ParetoShift { alpha, sigma } => {
                // ∫_{−μ}^0 (1 − (1+(z+μ)/σ)^(−α)) dz
                self.mu - sigma / (alpha - 1.0) * (1.0 - (1.0 + self.mu / sigma).powf(1.0 - alpha))
            }
            Family::ExpShift { lambda } => self.mu - (1.0 - (-lambda * self.mu).exp()) / lambda,
            Family::PointMass => self.mu,
            Family::WeibullShift { .. } => {
                self.quadrature()
                    .integrate(|z| self.cdf(z), -self.mu, 0.0)?
                    .value
            }
        };
        Ok(TailMoments { a, a_plus, a_minus })
    }

    pub fn tail_moments(&self) -> TailMoments {
        self.moments
    }

    /// Inverse-CDF draw of ξ.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_of_tail(u)
    }

    /// The value `x` with `F̄(x) = u`, for `u ∈ (0, 1)`.
    #[inline]
    pub fn quantile_of_tail(&self, u: f64) -> f64 {
        let y = match self.family {
            Family::ParetoShift { alpha, sigma } => sigma * (u.powf(-1.0 / alpha) - 1.0),
            Family::WeibullShift { beta, sigma } => sigma * (-u.ln()).powf(1.0 / beta),
            Family::ExpShift { lambda } => -u.ln() / lambda,
            Family::PointMass => 0.0,
        };
        y - self.mu
    }

    /// Abscissa of convergence of `E e^{hξ}`: 0 for heavy tails.
    pub fn mgf_abscissa(&self) -> f64 {
        match self.family {
            Family::ParetoShift { .. } => 0.0,
            Family::WeibullShift { beta, sigma } => {
                if beta < 1.0 {
                    0.0
                } else if beta == 1.0 {
                    1.0 / sigma
                } else {
                    f64::INFINITY
                }
            }
            Family::ExpShift { lambda } => lambda,
            Family::PointMass => f64::INFINITY,
        }
    }

    /// `E e^{hξ}` for `0 ≤ h` below the abscissa.
    pub fn mgf(&self, h: f64) -> Result<f64> {
        if h < 0.0 || h >= self.mgf_abscissa() {
            return Err(Error::Domain(format!(
                "mgf undefined at h = {h} (abscissa {})",
                self.mgf_abscissa()
            )));
        }
        let shift = (-h * self.mu).exp();
        match self.family {
            Family::ExpShift { lambda } => Ok(shift * lambda / (lambda - h)),
            Family::PointMass => Ok(shift),
            Family::WeibullShift { beta, sigma } => {
                // E e^{hY} = 1 + h ∫_0^∞ e^{hy} P(Y > y) dy
                let decay = 1.0 / (1.0 / sigma - h).max(1e-300);
                let scale = if beta == 1.0 { decay } else { sigma };
                let r = self.quadrature().integrate_to_infinity(
                    |y| (h * y - (y / sigma).powf(beta)).exp(),
                    0.0,
                    scale,
                )?;
                Ok(shift * (1.0 + h * r.value))
            }
            Family::ParetoShift { .. } => unreachable!("abscissa is zero"),
        }
    }
}
