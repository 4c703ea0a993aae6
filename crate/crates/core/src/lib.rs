//! Martingale tail bounds for the supremum and cycle maximum of a random walk
//! with negative drift and heavy-tailed increments.
//!
//! - [`model`]: increment laws and their tail functionals.
//! - [`potential`]: tail potentials, drift operators, and certification of the
//!   sub/supermartingale thresholds.
//! - [`bounds`]: asymptotic and non-asymptotic bounds on `P(M > x)` and
//!   `P(M_τ > x)`, plus the light-tailed Lundberg baseline.
//! - [`sim`]: Monte Carlo engines (Lindley recursion, excursion cycles,
//!   first passage, empirical drift checks).

pub mod bounds;
pub mod error;
pub mod model;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod sim;
pub mod stats;

pub use bounds::{BoundInputs, BoundRow, BoundTable, LundbergBaseline};
pub use error::{Error, Result};
pub use model::{Family, IncrementModel, ModelParams, TailMoments};
pub use potential::{CertificateKind, DriftReport, GridSpec, MartingaleCertificate, TailPotential};
pub use rng::RngStream;
pub use sim::{CycleSample, LindleyEstimate, SupremumEstimate, TauStats};
