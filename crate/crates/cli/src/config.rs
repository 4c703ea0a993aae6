use std::path::Path;

use serde::{Deserialize, Serialize};
use tailwalk_core::sim::DEFAULT_N_CAP;
use tailwalk_core::{GridSpec, IncrementModel};

use crate::error::CliError;

fn default_ci_level() -> f64 {
    0.99
}
fn default_n_cap() -> u64 {
    DEFAULT_N_CAP
}
fn default_spill() -> u64 {
    100_000
}
fn default_drift_states() -> usize {
    100
}
fn default_drift_draws() -> u64 {
    100_000
}
fn default_iglehart_x() -> Vec<f64> {
    vec![5.0]
}
fn default_longtail_y() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: IncrementModel,
    #[serde(default)]
    pub certify: Option<CertifyBlock>,
    #[serde(default)]
    pub bounds: Option<BoundsBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyBlock {
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    /// Selects `certificate_{sub,super}_eps{epsilon}.json` in the output directory.
    pub epsilon: f64,
    pub x_grid: Vec<f64>,
    /// One-sided confidence level of the Monte Carlo bound used to pick `r`.
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// Candidate levels for `r`; defaults to the nonnegative Lindley grid.
    #[serde(default)]
    pub r_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub steps: u64,
    pub burn_in: u64,
    pub replicas: u64,
    pub cycles: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Levels for the Lindley estimate of `P(M > x)`.
    pub x_grid: Vec<f64>,
    /// Levels for `P(M_τ > x)`; defaults to `x_grid`.
    #[serde(default)]
    pub mtau_x: Option<Vec<f64>>,
    #[serde(default = "default_n_cap")]
    pub n_cap: u64,
    /// Leading cycles kept in full and written to `cycles.bin`.
    #[serde(default = "default_spill")]
    pub spill_cycles: u64,
    #[serde(default = "default_iglehart_x")]
    pub iglehart_x: Vec<f64>,
    #[serde(default = "default_drift_states")]
    pub drift_states: usize,
    #[serde(default = "default_drift_draws")]
    pub drift_draws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseBlock {
    pub t_grid: Vec<f64>,
    #[serde(default = "default_longtail_y")]
    pub longtail_y: f64,
}

fn increasing(grid: &[f64], what: &str) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Config(format!("{what} is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!(
            "{what} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies a `--seed` override to the simulation block.
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let (Some(s), Some(sim)) = (seed, self.simulate.as_mut()) {
            sim.seed = Some(s);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let a = self.model.tail_moments().a;
        if let Some(c) = &self.certify {
            if c.epsilons.is_empty() {
                return Err(CliError::Config("certify.epsilons is empty".into()));
            }
            for &e in &c.epsilons {
                if !(e > 0.0 && e < a) {
                    return Err(CliError::Config(format!(
                        "certify epsilon {e} must lie in (0, a = {a}) for the super potential"
                    )));
                }
            }
            if c.grid.points < 2 {
                return Err(CliError::Config("certify.grid.points must be >= 2".into()));
            }
        }
        if let Some(b) = &self.bounds {
            if !(b.epsilon > 0.0 && b.epsilon < a) {
                return Err(CliError::Config(format!(
                    "bounds.epsilon must lie in (0, a = {a})"
                )));
            }
            increasing(&b.x_grid, "bounds.x_grid")?;
            if !(b.ci_level > 0.5 && b.ci_level < 1.0) {
                return Err(CliError::Config("bounds.ci_level must lie in (0.5, 1)".into()));
            }
            if let Some(r) = &b.r_grid {
                increasing(r, "bounds.r_grid")?;
            }
        }
        if let Some(s) = &self.simulate {
            if s.seed.is_none() {
                return Err(CliError::Config(
                    "simulate.seed is required (or pass --seed)".into(),
                ));
            }
            increasing(&s.x_grid, "simulate.x_grid")?;
            if let Some(m) = &s.mtau_x {
                increasing(m, "simulate.mtau_x")?;
            }
            if s.replicas < 2 {
                return Err(CliError::Config(
                    "simulate.replicas must be >= 2 for a confidence interval".into(),
                ));
            }
            if s.steps <= s.burn_in {
                return Err(CliError::Config("simulate.steps must exceed burn_in".into()));
            }
            if s.cycles < 2 || s.n_cap == 0 {
                return Err(CliError::Config(
                    "simulate.cycles must be >= 2 and n_cap >= 1".into(),
                ));
            }
            if s.spill_cycles < 2 || s.spill_cycles > s.cycles {
                return Err(CliError::Config(
                    "simulate.spill_cycles must lie in [2, cycles]".into(),
                ));
            }
            if s.drift_states == 0 || s.drift_draws < 2 {
                return Err(CliError::Config(
                    "simulate.drift_states >= 1 and drift_draws >= 2 required".into(),
                ));
            }
        }
        if let Some(d) = &self.diagnose {
            increasing(&d.t_grid, "diagnose.t_grid")?;
            if d.t_grid[0] <= 0.0 {
                return Err(CliError::Config("diagnose.t_grid must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn certify_block(&self) -> Result<&CertifyBlock, CliError> {
        self.certify
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no certify block".into()))
    }

    pub fn bounds_block(&self) -> Result<&BoundsBlock, CliError> {
        self.bounds
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no bounds block".into()))
    }

    pub fn simulate_block(&self) -> Result<&SimulateBlock, CliError> {
        self.simulate
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no simulate block".into()))
    }

    pub fn diagnose_block(&self) -> Result<&DiagnoseBlock, CliError> {
        self.diagnose
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no diagnose block".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "model": {"family": "pareto_shift", "alpha": 3, "sigma": 1, "mu": 1.5},
        "certify": {"epsilons": [0.25, 0.5]},
        "simulate": {"steps": 1000, "burn_in": 10, "replicas": 4, "cycles": 100,
                     "spill_cycles": 50, "x_grid": [0, 1, 2], "seed": 1}
    }"#;

    fn parse(s: &str) -> ExperimentConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn base_config_is_valid() {
        let c = parse(BASE);
        c.validate().unwrap();
        assert_eq!(c.certify.unwrap().grid, GridSpec::default());
    }

    #[test]
    fn rejects_epsilon_at_or_above_a() {
        let c = parse(&BASE.replace("[0.25, 0.5]", "[0.5, 1.0]"));
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_single_replica() {
        let c = parse(&BASE.replace("\"replicas\": 4", "\"replicas\": 1"));
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_required_unless_overridden() {
        let mut c = parse(&BASE.replace(", \"seed\": 1", ""));
        assert!(c.validate().is_err());
        c.override_seed(Some(9));
        c.validate().unwrap();
        assert_eq!(c.simulate.unwrap().seed, Some(9));
    }

    #[test]
    fn rejects_unsorted_grid_and_unknown_keys() {
        let c = parse(&BASE.replace("[0, 1, 2]", "[0, 2, 1]"));
        assert!(c.validate().is_err());
        let bad = BASE.replace("\"certify\"", "\"certfy\"");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
    }

    #[test]
    fn invalid_model_fails_to_parse() {
        let bad = BASE.replace("\"mu\": 1.5", "\"mu\": 0.2");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
    }
}
