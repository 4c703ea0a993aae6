use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream, CycleSample, CI_LEVEL, STREAM_LINDLEY};
use crate::error::{Error, Result};
use crate::model::IncrementModel;
use crate::stats::{z_one_sided, z_two_sided, Running};

/// Time-averaged estimate of `P(M > x)` from the Lindley recursion
/// `W_{n+1} = (W_n + ξ_{n+1})⁺`, whose stationary law is the law of `M`.
///
/// `steps_per_replica` counts all iterations including the `burn_in`
/// prefix. The half-widths come from the spread of the i.i.d. replica means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindleyEstimate {
    pub x_grid: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub steps_per_replica: u64,
    pub burn_in: u64,
    pub replicas: u64,
    pub seed: u64,
}

pub(crate) fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Parameter(format!("{what} is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(format!(
            "{what} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

pub fn lindley_tail(
    model: &IncrementModel,
    x_grid: &[f64],
    steps: u64,
    burn_in: u64,
    replicas: u64,
    seed: u64,
) -> Result<LindleyEstimate> {
    check_increasing(x_grid, "x_grid")?;
    if steps <= burn_in {
        return Err(Error::Parameter(format!(
            "steps ({steps}) must exceed burn_in ({burn_in})"
        )));
    }
    if replicas < 2 {
        return Err(Error::Parameter(
            "at least 2 replicas are needed for a confidence interval".into(),
        ));
    }
    let k = x_grid.len();
    let kept = (steps - burn_in) as f64;

    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, STREAM_LINDLEY, r);
            // bucket[j] counts visits with x_{j-1} < W ≤ x_j
            let mut bucket = vec![0u64; k + 1];
            let mut w = 0.0f64;
            for i in 0..steps {
                w = (w + model.sample(&mut rng)).max(0.0);
                if i >= burn_in {
                    bucket[x_grid.partition_point(|&x| x < w)] += 1;
                }
            }
            let mut above = 0u64;
            let mut p = vec![0.0; k];
            for j in (0..k).rev() {
                above += bucket[j + 1];
                p[j] = above as f64 / kept;
            }
            p
        })
        .collect();

    let z = z_two_sided(CI_LEVEL);
    let mut p_hat = Vec::with_capacity(k);
    let mut ci = Vec::with_capacity(k);
    for j in 0..k {
        let r: Running = per_replica.iter().map(|p| p[j]).collect();
        p_hat.push(r.mean());
        ci.push(z * r.std_error());
    }
    Ok(LindleyEstimate {
        x_grid: x_grid.to_vec(),
        p_hat,
        ci_halfwidth: ci,
        steps_per_replica: steps,
        burn_in,
        replicas,
        seed,
    })
}

impl LindleyEstimate {
    fn interp_column(&self, col: &[f64], x: f64) -> f64 {
        let g = &self.x_grid;
        if x <= g[0] {
            return col[0];
        }
        let last = g.len() - 1;
        if x >= g[last] {
            return col[last];
        }
        let i = g.partition_point(|&v| v <= x);
        let (x0, x1) = (g[i - 1], g[i]);
        let w = (x - x0) / (x1 - x0);
        col[i - 1] + w * (col[i] - col[i - 1])
    }

    /// Piecewise-linear `P̂(M > x)`, exactly 1 for `x < 0`, clamped to the
    /// end values outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        self.interp_column(&self.p_hat, x).clamp(0.0, 1.0)
    }

    pub fn interpolate_halfwidth(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.interp_column(&self.ci_halfwidth, x)
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.x_grid.iter().position(|&g| g == x)
    }

    /// Pointwise one-sided upper confidence bound on `P(M > r)` at `level`,
    /// as a nonincreasing step function: at `r` it uses the tightest bound
    /// from grid points `x_j ≤ r`, and 1 left of the grid.
    pub fn one_sided_upper(&self, level: f64) -> impl Fn(f64) -> f64 + '_ {
        let scale = z_one_sided(level) / z_two_sided(CI_LEVEL);
        let mut envelope = Vec::with_capacity(self.x_grid.len());
        let mut best = 1.0f64;
        for (p, hw) in self.p_hat.iter().zip(&self.ci_halfwidth) {
            best = best.min((p + scale * hw).min(1.0));
            envelope.push(best);
        }
        move |r: f64| {
            let i = self.x_grid.partition_point(|&x| x <= r);
            if i == 0 {
                1.0
            } else {
                envelope[i - 1]
            }
        }
    }
}

/// Consistency check of the last-exit decomposition
/// `P(M>x) = P(M_τ>x) + E[P(M > x − S_τ); M_τ ≤ x]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IglehartCheck {
    pub x: f64,
    pub p_m: f64,
    pub p_mtau: f64,
    pub correction: f64,
    pub residual: f64,
    /// Root-sum-square of the 99% half-widths of the three terms.
    pub ci: f64,
}

impl IglehartCheck {
    pub fn passes(&self) -> bool {
        self.residual.abs() <= self.ci
    }
}

pub fn iglehart_residual(
    lindley: &LindleyEstimate,
    cycles: &[CycleSample],
    x: f64,
) -> Result<IglehartCheck> {
    let mut n = 0u64;
    let mut exceed = 0u64;
    let mut corr = Running::new();
    let mut corr_hw = 0.0;
    for c in cycles.iter().filter(|c| !c.truncated) {
        n += 1;
        if c.m_tau > x {
            exceed += 1;
            corr.push(0.0);
        } else {
            let y = x - c.s_tau;
            corr.push(lindley.interpolate(y));
            corr_hw += lindley.interpolate_halfwidth(y);
        }
    }
    if n < 2 {
        return Err(Error::Parameter("need at least 2 untruncated cycles".into()));
    }
    let z = z_two_sided(CI_LEVEL);
    let p_m = lindley.interpolate(x);
    let p_mtau = exceed as f64 / n as f64;
    let correction = corr.mean();
    let hw_m = lindley.interpolate_halfwidth(x);
    let hw_mtau = z * (p_mtau * (1.0 - p_mtau) / n as f64).sqrt();
    let hw_corr = z * corr.std_error() + corr_hw / n as f64;
    Ok(IglehartCheck {
        x,
        p_m,
        p_mtau,
        correction,
        residual: p_m - p_mtau - correction,
        ci: (hw_m * hw_m + hw_mtau * hw_mtau + hw_corr * hw_corr).sqrt(),
    })
}
