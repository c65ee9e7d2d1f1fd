//! Independent replications of an estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{estimate, CostCounters, MlpConfig};
use crate::parallel::try_map_indexed;
use crate::problem::BsdeProblem;
use crate::sampling::derive_seed;

/// Cost counters averaged over replications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanCost {
    pub generator_evals: f64,
    pub terminal_evals: f64,
    pub gaussian_draws: f64,
    pub cache_hits: f64,
}

impl MeanCost {
    fn from_total(total: &CostCounters, count: usize) -> MeanCost {
        let n = count as f64;
        MeanCost {
            generator_evals: total.generator_evals as f64 / n,
            terminal_evals: total.terminal_evals as f64 / n,
            gaussian_draws: total.gaussian_draws as f64 / n,
            cache_hits: total.cache_hits as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub replications: usize,
    pub mean_y: f64,
    /// Unbiased sample standard deviation of the `y` estimates.
    pub std_y: f64,
    /// `u(t, x)` when the problem has a closed form.
    pub reference: Option<f64>,
    /// `|mean_y - u(t, x)|` when the problem has a closed form.
    pub abs_error: Option<f64>,
    pub mean_cost: MeanCost,
    /// Componentwise mean of the z estimates, when requested.
    pub mean_z: Option<Vec<f64>>,
}

impl RunStats {
    /// `std_y / sqrt(R)`.
    pub fn std_error(&self) -> f64 {
        self.std_y / (self.replications as f64).sqrt()
    }
}

/// `R` replications with seeds `derive_seed(c.seed, r)`, `r = 0..R`.
pub fn run_replications(
    p: &BsdeProblem,
    c: &MlpConfig,
    t: f64,
    x: &[f64],
    replications: usize,
) -> Result<RunStats> {
    let seeds: Vec<u64> = (0..replications as u64).map(|r| derive_seed(c.seed, r)).collect();
    run_replications_with_seeds(p, c, t, x, &seeds)
}

/// One replication per seed, reduced in seed order.
pub fn run_replications_with_seeds(
    p: &BsdeProblem,
    c: &MlpConfig,
    t: f64,
    x: &[f64],
    seeds: &[u64],
) -> Result<RunStats> {
    let r = seeds.len();
    if r < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 replications, got {r}")));
    }
    let runs = try_map_indexed(c.execution, r, |i| estimate(p, &c.with_seed(seeds[i]), t, x))?;

    let n = r as f64;
    let mean_y = runs.iter().map(|e| e.y).sum::<f64>() / n;
    let var = runs.iter().map(|e| (e.y - mean_y).powi(2)).sum::<f64>() / (n - 1.0);
    let total: CostCounters = runs.iter().map(|e| e.cost).sum();
    let mean_z = c.estimate_z.then(|| {
        let mut z = vec![0.0; p.dim()];
        for e in &runs {
            for (acc, v) in z.iter_mut().zip(e.z.iter().flatten()) {
                *acc += v / n;
            }
        }
        z
    });
    let reference = p.reference().map(|u| u.value(t, x));
    Ok(RunStats {
        replications: r,
        mean_y,
        std_y: var.sqrt(),
        reference,
        abs_error: reference.map(|u| (mean_y - u).abs()),
        mean_cost: MeanCost::from_total(&total, r),
        mean_z,
    })
}
