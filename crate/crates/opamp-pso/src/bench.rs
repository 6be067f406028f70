//! Synthetic constrained problems and hybrid-vs-standard run statistics.

use crate::error::{ConfigError, PsoError};
use crate::problem::{Bounds, Problem, Survival};
use crate::pso::{self, PsoConfig, RunResult};

/// A named benchmark with a known optimum, attainable inside the feasible
/// region.
#[derive(Debug, Clone)]
pub struct BenchProblem {
    pub name: String,
    pub dimension: usize,
    pub known_optimum: f64,
    /// Survive iff sum(x^2) <= this threshold.
    sphere_threshold: f64,
}

/// `f(x) = sum(x_d^2)` on `[-1,1]^D` with the feasible region
/// `sum(x_d^2) <= feasible_fraction * D`. The optimum 0 at the origin is
/// interior-feasible for any positive fraction.
pub fn constrained_sphere(dimension: usize, feasible_fraction: f64) -> BenchProblem {
    assert!(dimension >= 1);
    assert!(feasible_fraction > 0.0 && feasible_fraction <= 1.0);
    BenchProblem {
        name: format!("constrained_sphere({dimension}, {feasible_fraction})"),
        dimension,
        known_optimum: 0.0,
        sphere_threshold: feasible_fraction * dimension as f64,
    }
}

impl Problem for BenchProblem {
    fn fitness(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn survive(&self, x: &[f64]) -> Survival {
        let s: f64 = x.iter().map(|v| v * v).sum();
        if s <= self.sphere_threshold {
            Survival::pass()
        } else {
            Survival::fail(vec![format!(
                "sphere constraint: {s} > {}",
                self.sphere_threshold
            )])
        }
    }

    fn bounds(&self) -> Bounds {
        Bounds::new(vec![-1.0; self.dimension], vec![1.0; self.dimension]).unwrap()
    }
}

/// Final-fitness statistics for one algorithm over a seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoStats {
    pub best: f64,
    pub worst: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub mean_regenerations: f64,
    pub mean_retries: f64,
    /// Seeds whose run aborted (generation exhausted), excluded from the
    /// aggregates above.
    pub failed_seeds: Vec<u64>,
}

fn aggregate(results: &[(u64, Result<RunResult, PsoError>)]) -> AlgoStats {
    let mut finals = Vec::new();
    let mut regen = Vec::new();
    let mut retries = Vec::new();
    let mut failed_seeds = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(r) => {
                finals.push(r.gbest_fitness);
                regen.push(r.regeneration_count as f64);
                retries.push(r.retry_count as f64);
            }
            Err(_) => failed_seeds.push(*seed),
        }
    }
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
    AlgoStats {
        best: finals.iter().cloned().fold(f64::INFINITY, f64::min),
        worst: finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std_dev: var.sqrt(),
        mean_regenerations: regen.iter().sum::<f64>() / n,
        mean_retries: retries.iter().sum::<f64>() / n,
        failed_seeds,
    }
}

/// Hybrid and standard PSO run over the same seed set with identical
/// budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonStats {
    pub hybrid: AlgoStats,
    pub standard: AlgoStats,
}

/// Run both algorithms once per seed and aggregate. Seeds are sorted before
/// reduction so the statistics do not depend on input order. Requires at
/// least two seeds.
pub fn compare(
    problem: &dyn Problem,
    config: &PsoConfig,
    seeds: &[u64],
) -> Result<ComparisonStats, ConfigError> {
    if seeds.len() < 2 {
        return Err(ConfigError::new("seeds", "need at least 2 seeds"));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();

    let run_all = |standard: bool| -> Vec<(u64, Result<RunResult, PsoError>)> {
        seeds
            .iter()
            .map(|&seed| {
                let cfg = PsoConfig {
                    rng_seed: seed,
                    ..config.clone()
                };
                let r = if standard {
                    pso::optimize_standard(problem, &cfg)
                } else {
                    pso::optimize(problem, &cfg)
                };
                (seed, r)
            })
            .collect()
    };

    Ok(ComparisonStats {
        hybrid: aggregate(&run_all(false)),
        standard: aggregate(&run_all(true)),
    })
}
