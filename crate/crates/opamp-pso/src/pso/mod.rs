//! The hybrid PSO engine.
//!
//! Swarm initialization goes through the particle generation function
//! (rejection sampling against the survivability test). Each iteration
//! recomputes the linearly decreasing inertia weight, then updates every
//! particle. The hybrid variant re-applies the velocity and position updates
//! to a particle whose new position fails the survivability test, up to
//! `max_velocity_retries` times, before replacing it with a freshly
//! generated particle. The standard variant regenerates immediately.

pub mod rng;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, PsoError};
use crate::problem::Problem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Engine parameters. Field defaults follow the op-amp study: swarm of 20,
/// 100 iterations, w in [0.5, 0.8], c1 = c2 = 1.7.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub w_min: f64,
    pub w_max: f64,
    pub c1: f64,
    pub c2: f64,
    /// Extra velocity/position updates allowed for an infeasible particle
    /// before it is replaced (the hybrid retry budget, "maxcount").
    pub max_velocity_retries: usize,
    /// Consecutive rejection-sampling draws allowed per particle slot before
    /// the run aborts with `GenerationExhausted`.
    pub max_generation_attempts: usize,
    pub rng_seed: u64,
    /// Draw a single r1, r2 pair per update instead of per dimension.
    pub scalar_draws: bool,
    /// Chain velocity (and position) across retry attempts. When false each
    /// retry restarts from the pre-update state with fresh draws.
    pub chain_retry_velocity: bool,
    /// Per-dimension velocity clamp as a fraction of the bound range.
    /// `None` disables clamping.
    pub velocity_clamp: Option<f64>,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 20,
            max_iterations: 100,
            w_min: 0.5,
            w_max: 0.8,
            c1: 1.7,
            c2: 1.7,
            max_velocity_retries: 10,
            max_generation_attempts: 200_000,
            rng_seed: 0,
            scalar_draws: false,
            chain_retry_velocity: true,
            velocity_clamp: Some(0.05),
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.swarm_size < 2 {
            return Err(ConfigError::new("swarm_size", "must be at least 2"));
        }
        if self.max_iterations == 0 {
            return Err(ConfigError::new("max_iterations", "must be positive"));
        }
        if !(self.w_min > 0.0) {
            return Err(ConfigError::new("w_min", "must be positive"));
        }
        if self.w_max < self.w_min {
            return Err(ConfigError::new("w_max", "must be >= w_min"));
        }
        if self.c1 < 0.0 {
            return Err(ConfigError::new("c1", "must be non-negative"));
        }
        if self.c2 < 0.0 {
            return Err(ConfigError::new("c2", "must be non-negative"));
        }
        if self.max_generation_attempts == 0 {
            return Err(ConfigError::new(
                "max_generation_attempts",
                "must be positive",
            ));
        }
        if let Some(f) = self.velocity_clamp {
            if !(f > 0.0) {
                return Err(ConfigError::new(
                    "velocity_clamp",
                    "must be positive when set",
                ));
            }
        }
        Ok(())
    }
}

/// One swarm member: position, velocity, and personal-best memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<f64>,
    pub pbest_fitness: f64,
}

/// Per-iteration bookkeeping, one entry per completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gbest_fitness: f64,
    pub w: f64,
    /// Particles replaced via the generation function this iteration.
    pub regenerations: usize,
    /// Extra velocity updates performed this iteration.
    pub retries: usize,
}

/// Outcome of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub gbest_position: Vec<f64>,
    pub gbest_fitness: f64,
    /// gbest fitness after each iteration; length max_iterations,
    /// non-increasing.
    pub fitness_history: Vec<f64>,
    pub regeneration_count: usize,
    pub retry_count: usize,
    pub iterations: Vec<IterationRecord>,
    /// Final swarm positions, all of which pass the survivability test.
    pub final_positions: Vec<Vec<f64>>,
}

/// How particle evaluations within an iteration are dispatched. Results are
/// identical either way; each particle owns its own RNG substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for EvalMode {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return EvalMode::Parallel;
        #[cfg(not(feature = "parallel"))]
        EvalMode::Sequential
    }
}

/// Linearly decreasing inertia schedule:
/// `w(ite) = w_max - (w_max - w_min)/maxite * ite`.
pub fn inertia_weight(ite: usize, config: &PsoConfig) -> f64 {
    debug_assert!(ite <= config.max_iterations);
    config.w_max - (config.w_max - config.w_min) / config.max_iterations as f64 * ite as f64
}

/// Velocity update `w*v + c1*r1.(pbest - x) + c2*r2.(gbest - x)`, evaluated
/// per dimension. `random_draws` holds r1 for all dimensions followed by r2
/// for all dimensions. Dimension mismatch is a programming bug and panics.
pub fn update_velocity(
    p: &Particle,
    gbest: &[f64],
    w: f64,
    c1: f64,
    c2: f64,
    random_draws: &[f64],
) -> Vec<f64> {
    let d = p.position.len();
    assert_eq!(p.velocity.len(), d, "velocity dimension mismatch");
    assert_eq!(p.pbest_position.len(), d, "pbest dimension mismatch");
    assert_eq!(gbest.len(), d, "gbest dimension mismatch");
    assert_eq!(random_draws.len(), 2 * d, "need 2*D random draws");
    (0..d)
        .map(|i| {
            let r1 = random_draws[i];
            let r2 = random_draws[d + i];
            w * p.velocity[i]
                + c1 * r1 * (p.pbest_position[i] - p.position[i])
                + c2 * r2 * (gbest[i] - p.position[i])
        })
        .collect()
}

/// Position update `x + v`, element-wise.
pub fn update_position(position: &[f64], velocity: &[f64]) -> Vec<f64> {
    assert_eq!(
        position.len(),
        velocity.len(),
        "position/velocity dimension mismatch"
    );
    position.iter().zip(velocity).map(|(x, v)| x + v).collect()
}

fn draw_coefficients<R: Rng>(rng: &mut R, d: usize, scalar: bool) -> Vec<f64> {
    if scalar {
        let r1 = rng.gen::<f64>();
        let r2 = rng.gen::<f64>();
        let mut out = vec![r1; d];
        out.extend(std::iter::repeat(r2).take(d));
        out
    } else {
        (0..2 * d).map(|_| rng.gen::<f64>()).collect()
    }
}

fn clamp_velocity(v: &mut [f64], range: &[f64], fraction: Option<f64>) {
    if let Some(f) = fraction {
        for (vi, r) in v.iter_mut().zip(range) {
            let lim = f * r;
            *vi = vi.clamp(-lim, lim);
        }
    }
}

/// The particle generation function: uniform draws within bounds, rejected
/// until one passes the survivability test. Velocity starts at zero and the
/// personal best is the initial position. Returns the particle and the
/// number of draws it took.
pub fn generate_particle<R: Rng>(
    problem: &dyn Problem,
    config: &PsoConfig,
    rng: &mut R,
) -> Result<(Particle, usize), PsoError> {
    let bounds = problem.bounds();
    for attempt in 1..=config.max_generation_attempts {
        let position = bounds.sample(rng);
        if problem.survive(&position).pass {
            let fitness = problem.fitness(&position);
            let d = position.len();
            return Ok((
                Particle {
                    pbest_position: position.clone(),
                    pbest_fitness: fitness,
                    position,
                    velocity: vec![0.0; d],
                },
                attempt,
            ));
        }
    }
    Err(PsoError::GenerationExhausted {
        attempts: config.max_generation_attempts,
        partial_history: Vec::new(),
    })
}

/// Result of advancing one particle by one iteration.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub particle: Particle,
    pub retries_used: usize,
    pub regenerated: bool,
    /// Draws consumed by regeneration, when it happened.
    pub generation_attempts: usize,
}

/// One hybrid iteration step for a single particle: velocity and position
/// updates, re-applied on survivability failure (same w, fresh draws,
/// state chained from the last attempt) up to the retry budget, then
/// replacement via the generation function.
pub fn hybrid_step(
    p: &Particle,
    gbest: &[f64],
    w: f64,
    problem: &dyn Problem,
    config: &PsoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, PsoError> {
    let d = p.position.len();
    let range = problem.bounds().range();
    let mut attempt = p.clone();
    for retry in 0..=config.max_velocity_retries {
        let draws = draw_coefficients(rng, d, config.scalar_draws);
        let mut velocity = update_velocity(&attempt, gbest, w, config.c1, config.c2, &draws);
        clamp_velocity(&mut velocity, &range, config.velocity_clamp);
        let position = update_position(&attempt.position, &velocity);
        if problem.survive(&position).pass {
            let fitness = problem.fitness(&position);
            let mut next = Particle {
                position,
                velocity,
                pbest_position: attempt.pbest_position.clone(),
                pbest_fitness: attempt.pbest_fitness,
            };
            if fitness < next.pbest_fitness {
                next.pbest_position = next.position.clone();
                next.pbest_fitness = fitness;
            }
            return Ok(StepOutcome {
                particle: next,
                retries_used: retry,
                regenerated: false,
                generation_attempts: 0,
            });
        }
        if config.chain_retry_velocity {
            attempt.position = position;
            attempt.velocity = velocity;
        }
    }
    let (particle, attempts) = generate_particle(problem, config, rng)?;
    Ok(StepOutcome {
        particle,
        retries_used: config.max_velocity_retries,
        regenerated: true,
        generation_attempts: attempts,
    })
}

/// Standard-PSO step: one update; an infeasible particle is replaced via the
/// generation function immediately, with no retries.
fn standard_step(
    p: &Particle,
    gbest: &[f64],
    w: f64,
    problem: &dyn Problem,
    config: &PsoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, PsoError> {
    let d = p.position.len();
    let range = problem.bounds().range();
    let draws = draw_coefficients(rng, d, config.scalar_draws);
    let mut velocity = update_velocity(p, gbest, w, config.c1, config.c2, &draws);
    clamp_velocity(&mut velocity, &range, config.velocity_clamp);
    let position = update_position(&p.position, &velocity);
    if problem.survive(&position).pass {
        let fitness = problem.fitness(&position);
        let mut next = Particle {
            position,
            velocity,
            pbest_position: p.pbest_position.clone(),
            pbest_fitness: p.pbest_fitness,
        };
        if fitness < next.pbest_fitness {
            next.pbest_position = next.position.clone();
            next.pbest_fitness = fitness;
        }
        return Ok(StepOutcome {
            particle: next,
            retries_used: 0,
            regenerated: false,
            generation_attempts: 0,
        });
    }
    let (particle, attempts) = generate_particle(problem, config, rng)?;
    Ok(StepOutcome {
        particle,
        retries_used: 0,
        regenerated: true,
        generation_attempts: attempts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Hybrid,
    Standard,
}

fn step_all(
    swarm: &[Particle],
    gbest: &[f64],
    w: f64,
    iteration: u64,
    problem: &dyn Problem,
    config: &PsoConfig,
    variant: Variant,
    mode: EvalMode,
) -> Vec<Result<StepOutcome, PsoError>> {
    let step = |(i, p): (usize, &Particle)| {
        let mut rng = rng::substream(config.rng_seed, iteration, i as u64);
        match variant {
            Variant::Hybrid => hybrid_step(p, gbest, w, problem, config, &mut rng),
            Variant::Standard => standard_step(p, gbest, w, problem, config, &mut rng),
        }
    };
    match mode {
        EvalMode::Sequential => swarm.iter().enumerate().map(step).collect(),
        #[cfg(feature = "parallel")]
        EvalMode::Parallel => {
            use rayon::prelude::*;
            swarm.par_iter().enumerate().map(step).collect()
        }
    }
}

/// Index of the best pbest, first-found wins on ties.
fn best_index(swarm: &[Particle]) -> usize {
    let mut best = 0;
    for (i, p) in swarm.iter().enumerate().skip(1) {
        if p.pbest_fitness < swarm[best].pbest_fitness {
            best = i;
        }
    }
    best
}

fn run(
    problem: &dyn Problem,
    config: &PsoConfig,
    variant: Variant,
    mode: EvalMode,
) -> Result<RunResult, PsoError> {
    config.validate()?;

    let mut swarm = Vec::with_capacity(config.swarm_size);
    for i in 0..config.swarm_size {
        let mut rng = rng::substream(config.rng_seed, 0, i as u64);
        let (p, _) = generate_particle(problem, config, &mut rng)?;
        swarm.push(p);
    }

    let mut gbest_idx = best_index(&swarm);
    let mut gbest_position = swarm[gbest_idx].pbest_position.clone();
    let mut gbest_fitness = swarm[gbest_idx].pbest_fitness;

    let mut fitness_history = Vec::with_capacity(config.max_iterations);
    let mut iterations = Vec::with_capacity(config.max_iterations);
    let mut regeneration_count = 0;
    let mut retry_count = 0;

    for t in 1..=config.max_iterations {
        let w = inertia_weight(t - 1, config);
        let outcomes = step_all(
            &swarm,
            &gbest_position,
            w,
            t as u64,
            problem,
            config,
            variant,
            mode,
        );
        let mut iter_regen = 0;
        let mut iter_retries = 0;
        let mut next = Vec::with_capacity(swarm.len());
        for outcome in outcomes {
            match outcome {
                Ok(o) => {
                    iter_retries += o.retries_used;
                    if o.regenerated {
                        iter_regen += 1;
                    }
                    next.push(o.particle);
                }
                Err(PsoError::GenerationExhausted { attempts, .. }) => {
                    return Err(PsoError::GenerationExhausted {
                        attempts,
                        partial_history: fitness_history,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        swarm = next;
        regeneration_count += iter_regen;
        retry_count += iter_retries;

        gbest_idx = best_index(&swarm);
        if swarm[gbest_idx].pbest_fitness < gbest_fitness {
            gbest_fitness = swarm[gbest_idx].pbest_fitness;
            gbest_position = swarm[gbest_idx].pbest_position.clone();
        }
        fitness_history.push(gbest_fitness);
        iterations.push(IterationRecord {
            iteration: t,
            gbest_fitness,
            w,
            regenerations: iter_regen,
            retries: iter_retries,
        });
    }

    Ok(RunResult {
        gbest_position,
        gbest_fitness,
        fitness_history,
        regeneration_count,
        retry_count,
        iterations,
        final_positions: swarm.into_iter().map(|p| p.position).collect(),
    })
}

/// Run the hybrid PSO (retry loop enabled) with the default evaluation mode.
pub fn optimize(problem: &dyn Problem, config: &PsoConfig) -> Result<RunResult, PsoError> {
    run(problem, config, Variant::Hybrid, EvalMode::default())
}

pub fn optimize_with_mode(
    problem: &dyn Problem,
    config: &PsoConfig,
    mode: EvalMode,
) -> Result<RunResult, PsoError> {
    run(problem, config, Variant::Hybrid, mode)
}

/// Standard-PSO baseline: infeasible particles are regenerated once per
/// iteration, no retry loop. Everything else matches `optimize`.
pub fn optimize_standard(problem: &dyn Problem, config: &PsoConfig) -> Result<RunResult, PsoError> {
    run(problem, config, Variant::Standard, EvalMode::default())
}

pub fn optimize_standard_with_mode(
    problem: &dyn Problem,
    config: &PsoConfig,
    mode: EvalMode,
) -> Result<RunResult, PsoError> {
    run(problem, config, Variant::Standard, mode)
}
