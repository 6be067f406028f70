//! Batch front end: run seeded optimizations, dump convergence CSVs and a
//! summary table, export netlists, and compare the hybrid against standard
//! PSO. Exit codes: 0 success, 1 configuration error, 2 optimization
//! failure (generation exhausted).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use opamp_pso::bench::{compare, constrained_sphere};
use opamp_pso::opamp::{evaluate, DesignVector, EvalReport, OpampProblem, SpecTable, TechParams};
use opamp_pso::spice::{
    emit_netlist, parse_results, run_simulator, AnalyticSupplement, NetlistTemplate,
};
use opamp_pso::{optimize, Problem, PsoConfig, PsoError, RunResult, Survival};

/// Environment variable consulted for the simulator binary when the config
/// file does not set one.
const SIMULATOR_ENV: &str = "OPAMP_PSO_SIMULATOR";

#[derive(Parser)]
#[command(name = "opamp-pso", version, about = "Hybrid-PSO op-amp sizing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Backend {
    Analytic,
    Spice,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer for every seed and write CSV + summary artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed list, overriding the config file.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Swarm size override.
        #[arg(long)]
        swarm: Option<usize>,
        /// Iteration-count override.
        #[arg(long)]
        iters: Option<usize>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Survivability backend override.
        #[arg(long, value_enum)]
        backend: Option<Backend>,
    },
    /// Emit a netlist for a design vector taken from a summary file or from
    /// explicit flags.
    ExportNetlist {
        #[arg(long)]
        config: PathBuf,
        /// Summary file from a finished run to read the design from.
        #[arg(long)]
        from_summary: Option<PathBuf>,
        #[arg(long)]
        w12: Option<f64>,
        #[arg(long)]
        w34: Option<f64>,
        #[arg(long)]
        w58: Option<f64>,
        #[arg(long)]
        w6: Option<f64>,
        #[arg(long)]
        w7: Option<f64>,
        #[arg(long)]
        ibias: Option<f64>,
        /// Common-mode voltage; defaults to the ICMR midpoint.
        #[arg(long)]
        vcm: Option<f64>,
    },
    /// Hybrid-vs-standard comparison statistics on the configured problem.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpiceConfig {
    simulator_path: Option<PathBuf>,
    model_include_path: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    timeout_secs: f64,
}

fn default_timeout() -> f64 {
    60.0
}

impl Default for SpiceConfig {
    fn default() -> Self {
        Self {
            simulator_path: None,
            model_include_path: None,
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchConfig {
    #[serde(default = "default_dimension")]
    dimension: usize,
    #[serde(default = "default_fraction")]
    feasible_fraction: f64,
}

fn default_dimension() -> usize {
    6
}

fn default_fraction() -> f64 {
    0.5
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dimension: default_dimension(),
            feasible_fraction: default_fraction(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    /// opamp-analytic | opamp-spice | bench
    #[serde(default = "default_problem")]
    problem: String,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    pso: PsoConfig,
    #[serde(default)]
    specs: SpecTable,
    #[serde(default)]
    tech: TechParams,
    #[serde(default)]
    spice: SpiceConfig,
    #[serde(default)]
    bench: BenchConfig,
}

fn default_problem() -> String {
    "opamp-analytic".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// 1 = configuration problem, 2 = optimization failure.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<PsoError> for CliError {
    fn from(e: PsoError) -> Self {
        match e {
            PsoError::GenerationExhausted { .. } => CliError::runtime(e.to_string()),
            PsoError::Config(_) => CliError::config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(format!("io error: {e}"))
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
    config
        .pso
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    config
        .specs
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    config
        .tech
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(config)
}

fn simulator_path(config: &RunConfig) -> Result<PathBuf, CliError> {
    if let Some(p) = &config.spice.simulator_path {
        return Ok(p.clone());
    }
    if let Ok(p) = std::env::var(SIMULATOR_ENV) {
        return Ok(PathBuf::from(p));
    }
    Err(CliError::config(format!(
        "spice.simulator_path not set and {SIMULATOR_ENV} is empty"
    )))
}

fn netlist_template(config: &RunConfig) -> Result<NetlistTemplate, CliError> {
    let model = config.spice.model_include_path.as_ref().ok_or_else(|| {
        CliError::config("spice.model_include_path is required for the spice backend")
    })?;
    if !model.exists() {
        return Err(CliError::config(format!(
            "spice.model_include_path does not exist: {}",
            model.display()
        )));
    }
    Ok(NetlistTemplate::with_default_deck(model))
}

/// Survivability through an external simulator: one run per ICMR endpoint
/// plus the midpoint, passing iff every report passes. Area and slew rate
/// come from the analytical side (no transient analysis in the deck).
struct SpiceProblem {
    specs: SpecTable,
    tech: TechParams,
    template: NetlistTemplate,
    simulator: PathBuf,
    timeout: Duration,
    analytic: OpampProblem,
}

impl SpiceProblem {
    fn report_at(&self, dv: &DesignVector, vcm: f64) -> Result<EvalReport, String> {
        let netlist = emit_netlist(dv, &self.tech, &self.specs, vcm, &self.template)
            .map_err(|e| e.to_string())?;
        let sim =
            run_simulator(&netlist, &self.simulator, self.timeout).map_err(|e| e.to_string())?;
        let analytic = evaluate(dv, &self.specs, &self.tech);
        let supplement = AnalyticSupplement {
            area: analytic.area,
            slew_rate: analytic.slew_rate,
        };
        parse_results(&sim, &self.specs, supplement).map_err(|e| e.to_string())
    }
}

impl Problem for SpiceProblem {
    fn fitness(&self, position: &[f64]) -> f64 {
        self.analytic.fitness(position)
    }

    fn survive(&self, position: &[f64]) -> Survival {
        let dv = DesignVector::from_position(position);
        let mid = 0.5 * (self.specs.vcm_low + self.specs.vcm_high);
        for vcm in [self.specs.vcm_low, self.specs.vcm_high, mid] {
            match self.report_at(&dv, vcm) {
                Ok(report) if report.pass => {}
                Ok(report) => return Survival::fail(report.violations),
                Err(e) => return Survival::fail(vec![e]),
            }
        }
        Survival::pass()
    }

    fn bounds(&self) -> opamp_pso::Bounds {
        self.analytic.bounds()
    }
}

fn build_problem(
    config: &RunConfig,
    backend: Option<Backend>,
) -> Result<Box<dyn Problem>, CliError> {
    let name = match backend {
        Some(Backend::Analytic) => "opamp-analytic",
        Some(Backend::Spice) => "opamp-spice",
        None => config.problem.as_str(),
    };
    match name {
        "opamp-analytic" => Ok(Box::new(
            OpampProblem::new(config.specs, config.tech)
                .map_err(|e| CliError::config(e.to_string()))?,
        )),
        "opamp-spice" => {
            let analytic = OpampProblem::new(config.specs, config.tech)
                .map_err(|e| CliError::config(e.to_string()))?;
            Ok(Box::new(SpiceProblem {
                specs: config.specs,
                tech: config.tech,
                template: netlist_template(config)?,
                simulator: simulator_path(config)?,
                timeout: Duration::from_secs_f64(config.spice.timeout_secs),
                analytic,
            }))
        }
        "bench" => {
            if !(config.bench.dimension >= 1) {
                return Err(CliError::config("bench.dimension: must be >= 1"));
            }
            if !(config.bench.feasible_fraction > 0.0 && config.bench.feasible_fraction <= 1.0) {
                return Err(CliError::config(
                    "bench.feasible_fraction: must be in (0, 1]",
                ));
            }
            Ok(Box::new(constrained_sphere(
                config.bench.dimension,
                config.bench.feasible_fraction,
            )))
        }
        other => Err(CliError::config(format!(
            "unknown problem \"{other}\"; expected one of: opamp-analytic, opamp-spice, bench"
        ))),
    }
}

fn write_csv(path: &Path, result: &RunResult) -> Result<(), CliError> {
    let mut text = String::from("iteration,gbest_fitness,w,regenerations,retries\n");
    for rec in &result.iterations {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.iteration, rec.gbest_fitness, rec.w, rec.regenerations, rec.retries
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn summary_text(
    problem_name: &str,
    best_seed: u64,
    best: &RunResult,
    report: Option<&EvalReport>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("problem = {problem_name}\n"));
    out.push_str(&format!("best_seed = {best_seed}\n"));
    out.push_str(&format!("fitness = {}\n", best.gbest_fitness));
    out.push_str(&format!("regenerations = {}\n", best.regeneration_count));
    out.push_str(&format!("retries = {}\n", best.retry_count));
    if let Some(report) = report {
        let dv = DesignVector::from_position(&best.gbest_position);
        out.push_str("\n[design]\n");
        out.push_str(&format!("w12 = {}\n", dv.w12));
        out.push_str(&format!("w34 = {}\n", dv.w34));
        out.push_str(&format!("w58 = {}\n", dv.w58));
        out.push_str(&format!("w6 = {}\n", dv.w6));
        out.push_str(&format!("w7 = {}\n", dv.w7));
        out.push_str(&format!("ibias = {}\n", dv.ibias));
        out.push_str("\n[performance]\n");
        out.push_str(&format!("av_db = {}\n", report.av_db));
        out.push_str(&format!("f3db = {}\n", report.f3db));
        out.push_str(&format!("ugb = {}\n", report.ugb));
        out.push_str(&format!("phase_margin = {}\n", report.phase_margin));
        out.push_str(&format!("slew_rate = {}\n", report.slew_rate));
        out.push_str(&format!("power = {}\n", report.power));
        out.push_str(&format!("noise_psd = {}\n", report.noise_psd));
        out.push_str(&format!("area = {}\n", report.area));
        out.push_str(&format!("pass = {}\n", report.pass));
    } else {
        out.push_str("\n[position]\n");
        for (i, x) in best.gbest_position.iter().enumerate() {
            out.push_str(&format!("x{i} = {x}\n"));
        }
    }
    out
}

fn run_command(
    config_path: &Path,
    seeds: Option<Vec<u64>>,
    swarm: Option<usize>,
    iters: Option<usize>,
    out: Option<PathBuf>,
    backend: Option<Backend>,
) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    if let Some(swarm) = swarm {
        config.pso.swarm_size = swarm;
    }
    if let Some(iters) = iters {
        config.pso.max_iterations = iters;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    config
        .pso
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    if config.seeds.is_empty() {
        return Err(CliError::config("seeds: must not be empty"));
    }

    let problem = build_problem(&config, backend)?;
    std::fs::create_dir_all(&config.output_dir)?;

    let mut results: BTreeMap<u64, RunResult> = BTreeMap::new();
    for &seed in &config.seeds {
        let cfg = PsoConfig {
            rng_seed: seed,
            ..config.pso.clone()
        };
        let result = optimize(problem.as_ref(), &cfg)?;
        write_csv(&config.output_dir.join(format!("seed-{seed}.csv")), &result)?;
        results.insert(seed, result);
    }

    // Best run across seeds is the final answer.
    let (&best_seed, best) = results
        .iter()
        .min_by(|a, b| a.1.gbest_fitness.total_cmp(&b.1.gbest_fitness))
        .expect("at least one seed");

    let is_opamp = config.problem.starts_with("opamp") || backend.is_some();
    let report = is_opamp.then(|| {
        evaluate(
            &DesignVector::from_position(&best.gbest_position),
            &config.specs,
            &config.tech,
        )
    });
    let summary = summary_text(&config.problem, best_seed, best, report.as_ref());
    std::fs::write(config.output_dir.join("summary.txt"), summary)?;

    println!("best fitness = {} (seed {})", best.gbest_fitness, best_seed);
    Ok(())
}

/// Pull the six `[design]` values back out of a summary file.
fn design_from_summary(path: &Path) -> Result<DesignVector, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read summary {}: {e}", path.display())))?;
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    for line in text.lines() {
        if let Some((key, value)) = line.split_once('=') {
            if let Ok(v) = value.trim().parse::<f64>() {
                values.insert(key.trim(), v);
            }
        }
    }
    let get = |name: &str| -> Result<f64, CliError> {
        values
            .get(name)
            .copied()
            .ok_or_else(|| CliError::config(format!("summary {}: missing {name}", path.display())))
    };
    Ok(DesignVector {
        w12: get("w12")?,
        w34: get("w34")?,
        w58: get("w58")?,
        w6: get("w6")?,
        w7: get("w7")?,
        ibias: get("ibias")?,
    })
}

#[allow(clippy::too_many_arguments)]
fn export_netlist_command(
    config_path: &Path,
    from_summary: Option<PathBuf>,
    explicit: [Option<f64>; 6],
    vcm: Option<f64>,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let template = netlist_template(&config)?;
    let dv = if let Some(summary) = from_summary {
        design_from_summary(&summary)?
    } else {
        let [w12, w34, w58, w6, w7, ibias] = explicit;
        let field = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                CliError::config(format!(
                    "--{name} is required when --from-summary is not given"
                ))
            })
        };
        DesignVector {
            w12: field(w12, "w12")?,
            w34: field(w34, "w34")?,
            w58: field(w58, "w58")?,
            w6: field(w6, "w6")?,
            w7: field(w7, "w7")?,
            ibias: field(ibias, "ibias")?,
        }
    };
    let vcm = vcm.unwrap_or(0.5 * (config.specs.vcm_low + config.specs.vcm_high));
    let netlist = emit_netlist(&dv, &config.tech, &config.specs, vcm, &template)
        .map_err(|e| CliError::config(e.to_string()))?;
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("netlist.sp");
    std::fs::write(&path, netlist)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn bench_command(config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let problem = build_problem(&config, None)?;
    let stats = compare(problem.as_ref(), &config.pso, &config.seeds)
        .map_err(|e| CliError::config(e.to_string()))?;
    println!("algorithm  best          worst         mean          std_dev       regens  retries");
    for (name, s) in [("hybrid", &stats.hybrid), ("standard", &stats.standard)] {
        println!(
            "{name:<10} {:<13.6e} {:<13.6e} {:<13.6e} {:<13.6e} {:<7.1} {:<7.1}",
            s.best, s.worst, s.mean, s.std_dev, s.mean_regenerations, s.mean_retries
        );
        if !s.failed_seeds.is_empty() {
            println!("{name}: failed seeds {:?}", s.failed_seeds);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seeds,
            swarm,
            iters,
            out,
            backend,
        } => run_command(&config, seeds, swarm, iters, out, backend),
        Command::ExportNetlist {
            config,
            from_summary,
            w12,
            w34,
            w58,
            w6,
            w7,
            ibias,
            vcm,
        } => export_netlist_command(&config, from_summary, [w12, w34, w58, w6, w7, ibias], vcm),
        Command::Bench { config } => bench_command(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
