//! Command-line front end: scenario validation, single runs, concurrent
//! seed sweeps, and rigidity analysis, with traces, reports, and plots
//! written per run.
//!
//! Exit codes: 0 success; 1 usage/IO/simulation error; 2 convergence
//! assertion failed (`--assert-convergence`); 3 the run diverged
//! (estimator-error growth or non-finite final metrics).

mod output;
mod plot;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use formation_core::analysis::{convergence_report, ConvergenceReport, ConvergenceThresholds};
use formation_core::formation::{
    build_bearing_laplacian, check_infinitesimal_bearing_rigidity, check_anchored_block,
    symmetric_eig_extrema,
};
use formation_core::integrator::simulate;
use formation_core::{Error, Law, Scenario, Status, Trace};

pub use output::{summary_toml, trace_csv};

#[derive(Debug, Parser)]
#[command(
    name = "formation",
    about = "Bearing-based leader-follower formation tracking: validate, simulate, sweep, analyze",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a scenario file and print its derived quantities; no simulation.
    Check {
        /// Scenario file path, or a bundled name (sim1, sim2).
        scenario: String,
    },
    /// Rigidity and localizability analysis of a scenario's formation.
    Rigidity {
        /// Scenario file path, or a bundled name (sim1, sim2).
        scenario: String,
    },
    /// Simulate one scenario and write trace, reports, and plots.
    Run(RunArgs),
    /// Run one scenario across several seeds concurrently and aggregate.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LawArg {
    A,
    B,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file path, or a bundled name (sim1, sim2).
    pub scenario: String,
    /// Output directory (default: out/<scenario-name>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the scenario's initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario's control law.
    #[arg(long, value_enum)]
    pub law: Option<LawArg>,
    /// Exit nonzero unless the convergence report passes.
    #[arg(long)]
    pub assert_convergence: bool,
    /// Smooth the signum into clamp(s/eps, -1, 1); 0 keeps pure switching.
    #[arg(long, value_name = "EPS")]
    pub boundary_layer: Option<f64>,
    /// Law variant flags; currently supported: paper-literal-estimator.
    #[arg(long = "law-flag", value_name = "FLAG")]
    pub law_flags: Vec<String>,
    /// Write every k-th integration step to the trace (overrides the file).
    #[arg(long, value_name = "K")]
    pub decimation: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of seeds to run.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 1)]
    pub seed_start: u64,
}

pub fn execute(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Check { scenario } => check(scenario),
        Command::Rigidity { scenario } => rigidity(scenario),
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
    }
}

/// Load a scenario from a bundled name or a file path.
pub fn load_scenario(name_or_path: &str) -> anyhow::Result<Scenario> {
    if let Some(result) = Scenario::builtin(name_or_path) {
        return result.map_err(|e| anyhow!(format_load_error(e)));
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(anyhow!(
            "no bundled scenario or file named '{name_or_path}' (bundled: sim1, sim2)"
        ));
    }
    Scenario::load(path).map_err(|e| anyhow!(format_load_error(e)))
}

fn format_load_error(e: Error) -> String {
    match e {
        Error::Validation(violations) => {
            let mut out = String::from("scenario is invalid:\n");
            for v in violations {
                out.push_str("  - ");
                out.push_str(&v);
                out.push('\n');
            }
            out
        }
        other => other.to_string(),
    }
}

fn apply_overrides(scenario: Scenario, args: &RunArgs) -> anyhow::Result<Scenario> {
    let mut config = scenario.config;
    if let Some(law) = args.law {
        config.law = match law {
            LawArg::A => Law::A,
            LawArg::B => Law::B,
        };
    }
    if let Some(seed) = args.seed {
        config.init.seed = seed;
    }
    if let Some(eps) = args.boundary_layer {
        config.options.boundary_layer = eps;
    }
    if let Some(k) = args.decimation {
        config.output.decimation = k;
    }
    for flag in &args.law_flags {
        match flag.as_str() {
            "paper-literal-estimator" => config.options.paper_literal_estimator = true,
            other => return Err(anyhow!("unknown --law-flag '{other}'")),
        }
    }
    Scenario::from_config(config).map_err(|e| anyhow!(format_load_error(e)))
}

fn check(name_or_path: &str) -> anyhow::Result<i32> {
    let scenario = load_scenario(name_or_path)?;
    let rigidity = check_infinitesimal_bearing_rigidity(&scenario.spec)?;
    let anchored = check_anchored_block(&scenario.spec)?;
    let g = &scenario.gains;
    println!("scenario '{}' is valid", scenario.config.name);
    println!("  law {}", scenario.law);
    if let Some(notes) = &scenario.config.notes {
        println!("  notes: {notes}");
    }
    println!(
        "  agents {} ({} leaders), dimension {}",
        scenario.spec.n_agents(),
        scenario.spec.n_leaders(),
        scenario.spec.dim()
    );
    println!(
        "  gains k1={} k2={} k3={} k4={} k5={} k6={}",
        g.k1, g.k2, g.k3, g.k4, g.k5, g.k6
    );
    println!(
        "  velocity bounds delta1={:.6} delta2={:.6}; reaching margin {:.6}",
        g.delta1,
        g.delta2,
        g.reaching_margin(scenario.law)
    );
    println!(
        "  rigidity: rank(B) = {} (expected {}), rigid: {}",
        rigidity.rank, rigidity.expected_rank, rigidity.rigid
    );
    println!(
        "  anchored block: lambda_min(B_ff) = {:.6}, lambda_max = {:.6}",
        anchored.lambda_min, anchored.lambda_max
    );
    let d = scenario.spec.dim();
    for i in 0..scenario.spec.n_agents() {
        let p = scenario.realization.agent_position(d, i);
        let coords: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
        let role = if scenario.spec.is_leader(i) { "leader" } else { "follower" };
        println!("  agent {} ({role}): desired position [{}]", i + 1, coords.join(", "));
    }
    Ok(0)
}

fn rigidity(name_or_path: &str) -> anyhow::Result<i32> {
    // Retry with the rigidity gate off so non-rigid formations can still
    // be analyzed and reported.
    let scenario = match load_scenario(name_or_path) {
        Ok(s) => s,
        Err(first) => {
            let mut config = retry_config(name_or_path).ok_or(first)?;
            config.options.skip_rigidity_check = true;
            Scenario::from_config(config).map_err(|e| anyhow!(format_load_error(e)))?
        }
    };
    let report = check_infinitesimal_bearing_rigidity(&scenario.spec)?;
    let anchored = check_anchored_block(&scenario.spec)?;
    let blocks = build_bearing_laplacian(&scenario.spec);
    let (l_lo, l_hi) = symmetric_eig_extrema(&blocks.full);
    println!("formation of scenario '{}':", scenario.config.name);
    println!(
        "  rank(B) = {} of expected {} -> {}",
        report.rank,
        report.expected_rank,
        if report.rigid { "infinitesimally bearing rigid" } else { "NOT rigid" }
    );
    println!("  null-space dimension {}", report.nullity);
    let sv: Vec<String> = report.singular_values.iter().map(|s| format!("{s:.3e}")).collect();
    println!("  singular values: [{}]", sv.join(", "));
    println!("  B spectrum within [{l_lo:.6}, {l_hi:.6}]");
    println!(
        "  B_ff: lambda_min = {:.6}, lambda_max = {:.6}, positive definite: {}",
        anchored.lambda_min, anchored.lambda_max, anchored.positive_definite
    );
    Ok(if report.rigid { 0 } else { 3 })
}

fn retry_config(name_or_path: &str) -> Option<formation_core::ScenarioConfig> {
    let text = if let Some(t) = formation_core::scenario::builtin_toml(name_or_path) {
        t.to_string()
    } else {
        std::fs::read_to_string(name_or_path).ok()?
    };
    toml::from_str(&text).ok()
}

/// Outcome of one simulated run, before exit-code policy is applied.
pub struct RunOutcome {
    pub report: ConvergenceReport,
    pub diverged: bool,
    pub out_dir: PathBuf,
}

/// Simulate a loaded scenario and write the six artifacts into `out_dir`:
/// trace.csv, summary.toml, report.toml, trajectories.svg, errors.svg,
/// velocities.svg.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> anyhow::Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let mut setup = scenario.sim_setup();
    setup.options.record_every = scenario.config.output.decimation;
    let initial = scenario.initial_state(None);
    let trace = simulate(&setup, &initial).map_err(|e| anyhow!("simulation failed: {e}"))?;
    let report = convergence_report(&trace, &ConvergenceThresholds::default());

    std::fs::write(out_dir.join("trace.csv"), trace_csv(&trace))?;
    std::fs::write(out_dir.join("summary.toml"), summary_toml(scenario, &trace, &report)?)?;
    std::fs::write(
        out_dir.join("report.toml"),
        toml::to_string_pretty(&report).context("serializing report")?,
    )?;
    std::fs::write(out_dir.join("trajectories.svg"), plot::trajectories(&trace))?;
    std::fs::write(out_dir.join("errors.svg"), plot::errors(&trace))?;
    std::fs::write(out_dir.join("velocities.svg"), plot::velocities(&trace))?;

    let diverged = diverged(&trace, &report);
    Ok(RunOutcome {
        report,
        diverged,
        out_dir: out_dir.to_path_buf(),
    })
}

fn diverged(trace: &Trace, report: &ConvergenceReport) -> bool {
    let growth_blown = report.estimator_growth.is_some_and(|g| g > 10.0);
    let last = trace.samples.last();
    let non_finite = last.is_some_and(|s| {
        !s.metrics.max_position_error().is_finite()
            || !s.metrics.sliding_norm.is_finite()
            || s.metrics.collision
    });
    growth_blown || non_finite
}

fn run(args: &RunArgs) -> anyhow::Result<i32> {
    let scenario = apply_overrides(load_scenario(&args.scenario)?, args)?;
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.config.name));
    let outcome = run_scenario(&scenario, &out_dir)?;
    println!(
        "scenario '{}' (law {}, seed {}): {}",
        scenario.config.name,
        scenario.law,
        scenario.config.init.seed,
        outcome.report.status
    );
    for f in &outcome.report.failures {
        println!("  {f}");
    }
    println!("artifacts in {}", outcome.out_dir.display());
    if outcome.diverged {
        println!("run diverged (see report.toml)");
        return Ok(3);
    }
    if args.assert_convergence && outcome.report.status != Status::Pass {
        return Ok(2);
    }
    Ok(0)
}

fn sweep(args: &SweepArgs) -> anyhow::Result<i32> {
    if args.seeds == 0 {
        return Err(anyhow!("--seeds must be at least 1"));
    }
    let base = apply_overrides(load_scenario(&args.run.scenario)?, &args.run)?;
    let out_root = args
        .run
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(format!("{}-sweep", base.config.name)));

    let seeds: Vec<u64> = (0..args.seeds).map(|k| args.seed_start + k).collect();
    let results: Vec<anyhow::Result<(u64, RunOutcome)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut config = base.config.clone();
                config.init.seed = seed;
                let dir = out_root.join(format!("seed-{seed}"));
                scope.spawn(move || -> anyhow::Result<(u64, RunOutcome)> {
                    let scenario = Scenario::from_config(config)
                        .map_err(|e| anyhow!(format_load_error(e)))?;
                    Ok((seed, run_scenario(&scenario, &dir)?))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut rows = Vec::new();
    let mut any_failed = false;
    let mut any_diverged = false;
    for result in results {
        let (seed, outcome) = result?;
        any_failed |= outcome.report.status != Status::Pass;
        any_diverged |= outcome.diverged;
        println!("seed {seed}: {}", outcome.report.status);
        rows.push((seed, outcome.report));
    }
    std::fs::write(out_root.join("aggregate.toml"), output::aggregate_toml(&rows)?)?;
    println!("aggregate in {}", out_root.join("aggregate.toml").display());
    if any_diverged {
        return Ok(3);
    }
    if args.run.assert_convergence && any_failed {
        return Ok(2);
    }
    Ok(0)
}
