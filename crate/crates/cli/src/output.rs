//! Textual artifacts: the trace CSV and the summary/aggregate reports.

use anyhow::Context;
use serde::Serialize;

use formation_core::analysis::ConvergenceReport;
use formation_core::formation::{check_infinitesimal_bearing_rigidity, check_anchored_block};
use formation_core::{Law, Scenario, Status, Trace};

fn axis_name(dim: usize, k: usize) -> String {
    if dim <= 3 {
        ["x", "y", "z"][k].to_string()
    } else {
        format!("a{}", k + 1)
    }
}

/// Render a trace as CSV. Columns: time; per-agent positions and
/// velocities; per-follower sliding variables and controls; under law B the
/// four estimator blocks per follower; per-agent squared position errors;
/// per-directed-edge squared bearing errors; per-agent velocity errors; the
/// stacked sliding-variable norm. Agent ids are 1-based.
pub fn trace_csv(trace: &Trace) -> String {
    let d = trace.dim;
    let l = trace.n_leaders;
    let followers = trace.n_agents - l;

    let mut header: Vec<String> = vec!["t".into()];
    for i in 0..trace.n_agents {
        for k in 0..d {
            header.push(format!("p{}_{}", i + 1, axis_name(d, k)));
        }
    }
    for i in 0..trace.n_agents {
        for k in 0..d {
            header.push(format!("v{}_{}", i + 1, axis_name(d, k)));
        }
    }
    for fi in 0..followers {
        for k in 0..d {
            header.push(format!("s{}_{}", l + fi + 1, axis_name(d, k)));
        }
    }
    for fi in 0..followers {
        for k in 0..d {
            header.push(format!("u{}_{}", l + fi + 1, axis_name(d, k)));
        }
    }
    if trace.law == Law::B {
        for block in ["phat", "vhat", "pbar", "vbar"] {
            for fi in 0..followers {
                for k in 0..d {
                    header.push(format!("{block}{}_{}", l + fi + 1, axis_name(d, k)));
                }
            }
        }
    }
    for i in 0..trace.n_agents {
        header.push(format!("epos{}", i + 1));
    }
    for &(i, j) in &trace.edges {
        header.push(format!("ebrg{}_{}", i + 1, j + 1));
    }
    for i in 0..trace.n_agents {
        header.push(format!("evel{}", i + 1));
    }
    header.push("snorm".into());

    let mut out = String::with_capacity(trace.samples.len() * header.len() * 12);
    out.push_str(&header.join(","));
    out.push('\n');

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in &trace.samples {
        row.clear();
        row.push(fmt(s.t));
        for p in &s.positions {
            row.extend(p.iter().map(|&x| fmt(x)));
        }
        for v in &s.velocities {
            row.extend(v.iter().map(|&x| fmt(x)));
        }
        row.extend(s.s_f.iter().map(|&x| fmt(x)));
        row.extend(s.u_f.iter().map(|&x| fmt(x)));
        if let Some(ests) = &s.estimators {
            for field in [0, 1, 2, 3] {
                for est in ests {
                    let block = match field {
                        0 => &est.p_hat,
                        1 => &est.v_hat,
                        2 => &est.p_bar,
                        _ => &est.v_bar,
                    };
                    row.extend(block.iter().map(|&x| fmt(x)));
                }
            }
        }
        row.extend(s.metrics.position_errors.iter().map(|&x| fmt(x)));
        row.extend(s.metrics.bearing_errors.iter().map(|&x| fmt(x)));
        row.extend(s.metrics.velocity_errors.iter().map(|&x| fmt(x)));
        row.push(fmt(s.metrics.sliding_norm));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Full precision so that round-tripping the CSV loses nothing.
fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    law: Law,
    seed: u64,
    scheme: formation_core::Scheme,
    h: f64,
    t_end: f64,
    duration: f64,
    decimation: usize,
    agents: usize,
    leaders: usize,
    directed_edges: usize,
    samples: usize,
    status: Status,
    rigidity: RigiditySummary,
    gains: GainsSummary,
    last_sample: LastSample,
}

#[derive(Serialize)]
struct RigiditySummary {
    rank: usize,
    expected_rank: usize,
    rigid: bool,
    lambda_min_ff: f64,
    lambda_max_ff: f64,
}

#[derive(Serialize)]
struct GainsSummary {
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
    k5: f64,
    k6: f64,
    delta1: f64,
    delta2: f64,
    reaching_margin: f64,
}

#[derive(Serialize)]
struct LastSample {
    t: f64,
    max_position_error: f64,
    max_bearing_error: f64,
    max_velocity_error: f64,
    sliding_norm: f64,
    gamma_norm: Option<f64>,
    delta_norm: Option<f64>,
}

/// Serialize the run summary: identity, spectra, gains, and the final
/// sample's metrics.
pub fn summary_toml(
    scenario: &Scenario,
    trace: &Trace,
    report: &ConvergenceReport,
) -> anyhow::Result<String> {
    let rigidity = check_infinitesimal_bearing_rigidity(&scenario.spec)
        .context("rigidity check for summary")?;
    let anchored = check_anchored_block(&scenario.spec).context("anchored-block check for summary")?;
    let last = trace.samples.last().context("trace has no samples")?;
    let g = &scenario.gains;
    let summary = Summary {
        scenario: &scenario.config.name,
        law: scenario.law,
        seed: scenario.config.init.seed,
        scheme: scenario.config.integrator.scheme,
        h: trace.h,
        t_end: scenario.config.integrator.t_end,
        duration: trace.duration(),
        decimation: scenario.config.output.decimation,
        agents: trace.n_agents,
        leaders: trace.n_leaders,
        directed_edges: trace.edges.len(),
        samples: trace.samples.len(),
        status: report.status,
        rigidity: RigiditySummary {
            rank: rigidity.rank,
            expected_rank: rigidity.expected_rank,
            rigid: rigidity.rigid,
            lambda_min_ff: anchored.lambda_min,
            lambda_max_ff: anchored.lambda_max,
        },
        gains: GainsSummary {
            k1: g.k1,
            k2: g.k2,
            k3: g.k3,
            k4: g.k4,
            k5: g.k5,
            k6: g.k6,
            delta1: g.delta1,
            delta2: g.delta2,
            reaching_margin: g.reaching_margin(scenario.law),
        },
        last_sample: LastSample {
            t: last.t,
            max_position_error: last.metrics.max_position_error(),
            max_bearing_error: last.metrics.max_bearing_error(),
            max_velocity_error: last.metrics.max_velocity_error(),
            sliding_norm: last.metrics.sliding_norm,
            gamma_norm: last.metrics.estimator.as_ref().map(|e| e.gamma_norm),
            delta_norm: last.metrics.estimator.as_ref().map(|e| e.delta_norm),
        },
    };
    toml::to_string_pretty(&summary).context("serializing summary")
}

#[derive(Serialize)]
struct Aggregate {
    runs: usize,
    passed: usize,
    failed: usize,
    inconclusive: usize,
    position_error: Stats,
    bearing_error: Stats,
    velocity_error: Stats,
    seeds: Vec<SeedRow>,
}

#[derive(Serialize)]
struct Stats {
    min: f64,
    max: f64,
    mean: f64,
}

impl Stats {
    fn over(values: impl Iterator<Item = f64>) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        if n == 0 {
            return Self { min: f64::NAN, max: f64::NAN, mean: f64::NAN };
        }
        Self { min, max, mean: sum / n as f64 }
    }
}

#[derive(Serialize)]
struct SeedRow {
    seed: u64,
    status: Status,
    final_max_position_error: f64,
    final_max_bearing_error: f64,
    final_max_velocity_error: f64,
}

/// Aggregate per-seed convergence reports into min/max/mean statistics.
pub fn aggregate_toml(rows: &[(u64, ConvergenceReport)]) -> anyhow::Result<String> {
    let reports: Vec<&ConvergenceReport> = rows.iter().map(|(_, r)| r).collect();
    let count = |st: Status| reports.iter().filter(|r| r.status == st).count();
    let agg = Aggregate {
        runs: rows.len(),
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        inconclusive: count(Status::Inconclusive),
        position_error: Stats::over(reports.iter().map(|r| r.final_max_position_error)),
        bearing_error: Stats::over(reports.iter().map(|r| r.final_max_bearing_error)),
        velocity_error: Stats::over(reports.iter().map(|r| r.final_max_velocity_error)),
        seeds: rows
            .iter()
            .map(|(seed, r)| SeedRow {
                seed: *seed,
                status: r.status,
                final_max_position_error: r.final_max_position_error,
                final_max_bearing_error: r.final_max_bearing_error,
                final_max_velocity_error: r.final_max_velocity_error,
            })
            .collect(),
    };
    toml::to_string_pretty(&agg).context("serializing aggregate")
}
