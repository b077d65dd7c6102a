//! Fixed-step deterministic integration of the coupled agent/estimator
//! dynamics.
//!
//! The right-hand sides are discontinuous (signum terms), so there is no
//! event detection: the solver takes fixed steps and the sliding variables
//! chatter inside a band of width O(k2 * h). Leaders are exogenous and
//! advance by the profile's closed-form integral rather than numerically.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::{compute_metrics, Sample, Trace};
use crate::control::{
    control_a, control_b, estimator_step, reference_generator_step, sliding_variable,
    EstimatorVariant, FollowerEstimator, GainSet, Law, NeighborComm, NeighborView,
};
use crate::error::{Error, Result};
use crate::formation::FormationSpec;
use crate::localization::TargetTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ForwardEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Step size in seconds.
    pub h: f64,
    /// Simulation horizon in seconds.
    pub t_end: f64,
    /// Inter-neighbor distances below this abort the run.
    pub eps_collide: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            h: 1e-3,
            t_end: 30.0,
            eps_collide: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if !self.h.is_finite() || self.h <= 0.0 {
            violations.push(format!("step size must be positive, got {}", self.h));
        }
        if self.t_end < self.h {
            violations.push(format!(
                "duration {} shorter than one step {}",
                self.t_end, self.h
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }
}

/// One fixed step of the chosen scheme over a generic first-order system.
pub fn step<F>(x: &DVector<f64>, t: f64, h: f64, scheme: Scheme, rhs: &F) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    match scheme {
        Scheme::ForwardEuler => Ok(x + rhs(t, x)? * h),
        Scheme::Rk4 => {
            let k1 = rhs(t, x)?;
            let k2 = rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h)))?;
            let k3 = rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
            let k4 = rhs(t + h, &(x + &k3 * h))?;
            Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        }
    }
}

/// Full swarm snapshot at one instant. Leader entries are exogenous; the
/// estimator block is present only under law B and covers followers only.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: f64,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub estimators: Option<Vec<FollowerEstimator>>,
}

/// Runtime knobs that are not part of the scenario's physics.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// `0.0` keeps the pure signum; positive values smooth it into
    /// `clamp(s/eps, -1, 1)`.
    pub boundary_layer: f64,
    pub estimator_variant: EstimatorVariant,
    /// Record every k-th step into the trace (1 = every step).
    pub record_every: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            boundary_layer: 0.0,
            estimator_variant: EstimatorVariant::ProofConsistent,
            record_every: 1,
        }
    }
}

/// Everything `simulate` needs, borrowed from the scenario.
pub struct SimSetup<'a> {
    pub spec: &'a FormationSpec,
    pub gains: &'a GainSet,
    pub law: Law,
    pub trajectory: &'a TargetTrajectory,
    pub integrator: IntegratorConfig,
    pub options: SimOptions,
}

struct Layout {
    dim: usize,
    n_leaders: usize,
    n_followers: usize,
    law: Law,
}

impl Layout {
    fn df(&self) -> usize {
        self.dim * self.n_followers
    }

    fn flat_len(&self) -> usize {
        match self.law {
            Law::A => 2 * self.df(),
            Law::B => 6 * self.df(),
        }
    }

    fn follower_pos(&self, flat: &DVector<f64>, fi: usize) -> DVector<f64> {
        flat.rows(fi * self.dim, self.dim).into_owned()
    }

    fn follower_vel(&self, flat: &DVector<f64>, fi: usize) -> DVector<f64> {
        flat.rows(self.df() + fi * self.dim, self.dim).into_owned()
    }

    fn estimator(&self, flat: &DVector<f64>, fi: usize) -> FollowerEstimator {
        let df = self.df();
        let d = self.dim;
        FollowerEstimator {
            p_hat: flat.rows(2 * df + fi * d, d).into_owned(),
            v_hat: flat.rows(3 * df + fi * d, d).into_owned(),
            p_bar: flat.rows(4 * df + fi * d, d).into_owned(),
            v_bar: flat.rows(5 * df + fi * d, d).into_owned(),
        }
    }
}

fn pack(layout: &Layout, state: &SwarmState) -> DVector<f64> {
    let d = layout.dim;
    let df = layout.df();
    let mut flat = DVector::zeros(layout.flat_len());
    for fi in 0..layout.n_followers {
        let agent = layout.n_leaders + fi;
        flat.rows_mut(fi * d, d).copy_from(&state.positions[agent]);
        flat.rows_mut(df + fi * d, d)
            .copy_from(&state.velocities[agent]);
    }
    if layout.law == Law::B {
        let ests = state
            .estimators
            .as_ref()
            .expect("law B state carries estimators");
        for (fi, est) in ests.iter().enumerate() {
            flat.rows_mut(2 * df + fi * d, d).copy_from(&est.p_hat);
            flat.rows_mut(3 * df + fi * d, d).copy_from(&est.v_hat);
            flat.rows_mut(4 * df + fi * d, d).copy_from(&est.p_bar);
            flat.rows_mut(5 * df + fi * d, d).copy_from(&est.v_bar);
        }
    }
    flat
}

fn unpack(layout: &Layout, setup: &SimSetup, t: f64, flat: &DVector<f64>) -> SwarmState {
    let mut positions = Vec::with_capacity(layout.n_leaders + layout.n_followers);
    let mut velocities = Vec::with_capacity(positions.capacity());
    let v_c = setup.trajectory.velocity_at(t);
    let offset = setup.trajectory.profile().integral(t);
    for leader in setup.spec.leader_positions() {
        positions.push(leader + &offset);
        velocities.push(v_c.clone());
    }
    for fi in 0..layout.n_followers {
        positions.push(layout.follower_pos(flat, fi));
        velocities.push(layout.follower_vel(flat, fi));
    }
    let estimators = (layout.law == Law::B)
        .then(|| (0..layout.n_followers).map(|fi| layout.estimator(flat, fi)).collect());
    SwarmState {
        t,
        positions,
        velocities,
        estimators,
    }
}

/// Per-step controller evaluation shared between the RHS and the trace
/// sampler.
struct Evaluation {
    derivative: DVector<f64>,
    s_f: DVector<f64>,
    u_f: DVector<f64>,
}

fn neighbor_views(
    spec: &FormationSpec,
    state: &SwarmState,
    agent: usize,
    v_c: &DVector<f64>,
    law: Law,
    eps_collide: f64,
) -> Result<Vec<NeighborView>> {
    let l = spec.n_leaders();
    let mut views = Vec::new();
    for j in spec.neighbors(agent) {
        let rel_pos = &state.positions[j] - &state.positions[agent];
        if rel_pos.norm() < eps_collide {
            // 1-based agent ids in reports
            return Err(Error::Collision {
                i: agent + 1,
                j: j + 1,
                t: state.t,
                dist: rel_pos.norm(),
                eps: eps_collide,
            });
        }
        let rel_vel = &state.velocities[j] - &state.velocities[agent];
        let comm = (law == Law::B).then(|| {
            if j < l {
                // leaders broadcast their true position and v_c
                NeighborComm {
                    p_hat: state.positions[j].clone(),
                    v_hat: v_c.clone(),
                    p_bar: state.positions[j].clone(),
                    v_bar: v_c.clone(),
                }
            } else {
                let est = &state.estimators.as_ref().expect("law B estimators")[j - l];
                NeighborComm {
                    p_hat: est.p_hat.clone(),
                    v_hat: est.v_hat.clone(),
                    p_bar: est.p_bar.clone(),
                    v_bar: est.v_bar.clone(),
                }
            }
        });
        views.push(NeighborView {
            bearing_ref: spec
                .desired_bearing(agent, j)
                .expect("validated edge")
                .clone(),
            rel_pos,
            rel_vel,
            comm,
        });
    }
    Ok(views)
}

fn evaluate(layout: &Layout, setup: &SimSetup, t: f64, flat: &DVector<f64>) -> Result<Evaluation> {
    let d = layout.dim;
    let df = layout.df();
    let state = unpack(layout, setup, t, flat);
    let v_c = setup.trajectory.velocity_at(t);
    let mut derivative = DVector::zeros(layout.flat_len());
    let mut s_f = DVector::zeros(df);
    let mut u_f = DVector::zeros(df);

    for fi in 0..layout.n_followers {
        let agent = layout.n_leaders + fi;
        let views = neighbor_views(
            setup.spec,
            &state,
            agent,
            &v_c,
            setup.law,
            setup.integrator.eps_collide,
        )?;
        let vel = &state.velocities[agent];
        derivative.rows_mut(fi * d, d).copy_from(vel); // dp = v

        match setup.law {
            Law::A => {
                let out = control_a(vel, setup.gains, setup.options.boundary_layer, &views);
                derivative.rows_mut(df + fi * d, d).copy_from(&out.u);
                s_f.rows_mut(fi * d, d).copy_from(&out.s);
                u_f.rows_mut(fi * d, d).copy_from(&out.u);
            }
            Law::B => {
                let est = &state.estimators.as_ref().expect("law B estimators")[fi];
                let (dp_bar, dv_bar, u_bar, s) = reference_generator_step(
                    est,
                    setup.gains,
                    setup.options.boundary_layer,
                    &views,
                );
                let u = control_b(est, &u_bar, setup.gains);
                let (dp_hat, dv_hat) = estimator_step(
                    est,
                    &u,
                    setup.gains,
                    setup.options.estimator_variant,
                    &views,
                );
                derivative.rows_mut(df + fi * d, d).copy_from(&u);
                derivative.rows_mut(2 * df + fi * d, d).copy_from(&dp_hat);
                derivative.rows_mut(3 * df + fi * d, d).copy_from(&dv_hat);
                derivative.rows_mut(4 * df + fi * d, d).copy_from(&dp_bar);
                derivative.rows_mut(5 * df + fi * d, d).copy_from(&dv_bar);
                s_f.rows_mut(fi * d, d).copy_from(&s);
                u_f.rows_mut(fi * d, d).copy_from(&u);
            }
        }
    }
    Ok(Evaluation { derivative, s_f, u_f })
}

fn guard_finite(layout: &Layout, flat: &DVector<f64>, t: f64) -> Result<()> {
    if flat.iter().all(|x| x.is_finite()) {
        return Ok(());
    }
    let d = layout.dim;
    for fi in 0..layout.n_followers {
        let blocks = 0..layout.flat_len() / (layout.df());
        for b in blocks {
            let start = b * layout.df() + fi * d;
            if flat.rows(start, d).iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalBlowup {
                    agent: layout.n_leaders + fi + 1, // 1-based in reports
                    t,
                });
            }
        }
    }
    Err(Error::NumericalBlowup { agent: 0, t })
}

/// Run a scenario from an initial state to `t_end`, sampling controls and
/// metrics along the way. Deterministic: identical inputs give bit-identical
/// traces.
pub fn simulate(setup: &SimSetup, initial: &SwarmState) -> Result<Trace> {
    setup.integrator.validate()?;
    let layout = Layout {
        dim: setup.spec.dim(),
        n_leaders: setup.spec.n_leaders(),
        n_followers: setup.spec.n_followers(),
        law: setup.law,
    };
    let h = setup.integrator.h;
    let n_steps = (setup.integrator.t_end / h).round() as usize;
    let record_every = setup.options.record_every.max(1);

    let mut flat = pack(&layout, initial);
    let rhs = |t: f64, x: &DVector<f64>| evaluate(&layout, setup, t, x).map(|e| e.derivative);

    let mut samples = Vec::with_capacity(n_steps / record_every + 2);
    let record = |samples: &mut Vec<Sample>, t: f64, flat: &DVector<f64>| -> Result<()> {
        let state = unpack(&layout, setup, t, flat);
        let eval = evaluate(&layout, setup, t, flat)?;
        let metrics = compute_metrics(
            setup.spec,
            setup.trajectory,
            &state,
            &eval.s_f,
            setup.integrator.eps_collide,
        );
        samples.push(Sample {
            t,
            positions: state.positions,
            velocities: state.velocities,
            estimators: state.estimators,
            s_f: eval.s_f,
            u_f: eval.u_f,
            metrics,
        });
        Ok(())
    };

    record(&mut samples, 0.0, &flat)?;
    for k in 0..n_steps {
        let t = k as f64 * h;
        flat = step(&flat, t, h, setup.integrator.scheme, &rhs).map_err(|e| at_time(e, t))?;
        guard_finite(&layout, &flat, t + h)?;
        if (k + 1) % record_every == 0 || k + 1 == n_steps {
            record(&mut samples, (k + 1) as f64 * h, &flat)?;
        }
    }

    Ok(Trace {
        law: setup.law,
        dim: layout.dim,
        n_agents: setup.spec.n_agents(),
        n_leaders: layout.n_leaders,
        h,
        edges: setup.spec.edges().to_vec(),
        samples,
    })
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::Collision { i, j, dist, eps, .. } => Error::Collision { i, j, t, dist, eps },
        other => other,
    }
}

/// Stacked per-agent sliding variables for an arbitrary snapshot; exposed
/// for the stacked-vs-local identity checks.
pub fn stacked_sliding_variable(
    spec: &FormationSpec,
    state: &SwarmState,
    k_slope: f64,
    v_c: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = spec.dim();
    let f = spec.n_followers();
    let mut s_f = DVector::zeros(d * f);
    for fi in 0..f {
        let agent = spec.n_leaders() + fi;
        let views = neighbor_views(spec, state, agent, v_c, Law::A, 1e-12)?;
        let s = sliding_variable(d, k_slope, &views);
        s_f.rows_mut(fi * d, d).copy_from(&s);
    }
    Ok(s_f)
}
