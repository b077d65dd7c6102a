//! Error metrics, convergence reporting, and the analytical checks backing
//! the finite-time claims: the Lyapunov settling-time bound and a
//! simulation oracle for the disturbed signum system.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::{FollowerEstimator, Law};
use crate::error::{Error, Result};
use crate::formation::{symmetric_eig_extrema, FormationSpec};
use crate::integrator::SwarmState;
use crate::localization::TargetTrajectory;

/// Metrics attached to one trace sample.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsSample {
    /// Per-agent squared position error `|p_i - p*_i(t)|^2` (m^2).
    pub position_errors: Vec<f64>,
    /// Per-directed-edge squared bearing error `|g_ij - g*_ij|^2`
    /// (dimensionless, in [0, 4]).
    pub bearing_errors: Vec<f64>,
    /// Per-agent velocity tracking error `|v_i - v_c(t)|` (m/s).
    pub velocity_errors: Vec<f64>,
    /// `|s_F|` over the stacked follower sliding variables.
    pub sliding_norm: f64,
    /// Law-B estimator and reference errors.
    pub estimator: Option<EstimatorMetrics>,
    /// Set when a bearing could not be evaluated because two agents were
    /// closer than the collision distance; affected edges carry NaN.
    pub collision: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorMetrics {
    /// `|p_F - p_hat_F|`
    pub gamma_norm: f64,
    /// `|v_F - v_hat_F|`
    pub delta_norm: f64,
    /// `|p_bar_F - p*_F(t)|`
    pub ref_pos_error: f64,
    /// `|v_bar_F - 1_f (x) v_c(t)|`
    pub ref_vel_error: f64,
}

impl MetricsSample {
    pub fn max_position_error(&self) -> f64 {
        self.position_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_bearing_error(&self) -> f64 {
        self.bearing_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_velocity_error(&self) -> f64 {
        self.velocity_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluate every metric of a snapshot against the moving target.
pub fn compute_metrics(
    spec: &FormationSpec,
    trajectory: &TargetTrajectory,
    state: &SwarmState,
    s_f: &DVector<f64>,
    eps_collide: f64,
) -> MetricsSample {
    let t = state.t;
    let v_c = trajectory.velocity_at(t);
    let mut position_errors = Vec::with_capacity(spec.n_agents());
    let mut velocity_errors = Vec::with_capacity(spec.n_agents());
    for i in 0..spec.n_agents() {
        let target = trajectory.agent_target_at(i, t);
        position_errors.push((&state.positions[i] - target).norm_squared());
        velocity_errors.push((&state.velocities[i] - &v_c).norm());
    }

    let mut collision = false;
    let mut bearing_errors = Vec::with_capacity(spec.edges().len());
    for &(i, j) in spec.edges() {
        let diff = &state.positions[j] - &state.positions[i];
        let dist = diff.norm();
        if dist < eps_collide {
            collision = true;
            bearing_errors.push(f64::NAN);
            continue;
        }
        let g = diff / dist;
        let g_star = spec.desired_bearing(i, j).expect("validated edge");
        bearing_errors.push((g - g_star).norm_squared());
    }

    let estimator = state.estimators.as_ref().map(|ests| {
        let l = spec.n_leaders();
        let mut gamma_sq = 0.0;
        let mut delta_sq = 0.0;
        let mut ref_pos_sq = 0.0;
        let mut ref_vel_sq = 0.0;
        for (fi, est) in ests.iter().enumerate() {
            let agent = l + fi;
            gamma_sq += (&state.positions[agent] - &est.p_hat).norm_squared();
            delta_sq += (&state.velocities[agent] - &est.v_hat).norm_squared();
            ref_pos_sq += (&est.p_bar - trajectory.agent_target_at(agent, t)).norm_squared();
            ref_vel_sq += (&est.v_bar - &v_c).norm_squared();
        }
        EstimatorMetrics {
            gamma_norm: gamma_sq.sqrt(),
            delta_norm: delta_sq.sqrt(),
            ref_pos_error: ref_pos_sq.sqrt(),
            ref_vel_error: ref_vel_sq.sqrt(),
        }
    });

    MetricsSample {
        position_errors,
        bearing_errors,
        velocity_errors,
        sliding_norm: s_f.norm(),
        estimator,
        collision,
    }
}

/// One recorded simulation step.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub estimators: Option<Vec<FollowerEstimator>>,
    pub s_f: DVector<f64>,
    pub u_f: DVector<f64>,
    pub metrics: MetricsSample,
}

/// A full simulation record.
#[derive(Debug, Clone)]
pub struct Trace {
    pub law: Law,
    pub dim: usize,
    pub n_agents: usize,
    pub n_leaders: usize,
    pub h: f64,
    pub edges: Vec<(usize, usize)>,
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Samples inside the final `frac` fraction of the run.
    pub fn final_window(&self, frac: f64) -> impl Iterator<Item = &Sample> {
        let t_start = self.duration() * (1.0 - frac);
        self.samples.iter().filter(move |s| s.t >= t_start)
    }
}

/// Finite-time settling bound `T <= V0^(1-alpha) / (kappa (1-alpha))` for a
/// Lyapunov function obeying `dV/dt <= -kappa V^alpha`.
pub fn settling_time_bound(v0: f64, kappa: f64, alpha: f64) -> Result<f64> {
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::HypothesisViolated(format!("kappa must be positive, got {kappa}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::HypothesisViolated(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if v0 < 0.0 {
        return Err(Error::HypothesisViolated(format!("V(0) must be nonnegative, got {v0}")));
    }
    Ok(v0.powf(1.0 - alpha) / (kappa * (1.0 - alpha)))
}

/// Outcome of simulating the disturbed signum system against its bound.
#[derive(Debug, Clone)]
pub struct SettlingOutcome {
    /// First time after which `|x|_inf` never exceeds the threshold again.
    pub settled_at: Option<f64>,
    /// Theoretical settling bound from the Lyapunov argument.
    pub bound: f64,
    /// The settle threshold used.
    pub threshold: f64,
    /// Chattering-band slack added on top of the bound by callers.
    pub band: f64,
}

/// Simulate `dx/dt = -A (k sign(x) + 1_q (x) d(t))` and compare the
/// observed settling time with the Lyapunov bound
/// `T = 2 sqrt(V0) / kappa`, `V0 = 0.5 x0^T A^{-1} x0`,
/// `kappa = (k - sup|d|) sqrt(2 / lambda_max(A^{-1}))`.
///
/// `copies` is the number of `d`-sized blocks in `x` (the `1_q (x) d`
/// stacking); `sup_d` must strictly undercut `k` or the hypothesis is
/// rejected before any simulation runs.
pub fn signum_settling_oracle(
    a: &DMatrix<f64>,
    k: f64,
    copies: usize,
    disturbance: &dyn Fn(f64) -> DVector<f64>,
    sup_d: f64,
    x0: &DVector<f64>,
    h: f64,
) -> Result<SettlingOutcome> {
    let (lambda_min, lambda_max) = symmetric_eig_extrema(a);
    if lambda_min <= 0.0 {
        return Err(Error::HypothesisViolated(format!(
            "A must be positive definite, lambda_min = {lambda_min}"
        )));
    }
    if sup_d >= k {
        return Err(Error::HypothesisViolated(format!(
            "need sup|d| < k, got sup|d| = {sup_d}, k = {k}"
        )));
    }
    let n = a.nrows();
    assert_eq!(x0.len(), n, "x0 dimension mismatch");
    assert_eq!(n % copies, 0, "copies must divide the state dimension");
    let block = n / copies;

    let a_inv = a.clone().try_inverse().expect("PD matrix is invertible");
    let v0 = 0.5 * x0.dot(&(&a_inv * x0));
    let xi = k - sup_d;
    // lambda_max(A^{-1}) = 1 / lambda_min(A)
    let kappa = xi * (2.0 * lambda_min).sqrt();
    let bound = settling_time_bound(v0, kappa, 0.5)?;

    // Chattering band: per-step travel of x near the surface.
    let band_x = k * h * lambda_max * (n as f64).sqrt();
    let threshold = 10.0 * band_x.max(f64::MIN_POSITIVE);
    let band_t = 100.0 * h;

    let sign = |x: &DVector<f64>| x.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 });
    let t_max = bound + band_t + 1.0;
    let n_steps = (t_max / h).ceil() as usize;
    let mut x = x0.clone();
    let mut last_above = if x.amax() < threshold { -1.0 } else { 0.0 };
    for step in 0..n_steps {
        let t = step as f64 * h;
        let mut forcing = sign(&x) * k;
        let d = disturbance(t);
        for q in 0..copies {
            let mut rows = forcing.rows_mut(q * block, block);
            rows += &d;
        }
        x -= a * forcing * h;
        let t_next = (step + 1) as f64 * h;
        if x.amax() >= threshold {
            last_above = t_next;
        }
    }
    let settled_at = if last_above < t_max - band_t {
        Some(last_above.max(0.0))
    } else {
        None
    };
    Ok(SettlingOutcome {
        settled_at,
        bound,
        threshold,
        band: band_t,
    })
}

/// Convergence thresholds the golden scenarios are judged against.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceThresholds {
    /// m^2, on the squared position errors.
    pub position: f64,
    /// dimensionless, on the squared bearing errors.
    pub bearing: f64,
    /// m/s.
    pub velocity: f64,
    /// On `|gamma|` and `|delta|` for law B.
    pub estimator: f64,
    /// Fraction of the run treated as the final window.
    pub final_window: f64,
    /// Runs shorter than this cannot be judged either way.
    pub min_duration: f64,
}

impl Default for ConvergenceThresholds {
    fn default() -> Self {
        Self {
            position: 1e-3,
            bearing: 1e-4,
            velocity: 1e-2,
            estimator: 1e-4,
            final_window: 0.1,
            min_duration: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Pass => write!(f, "PASS"),
            Status::Fail => write!(f, "FAIL"),
            Status::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// Final-window maxima, first-crossing times, and growth diagnostics for a
/// finished trace.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub status: Status,
    pub duration: f64,
    pub final_max_position_error: f64,
    pub final_max_bearing_error: f64,
    pub final_max_velocity_error: f64,
    pub final_max_gamma: Option<f64>,
    pub final_max_delta: Option<f64>,
    pub final_max_ref_pos_error: Option<f64>,
    pub final_max_ref_vel_error: Option<f64>,
    /// First time each metric dropped below its threshold for good.
    pub position_crossing: Option<f64>,
    pub bearing_crossing: Option<f64>,
    pub velocity_crossing: Option<f64>,
    /// Ratio of late to early estimator error; values well above 1 flag
    /// divergence.
    pub estimator_growth: Option<f64>,
    /// Exponential decay rate fitted to `|gamma, delta|` over the tail.
    pub estimator_decay_rate: Option<f64>,
    pub failures: Vec<String>,
}

pub fn convergence_report(trace: &Trace, thresholds: &ConvergenceThresholds) -> ConvergenceReport {
    let duration = trace.duration();
    let mut failures = Vec::new();

    let window: Vec<&Sample> = trace.final_window(thresholds.final_window).collect();
    let max_in = |f: &dyn Fn(&Sample) -> f64| window.iter().map(|s| f(s)).fold(0.0, f64::max);
    let final_max_position_error = max_in(&|s| s.metrics.max_position_error());
    let final_max_bearing_error = max_in(&|s| s.metrics.max_bearing_error());
    let final_max_velocity_error = max_in(&|s| s.metrics.max_velocity_error());

    let est_metric = |f: &dyn Fn(&EstimatorMetrics) -> f64| {
        window
            .iter()
            .filter_map(|s| s.metrics.estimator.as_ref().map(f))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    };
    let final_max_gamma = est_metric(&|e| e.gamma_norm);
    let final_max_delta = est_metric(&|e| e.delta_norm);
    let final_max_ref_pos_error = est_metric(&|e| e.ref_pos_error);
    let final_max_ref_vel_error = est_metric(&|e| e.ref_vel_error);

    // First time a metric falls under its threshold and stays there.
    let crossing = |metric: &dyn Fn(&Sample) -> f64, threshold: f64| -> Option<f64> {
        let mut last_above = None;
        for s in &trace.samples {
            if metric(s) > threshold {
                last_above = Some(s.t);
            }
        }
        match last_above {
            None => Some(0.0),
            Some(t_last) => trace
                .samples
                .iter()
                .find(|s| s.t > t_last)
                .map(|s| s.t),
        }
    };
    let position_crossing = crossing(&|s| s.metrics.max_position_error(), thresholds.position);
    let bearing_crossing = crossing(&|s| s.metrics.max_bearing_error(), thresholds.bearing);
    let velocity_crossing = crossing(&|s| s.metrics.max_velocity_error(), thresholds.velocity);

    // Estimator growth: late-window vs early-window error mass.
    let estimator_total = |s: &Sample| {
        s.metrics
            .estimator
            .as_ref()
            .map(|e| e.gamma_norm + e.delta_norm + e.ref_pos_error + e.ref_vel_error)
    };
    let estimator_growth = if trace.samples.iter().any(|s| estimator_total(s).is_some()) {
        let t_early = duration * 0.1;
        let early = trace
            .samples
            .iter()
            .filter(|s| s.t <= t_early)
            .filter_map(estimator_total)
            .fold(0.0, f64::max);
        let late = trace
            .final_window(0.1)
            .filter_map(estimator_total)
            .fold(0.0, f64::max);
        (early > 0.0).then(|| late / early)
    } else {
        None
    };

    let estimator_decay_rate = {
        let pts: Vec<(f64, f64)> = trace
            .samples
            .iter()
            .filter_map(|s| {
                s.metrics
                    .estimator
                    .as_ref()
                    .map(|e| (s.t, (e.gamma_norm.powi(2) + e.delta_norm.powi(2)).sqrt()))
            })
            .collect();
        fit_exponential_rate(&pts, 0.5 * duration, 0.9 * duration)
    };

    if final_max_position_error > thresholds.position {
        failures.push(format!(
            "final-window position error {final_max_position_error:.3e} exceeds {:.3e} m^2",
            thresholds.position
        ));
    }
    if final_max_bearing_error > thresholds.bearing {
        failures.push(format!(
            "final-window bearing error {final_max_bearing_error:.3e} exceeds {:.3e}",
            thresholds.bearing
        ));
    }
    if final_max_velocity_error > thresholds.velocity {
        failures.push(format!(
            "final-window velocity error {final_max_velocity_error:.3e} exceeds {:.3e} m/s",
            thresholds.velocity
        ));
    }
    for (name, value) in [("gamma", final_max_gamma), ("delta", final_max_delta)] {
        if let Some(v) = value {
            if v > thresholds.estimator {
                failures.push(format!(
                    "final-window |{name}| {v:.3e} exceeds {:.3e}",
                    thresholds.estimator
                ));
            }
        }
    }
    if let Some(growth) = estimator_growth {
        if growth > 10.0 {
            failures.push(format!("estimator-error growth x{growth:.1} over the run"));
        }
    }

    let status = if duration < thresholds.min_duration {
        Status::Inconclusive
    } else if failures.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    };

    ConvergenceReport {
        status,
        duration,
        final_max_position_error,
        final_max_bearing_error,
        final_max_velocity_error,
        final_max_gamma,
        final_max_delta,
        final_max_ref_pos_error,
        final_max_ref_vel_error,
        position_crossing,
        bearing_crossing,
        velocity_crossing,
        estimator_growth,
        estimator_decay_rate,
        failures,
    }
}

/// Least-squares slope of `ln(norm)` over `[t_lo, t_hi]`. Returns the decay
/// rate (positive for decaying signals), or `None` when fewer than two
/// usable points exist.
pub fn fit_exponential_rate(points: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, v)| *t >= t_lo && *t <= t_hi && *v > 1e-300)
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let (st, sy): (f64, f64) = usable.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (stt, sty): (f64, f64) = usable
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t * t, b + t * y));
    let denom = n * stt - st * st;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope = (n * sty - st * sy) / denom;
    Some(-slope)
}
