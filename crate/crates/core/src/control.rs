//! The two decentralized sliding-mode control laws.
//!
//! Law A drives each follower directly from measured relative positions
//! and velocities. Law B runs, per follower, a consensus estimator of the
//! agent's own position/velocity plus a sliding-mode reference generator
//! that reconstructs the moving desired position; a PD term then tracks
//! the reference.
//!
//! Every evaluator here takes only agent-local data: the agent's own
//! state, per-neighbor relative measurements, and per-neighbor
//! communicated variables. Nothing reads global state.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GainViolation, Result};

/// Which control law a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Law {
    /// Direct sliding-mode law on measured displacements.
    A,
    /// Estimator-based law with consensus estimator + reference generator.
    B,
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Law::A => write!(f, "A"),
            Law::B => write!(f, "B"),
        }
    }
}

/// Controller gains plus the leader-velocity bounds they are checked
/// against. `delta1` bounds `|v_c|`, `delta2` bounds `|dv_c/dt|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl GainSet {
    /// Check positivity and the law's strict reaching inequality. Every
    /// violated rule is returned, with its margin, not just the first.
    pub fn validate(&self, law: Law) -> Result<()> {
        let mut violations = Vec::new();
        let required: &[(&str, f64)] = match law {
            Law::A => &[("k1", self.k1), ("k2", self.k2)],
            Law::B => &[
                ("k1", self.k1),
                ("k2", self.k2),
                ("k3", self.k3),
                ("k4", self.k4),
                ("k5", self.k5),
                ("k6", self.k6),
            ],
        };
        for &(name, value) in required {
            if value <= 0.0 {
                violations.push(GainViolation {
                    rule: format!("{name} must be positive"),
                    lhs: name.into(),
                    lhs_value: value,
                    rhs: "0".into(),
                    rhs_value: 0.0,
                    margin: value,
                });
            }
        }
        // The switching gain must dominate the disturbance bound
        // delta2 + k_slope * delta1, strictly.
        let (rule, switching, slope) = match law {
            Law::A => ("law A gain inequality: k2 > delta2 + k1*delta1", self.k2, self.k1),
            Law::B => ("law B gain inequality: k5 > delta2 + k4*delta1", self.k5, self.k4),
        };
        let bound = self.delta2 + slope * self.delta1;
        if switching <= bound {
            violations.push(GainViolation {
                rule: rule.into(),
                lhs: if law == Law::A { "k2" } else { "k5" }.into(),
                lhs_value: switching,
                rhs: "delta2 + k*delta1".into(),
                rhs_value: bound,
                margin: switching - bound,
            });
        }
        match violations.len() {
            0 => Ok(()),
            1 => Err(violations.pop().unwrap().into()),
            _ => Err(crate::error::Error::Validation(
                violations.iter().map(|v| v.to_string()).collect(),
            )),
        }
    }

    /// Margin of the law's reaching inequality (positive when valid).
    pub fn reaching_margin(&self, law: Law) -> f64 {
        match law {
            Law::A => self.k2 - (self.delta2 + self.k1 * self.delta1),
            Law::B => self.k5 - (self.delta2 + self.k4 * self.delta1),
        }
    }
}

/// Element-wise signum with `sign(0) = 0`, optionally smoothed into the
/// boundary-layer saturation `clamp(x/eps, -1, 1)` for `eps > 0`.
pub fn switching_term(s: &DVector<f64>, boundary_layer: f64) -> DVector<f64> {
    if boundary_layer > 0.0 {
        s.map(|x| (x / boundary_layer).clamp(-1.0, 1.0))
    } else {
        s.map(|x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }
}

/// What follower `i` knows about one neighbor: its desired bearing, the
/// measured relative position/velocity, and (law B) the variables the
/// neighbor communicates. Leaders communicate their true position and the
/// common velocity.
#[derive(Debug, Clone)]
pub struct NeighborView {
    /// Desired bearing `g*_ij` from i toward this neighbor.
    pub bearing_ref: DVector<f64>,
    /// Measured `p_j - p_i`.
    pub rel_pos: DVector<f64>,
    /// Measured `v_j - v_i`.
    pub rel_vel: DVector<f64>,
    /// Communicated variables, present when the scenario runs law B.
    pub comm: Option<NeighborComm>,
}

/// Variables a neighbor transmits under law B. A leader j sends
/// `p_hat = p_j`, `v_hat = v_c`, `p_bar = p_j`, `v_bar = v_c`.
#[derive(Debug, Clone)]
pub struct NeighborComm {
    pub p_hat: DVector<f64>,
    pub v_hat: DVector<f64>,
    pub p_bar: DVector<f64>,
    pub v_bar: DVector<f64>,
}

/// Per-follower output of one control evaluation.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    /// Acceleration input `u_i`. Leaders receive no input.
    pub u: DVector<f64>,
    /// Sliding variable `s_i` (law A) or the reference sliding variable
    /// (law B).
    pub s: DVector<f64>,
    /// Law-B auxiliary input of the reference generator.
    pub u_bar: Option<DVector<f64>>,
}

/// Sliding variable of law A:
/// `s_i = sum_j P_{g*_ij} (v_i - v_j + k (p_i - p_j))`.
///
/// Also used by the law-B reference generator, where the "measurements"
/// are differences of communicated reference states and the slope gain is
/// k4.
pub fn sliding_variable(dim: usize, k_slope: f64, neighbors: &[NeighborView]) -> DVector<f64> {
    let mut s = DVector::zeros(dim);
    for nb in neighbors {
        // v_i - v_j = -rel_vel, p_i - p_j = -rel_pos
        let combo = -(&nb.rel_vel + &nb.rel_pos * k_slope);
        let along = nb.bearing_ref.dot(&combo);
        s += &combo - &nb.bearing_ref * along;
    }
    s
}

/// Law A input: `u_i = -k1 v_i - k2 sign(s_i)`.
pub fn control_a(
    own_vel: &DVector<f64>,
    gains: &GainSet,
    boundary_layer: f64,
    neighbors: &[NeighborView],
) -> ControlOutput {
    let s = sliding_variable(own_vel.len(), gains.k1, neighbors);
    let u = -own_vel * gains.k1 - switching_term(&s, boundary_layer) * gains.k2;
    ControlOutput { u, s, u_bar: None }
}

/// Law-B per-follower dynamic states: estimates of own position/velocity
/// and the generated reference of the desired position/velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerEstimator {
    pub p_hat: DVector<f64>,
    pub v_hat: DVector<f64>,
    pub p_bar: DVector<f64>,
    pub v_bar: DVector<f64>,
}

/// Time derivatives of one follower's estimator/reference states.
#[derive(Debug, Clone)]
pub struct EstimatorRates {
    pub dp_hat: DVector<f64>,
    pub dv_hat: DVector<f64>,
    pub dp_bar: DVector<f64>,
    pub dv_bar: DVector<f64>,
}

/// Which form of the consensus estimator to integrate.
///
/// `ProofConsistent` uses relative measured terms entering opposite to the
/// estimate disagreements, `sum_j [(p_hat_j - p_hat_i) - (p_j - p_i)]`,
/// which yields the stable stacked error dynamics
/// `d(delta)/dt = -k3 A gamma - k6 A delta`. `PrintedForm` keeps the `+`
/// coupling and is provided to demonstrate that it diverges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    #[default]
    ProofConsistent,
    PrintedForm,
}

/// Consensus estimator of the follower's own position and velocity.
///
/// `d(p_hat)/dt = v_hat`;
/// `d(v_hat)/dt = u_i + k3 sum_j [(p_hat_j - p_hat_i) -/+ (p_j - p_i)]
///                    + k6 sum_j [(v_hat_j - v_hat_i) -/+ (v_j - v_i)]`.
pub fn estimator_step(
    own: &FollowerEstimator,
    u: &DVector<f64>,
    gains: &GainSet,
    variant: EstimatorVariant,
    neighbors: &[NeighborView],
) -> (DVector<f64>, DVector<f64>) {
    let dim = own.p_hat.len();
    let measured_sign = match variant {
        EstimatorVariant::ProofConsistent => -1.0,
        EstimatorVariant::PrintedForm => 1.0,
    };
    let mut pos_consensus = DVector::zeros(dim);
    let mut vel_consensus = DVector::zeros(dim);
    for nb in neighbors {
        let comm = nb.comm.as_ref().expect("law B neighbors communicate");
        // neighbor estimates arrive over the link, rel_pos/rel_vel are measured
        pos_consensus += (&comm.p_hat - &own.p_hat) + &nb.rel_pos * measured_sign;
        vel_consensus += (&comm.v_hat - &own.v_hat) + &nb.rel_vel * measured_sign;
    }
    let dv_hat = u + pos_consensus * gains.k3 + vel_consensus * gains.k6;
    (own.v_hat.clone(), dv_hat)
}

/// Sliding-mode reference generator: law A applied to the communicated
/// reference states with gains (k4, k5).
///
/// Returns `(dp_bar, dv_bar, u_bar, s_i)`.
pub fn reference_generator_step(
    own: &FollowerEstimator,
    gains: &GainSet,
    boundary_layer: f64,
    neighbors: &[NeighborView],
) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let dim = own.p_bar.len();
    let reference_views: Vec<NeighborView> = neighbors
        .iter()
        .map(|nb| {
            let comm = nb.comm.as_ref().expect("law B neighbors communicate");
            NeighborView {
                bearing_ref: nb.bearing_ref.clone(),
                rel_pos: &comm.p_bar - &own.p_bar,
                rel_vel: &comm.v_bar - &own.v_bar,
                comm: None,
            }
        })
        .collect();
    let s = sliding_variable(dim, gains.k4, &reference_views);
    let u_bar = -&own.v_bar * gains.k4 - switching_term(&s, boundary_layer) * gains.k5;
    (own.v_bar.clone(), u_bar.clone(), u_bar, s)
}

/// Law B input: `u_i = u_bar_i + k1 (p_bar_i - p_hat_i) + k2 (v_bar_i - v_hat_i)`.
pub fn control_b(own: &FollowerEstimator, u_bar: &DVector<f64>, gains: &GainSet) -> DVector<f64> {
    u_bar + (&own.p_bar - &own.p_hat) * gains.k1 + (&own.v_bar - &own.v_hat) * gains.k2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn gains_a() -> GainSet {
        GainSet {
            k1: 0.5,
            k2: 2.0,
            k3: 1.0,
            k4: 0.5,
            k5: 2.0,
            k6: 1.0,
            delta1: 2f64.sqrt(),
            delta2: 1.0,
        }
    }

    #[test]
    fn bundled_gains_are_valid_with_margin() {
        let g = gains_a();
        g.validate(Law::A).unwrap();
        g.validate(Law::B).unwrap();
        // 2 > 1 + 0.5*sqrt(2) ~ 1.707
        assert_abs_diff_eq!(g.reaching_margin(Law::A), 2.0 - 1.0 - 0.5 * 2f64.sqrt(), epsilon = 1e-15);
        assert!(g.reaching_margin(Law::A) > 0.29);
    }

    #[test]
    fn boundary_gain_equality_is_rejected() {
        let mut g = gains_a();
        g.k2 = g.delta2 + g.k1 * g.delta1; // strict inequality must fail
        assert!(g.validate(Law::A).is_err());
        let mut g = gains_a();
        g.k6 = 0.0;
        assert!(g.validate(Law::B).is_err());
        assert!(g.validate(Law::A).is_ok(), "law A ignores k3..k6");
    }

    #[test]
    fn sliding_variable_vanishes_on_target() {
        // Neighbors at desired bearings with equal velocities: each
        // relative position is parallel to its bearing, so the projector
        // kills every term.
        let nb = NeighborView {
            bearing_ref: v2(1.0, 0.0),
            rel_pos: v2(2.5, 0.0),
            rel_vel: v2(0.0, 0.0),
            comm: None,
        };
        let s = sliding_variable(2, 0.5, &[nb]);
        assert_abs_diff_eq!(s.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sliding_variable_hand_case() {
        // One neighbor at rest, g* = [1,0], p_i - p_j = [0,1], k1 = 1,
        // velocities zero: s_i = P_{[1,0]} [0,1] = [0,1].
        let nb = NeighborView {
            bearing_ref: v2(1.0, 0.0),
            rel_pos: v2(0.0, -1.0), // p_j - p_i
            rel_vel: v2(0.0, 0.0),
            comm: None,
        };
        let s = sliding_variable(2, 1.0, &[nb]);
        assert_abs_diff_eq!(s, v2(0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn control_a_direct_formula() {
        let mut g = gains_a();
        g.k1 = 0.5;
        g.k2 = 2.0;
        // s = [-0.5, 0]: sign gives [-1, 0], u = -0.5*[1,0] + 2*[1,0]... per axis:
        // u = -k1 v - k2 sign(s) = [-0.5 + 2, 0] = [1.5, 0]
        let s = v2(-0.5, 0.0);
        let u = -v2(1.0, 0.0) * g.k1 - switching_term(&s, 0.0) * g.k2;
        assert_abs_diff_eq!(u, v2(1.5, 0.0), epsilon = 1e-15);
        // zero state, zero sliding variable -> zero input
        let out = control_a(&v2(0.0, 0.0), &g, 0.0, &[]);
        assert_abs_diff_eq!(out.u.norm(), 0.0);
    }

    #[test]
    fn control_a_infinity_norm_bound() {
        let g = gains_a();
        for k in 0..50 {
            let v = v2((k as f64 * 0.37).sin() * 3.0, (k as f64 * 0.61).cos() * 2.0);
            let nb = NeighborView {
                bearing_ref: v2(0.0, 1.0),
                rel_pos: v2((k as f64).sin(), k as f64 * 0.1),
                rel_vel: v2(0.2, -0.4),
                comm: None,
            };
            let out = control_a(&v, &g, 0.0, &[nb]);
            let bound = g.k1 * v.amax() + g.k2;
            assert!(out.u.amax() <= bound + 1e-12);
        }
    }

    #[test]
    fn switching_term_sign_conventions() {
        let s = DVector::from_vec(vec![-0.5, 0.0, 3.0]);
        let sw = switching_term(&s, 0.0);
        assert_eq!(sw, DVector::from_vec(vec![-1.0, 0.0, 1.0]));
        let sat = switching_term(&s, 1.0);
        assert_eq!(sat, DVector::from_vec(vec![-0.5, 0.0, 1.0]));
    }

    #[test]
    fn estimator_rate_reduces_to_input_when_exact() {
        // p_hat == p and v_hat == v everywhere: both consensus sums vanish.
        let own = FollowerEstimator {
            p_hat: v2(1.0, 2.0),
            v_hat: v2(0.3, -0.1),
            p_bar: v2(0.0, 0.0),
            v_bar: v2(0.0, 0.0),
        };
        let nb = NeighborView {
            bearing_ref: v2(1.0, 0.0),
            rel_pos: v2(2.0, 1.0),
            rel_vel: v2(0.1, 0.2),
            comm: Some(NeighborComm {
                p_hat: &own.p_hat + v2(2.0, 1.0),
                v_hat: &own.v_hat + v2(0.1, 0.2),
                p_bar: v2(0.0, 0.0),
                v_bar: v2(0.0, 0.0),
            }),
        };
        let u = v2(0.7, -0.2);
        let (dp_hat, dv_hat) =
            estimator_step(&own, &u, &gains_a(), EstimatorVariant::ProofConsistent, &[nb]);
        assert_abs_diff_eq!(dp_hat, own.v_hat, epsilon = 0.0);
        assert_abs_diff_eq!(dv_hat, u, epsilon = 1e-15);
    }

    #[test]
    fn reference_generator_on_target_reduces_to_damping() {
        // References at the desired realization, v_bar == v_c everywhere:
        // s = 0 and u_bar = -k4 v_c.
        let v_c = v2(1.0, 0.5);
        let own = FollowerEstimator {
            p_hat: v2(0.0, 0.0),
            v_hat: v2(0.0, 0.0),
            p_bar: v2(-2.0, 0.0),
            v_bar: v_c.clone(),
        };
        let nb = NeighborView {
            bearing_ref: v2(1.0, 0.0),
            rel_pos: v2(0.0, 0.0),
            rel_vel: v2(0.0, 0.0),
            comm: Some(NeighborComm {
                p_hat: v2(0.0, 0.0),
                v_hat: v_c.clone(),
                p_bar: v2(0.0, 0.0), // desired bearing [1,0] from (-2,0)
                v_bar: v_c.clone(),
            }),
        };
        let g = gains_a();
        let (_, _, u_bar, s) = reference_generator_step(&own, &g, 0.0, &[nb]);
        assert_abs_diff_eq!(s.norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u_bar, -v_c * g.k4, epsilon = 1e-15);
    }

    #[test]
    fn control_b_collapses_when_estimates_agree() {
        let own = FollowerEstimator {
            p_hat: v2(1.0, 1.0),
            v_hat: v2(0.5, 0.0),
            p_bar: v2(1.0, 1.0),
            v_bar: v2(0.5, 0.0),
        };
        let u_bar = v2(-0.3, 0.9);
        let u = control_b(&own, &u_bar, &gains_a());
        assert_abs_diff_eq!(u, u_bar, epsilon = 0.0);
    }
}
