//! Centralized ground truth: desired positions solved from bearings plus
//! leader anchors, built-in leader velocity profiles with exact integrals,
//! and the moving target trajectory.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{build_bearing_laplacian, check_anchored_block, unstack, FormationSpec, PD_TOL};

/// Stacked desired positions of the whole formation at t = 0.
#[derive(Debug, Clone)]
pub struct DesiredRealization {
    /// All `d*n` desired coordinates, leaders first.
    pub positions: DVector<f64>,
    /// The follower block (`d*f`).
    pub follower_block: DVector<f64>,
    /// Residual of the defining linear system `B_ff p*_F + B_fl p_L`.
    pub residual: f64,
}

impl DesiredRealization {
    pub fn agent_position(&self, dim: usize, i: usize) -> DVector<f64> {
        self.positions.rows(i * dim, dim).into_owned()
    }
}

/// Solve the leader-anchored localization system `B_ff p*_F = -B_fl p_L`.
///
/// Under a positive-definite `B_ff` the solution is the unique follower
/// placement realizing every desired bearing.
pub fn solve_desired_positions(spec: &FormationSpec) -> Result<DesiredRealization> {
    let report = check_anchored_block(spec)?;
    if !report.positive_definite {
        return Err(Error::NotLocalizable {
            lambda_min: report.lambda_min,
        });
    }
    let blocks = build_bearing_laplacian(spec);
    let p_l = spec.stacked_leader_positions();
    let rhs = -&blocks.fl * &p_l;
    let p_f = blocks
        .ff
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotLocalizable {
            lambda_min: report.lambda_min,
        })?;
    let residual = (&blocks.ff * &p_f - rhs).norm();
    let mut positions = DVector::zeros(spec.dim() * spec.n_agents());
    positions.rows_mut(0, p_l.len()).copy_from(&p_l);
    positions.rows_mut(p_l.len(), p_f.len()).copy_from(&p_f);
    Ok(DesiredRealization {
        positions,
        follower_block: p_f,
        residual,
    })
}

/// Built-in leader velocity profiles. Each carries a closed-form integral
/// and exact bounds `delta1 >= sup |v_c|`, `delta2 >= sup |dv_c/dt|`; the
/// bounds feed the gain inequalities, the integral keeps the moving target
/// drift-free.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VelocityProfile {
    Constant {
        v: Vec<f64>,
    },
    /// `v_c(t) = base + amplitude * sin(omega t) * e_axis` with a 0-based
    /// `axis`.
    Sinusoid {
        base: Vec<f64>,
        amplitude: f64,
        omega: f64,
        axis: usize,
    },
    /// Constant segments `(t_end, v)`; the last velocity is held after the
    /// final breakpoint. The distributional derivative at breakpoints is
    /// not bounded, so `delta2 = 0` refers to the open segments only.
    PiecewiseConstant {
        segments: Vec<(f64, Vec<f64>)>,
    },
}

impl VelocityProfile {
    /// The bundled scenarios' profile `v_c = [1, sin t]`.
    pub fn bundled_sinusoid() -> Self {
        VelocityProfile::Sinusoid {
            base: vec![1.0, 0.0],
            amplitude: 1.0,
            omega: 1.0,
            axis: 1,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut violations = Vec::new();
        match self {
            VelocityProfile::Constant { v } => {
                if v.len() != dim {
                    violations.push(format!("constant profile has {} components, expected {dim}", v.len()));
                }
            }
            VelocityProfile::Sinusoid { base, amplitude: _, omega, axis } => {
                if base.len() != dim {
                    violations.push(format!("sinusoid base has {} components, expected {dim}", base.len()));
                }
                if *axis >= dim {
                    violations.push(format!("sinusoid axis {axis} out of range for dimension {dim}"));
                }
                if *omega == 0.0 {
                    violations.push("sinusoid omega must be nonzero (use a constant profile)".into());
                }
            }
            VelocityProfile::PiecewiseConstant { segments } => {
                if segments.is_empty() {
                    violations.push("piecewise-constant profile needs at least one segment".into());
                }
                let mut last = 0.0;
                for (t_end, v) in segments {
                    if v.len() != dim {
                        violations.push(format!("segment velocity has {} components, expected {dim}", v.len()));
                    }
                    if *t_end <= last {
                        violations.push(format!("segment breakpoints must increase, got {t_end} after {last}"));
                    }
                    last = *t_end;
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }

    /// `v_c(t)`.
    pub fn velocity(&self, t: f64) -> DVector<f64> {
        match self {
            VelocityProfile::Constant { v } => DVector::from_vec(v.clone()),
            VelocityProfile::Sinusoid { base, amplitude, omega, axis } => {
                let mut out = DVector::from_vec(base.clone());
                out[*axis] += amplitude * (omega * t).sin();
                out
            }
            VelocityProfile::PiecewiseConstant { segments } => {
                for (t_end, v) in segments {
                    if t < *t_end {
                        return DVector::from_vec(v.clone());
                    }
                }
                DVector::from_vec(segments.last().expect("validated nonempty").1.clone())
            }
        }
    }

    /// `dv_c/dt(t)` (zero on the open segments of a piecewise profile).
    pub fn acceleration(&self, t: f64) -> DVector<f64> {
        match self {
            VelocityProfile::Constant { v } => DVector::zeros(v.len()),
            VelocityProfile::Sinusoid { base, amplitude, omega, axis } => {
                let mut out = DVector::zeros(base.len());
                out[*axis] = amplitude * omega * (omega * t).cos();
                out
            }
            VelocityProfile::PiecewiseConstant { segments } => {
                DVector::zeros(segments[0].1.len())
            }
        }
    }

    /// Exact `\int_0^t v_c`.
    pub fn integral(&self, t: f64) -> DVector<f64> {
        match self {
            VelocityProfile::Constant { v } => DVector::from_vec(v.clone()) * t,
            VelocityProfile::Sinusoid { base, amplitude, omega, axis } => {
                let mut out = DVector::from_vec(base.clone()) * t;
                out[*axis] += amplitude / omega * (1.0 - (omega * t).cos());
                out
            }
            VelocityProfile::PiecewiseConstant { segments } => {
                let dim = segments[0].1.len();
                let mut out = DVector::zeros(dim);
                let mut start = 0.0;
                for (t_end, v) in segments {
                    let stop = t.min(*t_end);
                    if stop > start {
                        out += DVector::from_vec(v.clone()) * (stop - start);
                    }
                    start = *t_end;
                    if t <= *t_end {
                        return out;
                    }
                }
                let last = DVector::from_vec(segments.last().unwrap().1.clone());
                out + last * (t - start)
            }
        }
    }

    /// Exact supremum of `|v_c(t)|` over t >= 0.
    pub fn delta1(&self) -> f64 {
        match self {
            VelocityProfile::Constant { v } => DVector::from_vec(v.clone()).norm(),
            VelocityProfile::Sinusoid { base, amplitude, axis, .. } => {
                let mut sq = 0.0;
                for (i, b) in base.iter().enumerate() {
                    if i == *axis {
                        sq += (b.abs() + amplitude.abs()).powi(2);
                    } else {
                        sq += b * b;
                    }
                }
                sq.sqrt()
            }
            VelocityProfile::PiecewiseConstant { segments } => segments
                .iter()
                .map(|(_, v)| DVector::from_vec(v.clone()).norm())
                .fold(0.0, f64::max),
        }
    }

    /// Exact supremum of `|dv_c/dt|` over t >= 0 (segment interiors for
    /// piecewise profiles).
    pub fn delta2(&self) -> f64 {
        match self {
            VelocityProfile::Constant { .. } => 0.0,
            VelocityProfile::Sinusoid { amplitude, omega, .. } => (amplitude * omega).abs(),
            VelocityProfile::PiecewiseConstant { .. } => 0.0,
        }
    }
}

/// The moving target: the desired realization translated rigidly by the
/// exact integral of the leader velocity. Translation preserves every
/// inter-agent bearing, so the desired bearings hold along the whole
/// trajectory.
#[derive(Debug, Clone)]
pub struct TargetTrajectory {
    initial: DVector<f64>,
    dim: usize,
    profile: VelocityProfile,
}

impl TargetTrajectory {
    pub fn new(realization: &DesiredRealization, dim: usize, profile: VelocityProfile) -> Self {
        Self {
            initial: realization.positions.clone(),
            dim,
            profile,
        }
    }

    pub fn profile(&self) -> &VelocityProfile {
        &self.profile
    }

    /// Stacked target positions `p*(t) = p*(0) + 1_n (x) \int_0^t v_c`.
    pub fn target_at(&self, t: f64) -> DVector<f64> {
        let offset = self.profile.integral(t);
        let mut out = self.initial.clone();
        let n = out.len() / self.dim;
        for i in 0..n {
            let mut block = out.rows_mut(i * self.dim, self.dim);
            block += &offset;
        }
        out
    }

    /// Target position of one agent at time t.
    pub fn agent_target_at(&self, i: usize, t: f64) -> DVector<f64> {
        self.initial.rows(i * self.dim, self.dim).into_owned() + self.profile.integral(t)
    }

    pub fn velocity_at(&self, t: f64) -> DVector<f64> {
        self.profile.velocity(t)
    }
}

/// Realized-bearing residual of a full placement against the spec; used to
/// confirm a solved realization actually satisfies the bearing set.
pub fn max_bearing_residual(spec: &FormationSpec, positions: &DVector<f64>) -> Result<f64> {
    let d = spec.dim();
    let agents = unstack(positions, d);
    let mut worst: f64 = 0.0;
    for &(i, j) in spec.edges() {
        let g = crate::formation::bearing_of(&agents[i], &agents[j], 1e-12)?;
        let g_star = spec.desired_bearing(i, j).expect("edge has bearing");
        worst = worst.max((g - g_star).norm());
    }
    Ok(worst)
}

/// Reject a realization whose B_ff is numerically near-singular.
pub fn assert_localizable(spec: &FormationSpec) -> Result<()> {
    let report = check_anchored_block(spec)?;
    if report.lambda_min <= PD_TOL {
        return Err(Error::NotLocalizable {
            lambda_min: report.lambda_min,
        });
    }
    Ok(())
}
