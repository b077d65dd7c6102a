//! Scenario files: the structured-text configuration format, cross-field
//! validation, seeded initialization, and the two bundled golden scenarios.
//!
//! Agent ids and axes are 1-based in configuration files and reports and
//! 0-based inside the library; this module is the single place the
//! conversion happens.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::Trace;
use crate::control::{EstimatorVariant, FollowerEstimator, GainSet, Law};
use crate::error::{Error, Result};
use crate::formation::{check_infinitesimal_bearing_rigidity, check_anchored_block, FormationSpec};
use crate::integrator::{simulate, IntegratorConfig, SimOptions, SimSetup, SwarmState};
use crate::localization::{
    solve_desired_positions, DesiredRealization, TargetTrajectory, VelocityProfile,
};

const SIM1_TOML: &str = include_str!("scenarios/sim1.toml");
const SIM2_TOML: &str = include_str!("scenarios/sim2.toml");

/// On-disk scenario description. Everything an execution needs, nothing
/// derived: bounds, realizations and trajectories are computed at load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub law: Law,
    #[serde(default)]
    pub notes: Option<String>,
    pub formation: FormationConfig,
    pub gains: GainsConfig,
    pub profile: ProfileConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub options: OptionsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormationConfig {
    pub dimension: usize,
    pub agents: usize,
    pub leaders: usize,
    /// Initial (= desired) leader positions, one per leader.
    pub leader_positions: Vec<Vec<f64>>,
    pub bearings: Vec<BearingConfig>,
    /// Auto-add the reversed bearing `-g` for follower-follower edges
    /// listed once.
    #[serde(default = "default_true")]
    pub mirror_follower_edges: bool,
    /// Renormalize near-unit bearings instead of rejecting them.
    #[serde(default)]
    pub renormalize_bearings: bool,
}

fn default_true() -> bool {
    true
}

/// One desired bearing, 1-based agent ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BearingConfig {
    pub from: usize,
    pub to: usize,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GainsConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self { k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 }
    }
}

/// Velocity profile as written in scenario files; `axis` is 1-based here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileConfig {
    Constant { v: Vec<f64> },
    Sinusoid { base: Vec<f64>, amplitude: f64, omega: f64, axis: usize },
    PiecewiseConstant { segments: Vec<SegmentConfig> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub until: f64,
    pub v: Vec<f64>,
}

impl ProfileConfig {
    fn to_profile(&self) -> Result<VelocityProfile> {
        Ok(match self {
            ProfileConfig::Constant { v } => VelocityProfile::Constant { v: v.clone() },
            ProfileConfig::Sinusoid { base, amplitude, omega, axis } => {
                if *axis == 0 {
                    return Err(Error::Validation(vec![
                        "profile axis is 1-based; 0 is not a valid axis".into(),
                    ]));
                }
                VelocityProfile::Sinusoid {
                    base: base.clone(),
                    amplitude: *amplitude,
                    omega: *omega,
                    axis: axis - 1,
                }
            }
            ProfileConfig::PiecewiseConstant { segments } => VelocityProfile::PiecewiseConstant {
                segments: segments.iter().map(|s| (s.until, s.v.clone())).collect(),
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub seed: u64,
    /// Half-width of the uniform box around the desired positions that
    /// random follower starts are drawn from (m).
    pub box_half_width: f64,
    /// Explicit follower starting positions (overrides random draws).
    pub follower_positions: Option<Vec<Vec<f64>>>,
    /// Half-width of the uniform box for initial position-estimate offsets
    /// under law B (m).
    pub estimator_offset_half_width: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            box_half_width: 3.0,
            follower_positions: None,
            estimator_offset_half_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Write every k-th integration step to the trace file.
    pub decimation: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { decimation: 10 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptionsConfig {
    /// Boundary-layer width for the signum smoothing; 0 keeps pure sign.
    pub boundary_layer: f64,
    /// Integrate the estimator exactly as printed instead of the
    /// proof-consistent form. Diverges; for demonstration only.
    pub paper_literal_estimator: bool,
    /// Allow running scenarios that fail the rigidity rank test.
    pub skip_rigidity_check: bool,
}

impl Default for OptionsConfig {
    fn default() -> Self {
        Self {
            boundary_layer: 0.0,
            paper_literal_estimator: false,
            skip_rigidity_check: false,
        }
    }
}

/// A validated, runtime-ready scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub spec: FormationSpec,
    pub gains: GainSet,
    pub law: Law,
    pub profile: VelocityProfile,
    pub realization: DesiredRealization,
    pub trajectory: TargetTrajectory,
}

impl Scenario {
    /// Validate a parsed config and precompute the desired realization and
    /// target trajectory. Reports every violation found.
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let mut violations: Vec<String> = Vec::new();

        let f = &config.formation;
        let mut bearings: Vec<(usize, usize, DVector<f64>)> = Vec::new();
        for b in &f.bearings {
            if b.from == 0 || b.to == 0 {
                violations.push(format!(
                    "bearing ({}, {}): agent ids are 1-based",
                    b.from, b.to
                ));
                continue;
            }
            bearings.push((b.from - 1, b.to - 1, DVector::from_vec(b.g.clone())));
        }
        if f.mirror_follower_edges {
            let listed: Vec<(usize, usize)> = bearings.iter().map(|&(i, j, _)| (i, j)).collect();
            let mut mirrored = Vec::new();
            for (i, j, g) in &bearings {
                let both_followers = *i >= f.leaders && *j >= f.leaders;
                if both_followers && !listed.contains(&(*j, *i)) {
                    mirrored.push((*j, *i, -g));
                }
            }
            bearings.extend(mirrored);
        }
        let leader_positions: Vec<DVector<f64>> = f
            .leader_positions
            .iter()
            .map(|p| DVector::from_vec(p.clone()))
            .collect();

        let spec = match FormationSpec::new(
            f.dimension,
            f.agents,
            f.leaders,
            bearings,
            leader_positions,
            f.renormalize_bearings,
        ) {
            Ok(spec) => Some(spec),
            Err(Error::Validation(mut v)) => {
                violations.append(&mut v);
                None
            }
            Err(e) => return Err(e),
        };

        let profile = match config.profile.to_profile() {
            Ok(p) => {
                if let Err(Error::Validation(mut v)) = p.validate(f.dimension) {
                    violations.append(&mut v);
                }
                p
            }
            Err(Error::Validation(mut v)) => {
                violations.append(&mut v);
                VelocityProfile::Constant { v: vec![0.0; f.dimension] }
            }
            Err(e) => return Err(e),
        };

        let gains = GainSet {
            k1: config.gains.k1,
            k2: config.gains.k2,
            k3: config.gains.k3,
            k4: config.gains.k4,
            k5: config.gains.k5,
            k6: config.gains.k6,
            delta1: profile.delta1(),
            delta2: profile.delta2(),
        };
        match gains.validate(config.law) {
            Ok(()) => {}
            Err(Error::GainCondition(v)) => violations.push(v.to_string()),
            Err(Error::Validation(mut v)) => violations.append(&mut v),
            Err(e) => return Err(e),
        }

        if let Err(Error::Validation(mut v)) = config.integrator.validate() {
            violations.append(&mut v);
        }
        if let Some(fp) = &config.init.follower_positions {
            if spec.as_ref().is_some_and(|s| fp.len() != s.n_followers()) {
                violations.push(format!(
                    "explicit follower_positions lists {} entries, expected {}",
                    fp.len(),
                    spec.as_ref().unwrap().n_followers()
                ));
            }
        }
        if config.output.decimation == 0 {
            violations.push("output decimation must be at least 1".into());
        }

        let realization = if let Some(spec) = &spec {
            if !config.options.skip_rigidity_check {
                match check_infinitesimal_bearing_rigidity(spec) {
                    Ok(report) if !report.rigid => violations.push(format!(
                        "formation is not infinitesimally bearing rigid: rank(B) = {}, expected {} \
                         (set options.skip_rigidity_check to explore anyway)",
                        report.rank, report.expected_rank
                    )),
                    Ok(_) => {}
                    Err(e) => violations.push(e.to_string()),
                }
            }
            match check_anchored_block(spec) {
                Ok(report) if !report.positive_definite => violations.push(format!(
                    "B_ff is not positive definite (lambda_min = {:.3e}); leaders do not pin the formation",
                    report.lambda_min
                )),
                Ok(_) => {}
                Err(e) => violations.push(e.to_string()),
            }
            match solve_desired_positions(spec) {
                Ok(r) => Some(r),
                Err(e) => {
                    violations.push(e.to_string());
                    None
                }
            }
        } else {
            None
        };

        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let spec = spec.expect("no violations implies spec built");
        let realization = realization.expect("no violations implies realization solved");
        let trajectory = TargetTrajectory::new(&realization, spec.dim(), profile.clone());
        Ok(Self {
            law: config.law,
            spec,
            gains,
            profile,
            realization,
            trajectory,
            config,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        Self::from_config(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Bundled golden scenarios: `sim1` (law A) and `sim2` (law B).
    pub fn builtin(name: &str) -> Option<Result<Self>> {
        builtin_toml(name).map(Self::from_toml_str)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(&self.config).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            boundary_layer: self.config.options.boundary_layer,
            estimator_variant: if self.config.options.paper_literal_estimator {
                EstimatorVariant::PrintedForm
            } else {
                EstimatorVariant::ProofConsistent
            },
            record_every: 1,
        }
    }

    pub fn sim_setup(&self) -> SimSetup<'_> {
        SimSetup {
            spec: &self.spec,
            gains: &self.gains,
            law: self.law,
            trajectory: &self.trajectory,
            integrator: self.config.integrator,
            options: self.sim_options(),
        }
    }

    /// Initial swarm state: leaders at their anchors, followers either at
    /// the explicit positions or drawn uniformly from a seeded box around
    /// their desired positions, all initial velocities zero. Law-B
    /// estimates start at the true position plus a seeded offset;
    /// reference states start at the agent's own position.
    pub fn initial_state(&self, seed_override: Option<u64>) -> SwarmState {
        let seed = seed_override.unwrap_or(self.config.init.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.spec.dim();
        let l = self.spec.n_leaders();
        let n = self.spec.n_agents();
        let w = self.config.init.box_half_width;

        let mut positions: Vec<DVector<f64>> = self.spec.leader_positions().to_vec();
        for fi in 0..self.spec.n_followers() {
            let p = match &self.config.init.follower_positions {
                Some(explicit) => DVector::from_vec(explicit[fi].clone()),
                None => {
                    let center = self.realization.agent_position(d, l + fi);
                    DVector::from_fn(d, |k, _| center[k] + rng.gen_range(-w..=w))
                }
            };
            positions.push(p);
        }
        let velocities: Vec<DVector<f64>> = (0..n).map(|i| {
            if i < l {
                self.profile.velocity(0.0)
            } else {
                DVector::zeros(d)
            }
        }).collect();

        let estimators = (self.law == Law::B).then(|| {
            let we = self.config.init.estimator_offset_half_width;
            (0..self.spec.n_followers())
                .map(|fi| {
                    let p = &positions[l + fi];
                    let offset = DVector::from_fn(d, |_, _| rng.gen_range(-we..=we));
                    FollowerEstimator {
                        p_hat: p + offset,
                        v_hat: DVector::zeros(d),
                        p_bar: p.clone(),
                        v_bar: DVector::zeros(d),
                    }
                })
                .collect()
        });

        SwarmState {
            t: 0.0,
            positions,
            velocities,
            estimators,
        }
    }

    /// A state exactly on the moving target set at t = 0: desired
    /// positions, common velocity, exact estimates and references.
    pub fn target_initial_state(&self) -> SwarmState {
        let d = self.spec.dim();
        let l = self.spec.n_leaders();
        let v_c = self.profile.velocity(0.0);
        let positions: Vec<DVector<f64>> = (0..self.spec.n_agents())
            .map(|i| self.realization.agent_position(d, i))
            .collect();
        let velocities = vec![v_c.clone(); self.spec.n_agents()];
        let estimators = (self.law == Law::B).then(|| {
            (0..self.spec.n_followers())
                .map(|fi| FollowerEstimator {
                    p_hat: positions[l + fi].clone(),
                    v_hat: v_c.clone(),
                    p_bar: positions[l + fi].clone(),
                    v_bar: v_c.clone(),
                })
                .collect()
        });
        SwarmState {
            t: 0.0,
            positions,
            velocities,
            estimators,
        }
    }

    /// Simulate with the configured (or overridden) seed.
    pub fn run(&self, seed_override: Option<u64>) -> Result<Trace> {
        let initial = self.initial_state(seed_override);
        simulate(&self.sim_setup(), &initial)
    }
}

pub fn builtin_toml(name: &str) -> Option<&'static str> {
    match name {
        "sim1" => Some(SIM1_TOML),
        "sim2" => Some(SIM2_TOML),
        _ => None,
    }
}

pub fn builtin_names() -> &'static [&'static str] {
    &["sim1", "sim2"]
}

/// The five-agent formation used by the bundled scenarios: two leaders at
/// (0,0) and (0,2), three followers, seven bearing constraints plus the
/// mirrored follower-follower reverses. Seven is the minimum edge count
/// for infinitesimal bearing rigidity with five agents in the plane
/// (each edge adds one rank to the bearing Laplacian, and rigidity needs
/// rank 2n - 3 = 7), so both followers 3 and 4 sense both leaders.
pub fn bundled_formation() -> FormationSpec {
    let s = 1.0 / 2f64.sqrt();
    let v2 = |x: f64, y: f64| DVector::from_vec(vec![x, y]);
    let bearings = vec![
        (2, 0, v2(1.0, 0.0)),   // g*_31
        (2, 1, v2(s, s)),       // g*_32
        (3, 0, v2(s, -s)),      // g*_41
        (3, 1, v2(1.0, 0.0)),   // g*_42
        (2, 3, v2(0.0, 1.0)),   // g*_34
        (3, 2, v2(0.0, -1.0)),
        (2, 4, v2(-s, s)),      // g*_35
        (4, 2, v2(s, -s)),
        (4, 3, v2(s, s)),       // g*_54
        (3, 4, v2(-s, -s)),
    ];
    FormationSpec::new(
        2,
        5,
        2,
        bearings,
        vec![v2(0.0, 0.0), v2(0.0, 2.0)],
        false,
    )
    .expect("bundled formation is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sim1_builtin_loads() {
        let scenario = Scenario::builtin("sim1").unwrap().unwrap();
        assert_eq!(scenario.law, Law::A);
        assert_abs_diff_eq!(scenario.gains.k1, 0.5);
        assert_abs_diff_eq!(scenario.gains.k2, 2.0);
        assert_abs_diff_eq!(scenario.gains.delta1, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(scenario.gains.delta2, 1.0);
    }

    #[test]
    fn sim2_builtin_loads() {
        let scenario = Scenario::builtin("sim2").unwrap().unwrap();
        assert_eq!(scenario.law, Law::B);
        assert_abs_diff_eq!(scenario.gains.k1, 1.0);
        assert_abs_diff_eq!(scenario.gains.k2, 1.0);
        assert_abs_diff_eq!(scenario.gains.k3, 1.0);
        assert_abs_diff_eq!(scenario.gains.k4, 0.5);
        assert_abs_diff_eq!(scenario.gains.k5, 2.0);
        assert_abs_diff_eq!(scenario.gains.k6, 1.0);
        assert!(scenario.config.notes.as_deref().unwrap_or("").contains("k6"));
    }

    #[test]
    fn builtin_matches_hand_built_formation() {
        let scenario = Scenario::builtin("sim1").unwrap().unwrap();
        let hand = bundled_formation();
        assert_eq!(scenario.spec.edges(), hand.edges());
        for &(i, j) in hand.edges() {
            assert_abs_diff_eq!(
                scenario.spec.desired_bearing(i, j).unwrap(),
                hand.desired_bearing(i, j).unwrap(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn single_leader_config_is_rejected_citing_hypothesis() {
        let text = builtin_toml("sim1").unwrap().replace("leaders = 2", "leaders = 1");
        // keep the leader position list consistent with one leader
        let text = text.replace("leader_positions = [[0.0, 0.0], [0.0, 2.0]]", "leader_positions = [[0.0, 0.0]]");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2 leaders"), "{msg}");
    }

    #[test]
    fn invalid_gains_are_reported_with_margin() {
        let text = builtin_toml("sim1").unwrap().replace("k2 = 2.0", "k2 = 1.5");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("law A gain inequality"), "{msg}");
        assert!(msg.contains("1.5"), "{msg}");
    }

    #[test]
    fn config_round_trips_semantically() {
        let scenario = Scenario::builtin("sim2").unwrap().unwrap();
        let text = scenario.to_toml_string().unwrap();
        let reloaded = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(reloaded.law, scenario.law);
        assert_eq!(reloaded.gains, scenario.gains);
        assert_eq!(reloaded.profile, scenario.profile);
        assert_eq!(reloaded.spec.edges(), scenario.spec.edges());
        assert_eq!(
            reloaded.config.init.seed,
            scenario.config.init.seed
        );
        assert_abs_diff_eq!(
            reloaded.realization.positions,
            scenario.realization.positions,
            epsilon = 0.0
        );
    }

    #[test]
    fn seeded_initialization_is_deterministic() {
        let scenario = Scenario::builtin("sim1").unwrap().unwrap();
        let a = scenario.initial_state(Some(7));
        let b = scenario.initial_state(Some(7));
        assert_eq!(a, b);
        let c = scenario.initial_state(Some(8));
        assert_ne!(a.positions, c.positions);
        // followers land inside the configured box around their targets
        let w = scenario.config.init.box_half_width;
        for fi in 0..3 {
            let target = scenario.realization.agent_position(2, 2 + fi);
            let got = &a.positions[2 + fi];
            for k in 0..2 {
                assert!((got[k] - target[k]).abs() <= w);
            }
        }
    }

    #[test]
    fn target_initial_state_has_zero_metrics() {
        let scenario = Scenario::builtin("sim1").unwrap().unwrap();
        let state = scenario.target_initial_state();
        for i in 0..5 {
            let target = scenario.realization.agent_position(2, i);
            assert_abs_diff_eq!(&state.positions[i], &target, epsilon = 0.0);
        }
    }
}
