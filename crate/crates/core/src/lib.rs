//! Bearing-based leader-follower formation tracking under decentralized
//! sliding-mode control.
//!
//! A team of `n` double-integrator agents holds a formation specified by
//! unit bearing vectors while two or more leaders translate it with a
//! common bounded time-varying velocity. The crate provides:
//!
//! - [`formation`]: interaction graph, Laplacian and bearing-Laplacian
//!   assembly, infinitesimal-rigidity and positive-definiteness checks;
//! - [`localization`]: desired positions solved from bearings and leader
//!   anchors, built-in velocity profiles with exact integrals, and the
//!   moving target trajectory;
//! - [`control`]: the direct sliding-mode law and the estimator-based law
//!   (consensus estimator + sliding-mode reference generator);
//! - [`integrator`]: fixed-step Euler/RK4 integration of the coupled
//!   dynamics with collision and blowup guards;
//! - [`analysis`]: error metrics, convergence reports, the finite-time
//!   settling bound and its simulation oracle;
//! - [`scenario`]: structured-text scenario files, validation, seeded
//!   initialization, and the bundled `sim1`/`sim2` golden scenarios.

pub mod analysis;
pub mod control;
pub mod error;
pub mod formation;
pub mod integrator;
pub mod localization;
pub mod scenario;

pub use analysis::{
    convergence_report, signum_settling_oracle, settling_time_bound, ConvergenceReport,
    ConvergenceThresholds, MetricsSample, Sample, Status, Trace,
};
pub use control::{EstimatorVariant, GainSet, Law};
pub use error::{Error, Result};
pub use formation::{
    bearing_of, build_bearing_laplacian, build_laplacian, check_infinitesimal_bearing_rigidity,
    check_anchored_block, projection_matrix, FormationSpec,
};
pub use integrator::{simulate, IntegratorConfig, Scheme, SimOptions, SimSetup, SwarmState};
pub use localization::{solve_desired_positions, TargetTrajectory, VelocityProfile};
pub use scenario::{Scenario, ScenarioConfig};
