use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A bearing vector that is supposed to be unit-norm is not.
    #[error("invalid bearing for edge ({i}, {j}): |g| = {norm}, expected 1 within {tol}")]
    InvalidBearing { i: usize, j: usize, norm: f64, tol: f64 },

    /// Two agents got closer than the configured collision distance.
    #[error("collision between agents {i} and {j} at t = {t}: distance {dist} < {eps}")]
    Collision { i: usize, j: usize, t: f64, dist: f64, eps: f64 },

    /// A state component became NaN or infinite during integration.
    #[error("numerical blowup at t = {t}: agent {agent} produced a non-finite state")]
    NumericalBlowup { agent: usize, t: f64 },

    /// Gain inequality violated; carries the named rule and its margin.
    #[error("gain condition violated: {0}")]
    GainCondition(#[from] GainViolation),

    /// The follower bearing Laplacian block is singular; the desired
    /// formation cannot be localized from the leader anchors.
    #[error("formation not localizable: lambda_min(B_ff) = {lambda_min} below tolerance")]
    NotLocalizable { lambda_min: f64 },

    /// The rank test for rigidity sits too close to the cutoff to decide.
    #[error(
        "ambiguous rigidity: singular value {sigma} within the undecidable band \
         [{band_lo}, {band_hi}] around the rank cutoff"
    )]
    AmbiguousRigidity { sigma: f64, band_lo: f64, band_hi: f64 },

    /// An operation was called with a hypothesis it requires unmet.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// Scenario file / configuration problems. Collects every violation
    /// found, not just the first.
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// Structured-text parse failure.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A violated gain inequality, with enough detail to print the rule.
#[derive(Debug, Clone, Error)]
#[error("{rule}: {lhs} = {lhs_value} must exceed {rhs} = {rhs_value} (margin {margin})")]
pub struct GainViolation {
    pub rule: String,
    pub lhs: String,
    pub lhs_value: f64,
    pub rhs: String,
    pub rhs_value: f64,
    pub margin: f64,
}

pub type Result<T> = std::result::Result<T, Error>;
