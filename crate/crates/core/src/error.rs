use thiserror::Error;

/// Errors raised by the geometry, solver and verification layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid fixture: {0}")]
    InvalidFixture(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// `S_θθ + S` fell to or below the convexity floor.
    #[error("convexity lost at theta = {theta:.6} (node {index}, S_tt + S = {radius_of_curvature:e}, tau = {tau})")]
    ConvexityLoss {
        index: usize,
        theta: f64,
        radius_of_curvature: f64,
        tau: f64,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
}

pub type Result<T> = std::result::Result<T, FlowError>;
