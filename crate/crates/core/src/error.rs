use thiserror::Error;

/// Errors raised anywhere in the design and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown ion species `{0}`")]
    UnknownSpecies(String),

    #[error("unknown unit tag `{0}`")]
    UnknownUnit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ion ordering violated: q1 = {q1} must exceed q2 = {q2}")]
    OrderingViolated { q1: f64, q2: f64 },

    #[error("equilibrium equation has no positive root (alpha = {alpha}, beta = {beta})")]
    NoPositiveRoot { alpha: f64, beta: f64 },

    #[error("configuration is not a stable minimum (lambda_minus = {0})")]
    Unstable(f64),

    #[error("expected {expected} free parameters, got {got}")]
    WrongParameterCount { expected: usize, got: usize },

    #[error("scaling function is non-positive (rho = {rho} at s = {s})")]
    NonPositiveRho { rho: f64, s: f64 },

    #[error("normal-mode gap closed at t = {t}: omega_plus^2 - omega_minus^2 = {gap}")]
    GapClosed { t: f64, gap: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("optimizer did not converge after {iterations} iterations (best objective {best})")]
    NonConvergence { iterations: usize, best: f64 },

    #[error("wavefunction leaked to the grid boundary (edge/max = {0:.3e})")]
    Leakage(f64),

    #[error("final double well lost a minimum at lambda = {0}")]
    LostMinimum(f64),

    #[error("bisection bracket [{lo}, {hi}] does not straddle the threshold")]
    Bracket { lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
