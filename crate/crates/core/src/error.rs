use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("singular radius r = {0}: the axis is handled by the regularized origin field")]
    SingularRadius(f64),
    #[error("state is not in Fix(R): |u2| + |u4| = {0:e}")]
    NotSymmetric(f64),
    #[error("singular linear system ({0})")]
    Singular(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integrator step underflow at x = {x} (h = {h:e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),
    #[error("Newton did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("period collapsed to p = {0}: left the roll family")]
    PeriodCollapse(f64),
    #[error("no roll on the continued family at μ = {mu}, h = {h}")]
    NoRoll { mu: f64, h: f64 },
    #[error("roll is not hyperbolic: no real multiplier pair with λ > 1 (largest |λ| = {0})")]
    NotHyperbolic(f64),
    #[error("rest state is not hyperbolic at μ = {mu}: {stable} stable eigenvalues, min |Re λ| = {min_re:e}")]
    RestStateNotHyperbolic { mu: f64, stable: usize, min_re: f64 },
    #[error("no sign change of S(0, ·) on [{lo}, {hi}]: S(lo) = {s_lo:e}, S(hi) = {s_hi:e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        s_lo: f64,
        s_hi: f64,
    },
    #[error("S evaluation failed at x = {x}, h = {h}: {reason}")]
    SEvaluation { x: f64, h: f64, reason: String },
    #[error("mesh refinement failed: residual change {0:e} on the doubled mesh")]
    MeshResolution(f64),
    #[error("not enough folds: {found} found, {needed} needed")]
    InsufficientFolds { found: usize, needed: usize },
    #[error("continuation failed: {0}")]
    Continuation(String),
}

pub type Result<T> = core::result::Result<T, Error>;
