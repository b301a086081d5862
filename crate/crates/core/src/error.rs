use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("anisotropic mesh unsupported (h_x = {hx}, h_y = {hy})")]
    AnisotropicMesh { hx: f64, hy: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain too coarse: {interior} interior nodes")]
    DomainTooCoarse { interior: usize },

    #[error("field length {got} does not match domain node count {expected}")]
    NonConforming { expected: usize, got: usize },

    #[error("unsupported Lebesgue exponent {0} (only 2 and 4)")]
    UnsupportedExponent(u32),

    #[error("negative mass shift lambda = {0}")]
    NegativeLambda(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("mode error: {0}")]
    Mode(&'static str),

    #[error("beta-too-large: {violated} is not positive (value {value:e})")]
    BetaTooLarge { violated: &'static str, value: f64 },

    #[error("cg-stalled after {iterations} iterations (relative residual {residual:e})")]
    CgStalled { iterations: usize, residual: f64 },

    #[error("operator-indefinite: non-positive curvature {curvature:e} at CG iteration {iteration}")]
    OperatorIndefinite { iteration: usize, curvature: f64 },

    #[error("normalization-nonpositive: component {component} has normalization integral {value:e}")]
    NormalizationNonpositive { component: usize, value: f64 },

    #[error("flow-stalled: step size {dt:e} fell below the minimum")]
    FlowStalled { dt: f64 },

    #[error("not-converged: ‖V‖_H = {norm_v:e} exceeds tolerance {tol:e}")]
    NotConverged { norm_v: f64, tol: f64 },

    #[error("left-admissible-region: {0}")]
    LeftAdmissibleRegion(String),

    #[error("degenerate seed: {0}")]
    DegenerateSeed(String),

    #[error("class-not-found: {0}")]
    ClassNotFound(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
