use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} time samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("{quantity} = {value} outside [{min}, {max}] at point {point}")]
    RangeViolation {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
        point: usize,
    },
    #[error("ellipticity failure: C_el = {c_el} (minimizer s = {s}, r = {r})")]
    Ellipticity { c_el: f64, s: f64, r: f64 },
    #[error("nonpositive density {value} at point {point}")]
    NonPositiveDensity { value: f64, point: usize },
    #[error("sigma condition violated at t = {t}: observed {observed} >= sigma = {sigma}")]
    SigmaViolation { t: f64, observed: f64, sigma: f64 },
    #[error("Picard iteration for the flow map did not converge at t = {t} after {iterations} iterations")]
    PicardDivergence { t: f64, iterations: usize },
    #[error("singular Jacobian at t = {t}, point {point} (det = {det})")]
    SingularJacobian { t: f64, point: usize, det: f64 },
    #[error("inverse flow map did not converge at t = {t} (residual {residual})")]
    InverseMap { t: f64, residual: f64 },
    #[error("lambda must be nonzero")]
    ZeroLambda,
    #[error("singular symbol at xi = {xi:?}, lambda = {lambda} (condition {condition:e})")]
    SingularSymbol {
        xi: Vec<f64>,
        lambda: num_complex::Complex64,
        condition: f64,
    },
    #[error("Richardson iteration is not contracting (ratio {ratio} after {iterations} steps, lambda = {lambda}); increase nu")]
    NonContraction {
        ratio: f64,
        iterations: usize,
        lambda: num_complex::Complex64,
    },
    #[error("iteration cap {iterations} reached with residual {residual:e}")]
    IterationCap { iterations: usize, residual: f64 },
    #[error("fixed point not reached after {halvings} halvings of T (last T = {last_t})")]
    TimeExhausted { halvings: usize, last_t: f64 },
    #[error("instability at t = {t}: norm grew by {growth:e}")]
    Instability { t: f64, growth: f64 },
    #[error("time step {dt} exceeds the explicit limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("bad snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
