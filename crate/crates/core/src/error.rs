use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular chart point: theta = {0} must lie strictly inside (0, pi)")]
    SingularChart(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("homothetic case xi = |s| = {0}: use the equal-eigenvalue formulas")]
    Homothetic(f64),
    #[error("degenerate point: gradient norm {0:e} below threshold")]
    Degenerate(f64),
    #[error("quadrature did not converge (relative residual {residual:e})")]
    Quadrature { residual: f64 },
    #[error("{excluded} of {trials} trials flagged unreliable at u = {u}")]
    ExcessiveExclusion { u: f64, excluded: usize, trials: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
