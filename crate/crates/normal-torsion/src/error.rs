use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid error: {0}")]
    Grid(String),

    #[error("Poisson solver did not converge after {sweeps} sweeps (residual history tail: {history:?})")]
    PoissonDiverged { sweeps: usize, history: Vec<f64> },

    #[error("immersion rank condition failed at node ({u}, {v}): smallest singular value {sigma:.3e}")]
    RankDeficient { u: f64, v: f64, sigma: f64 },

    #[error("normal frame construction degenerate: {0}")]
    FrameDegenerate(String),

    #[error("gauge rotation is not special orthogonal (deviation {0:.3e})")]
    NotRotation(f64),

    #[error("Picard iteration left the smallness regime: sup |G_{k}| = {sup:.3e} (history: {history:?})")]
    SmallnessViolated { k: usize, sup: f64, history: Vec<f64> },

    #[error("bound not evaluable: {0}")]
    Bounds(String),

    #[error("unknown surface '{0}'")]
    UnknownSurface(String),

    #[error("invalid surface parameter: {0}")]
    BadParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
