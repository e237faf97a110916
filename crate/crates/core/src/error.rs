use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid physical setup: {0}")]
    InvalidSetup(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "boundary solve found no sign change (h1 = {h1}, dx = {dx}, lower bound = {lower}) \
         after {expansions} bracket expansions"
    )]
    BoundarySolve {
        h1: f64,
        dx: f64,
        lower: f64,
        expansions: usize,
    },

    #[error("non-finite state at step {step} (t = {t}); retry with a smaller diffusion constant Cd")]
    Unstable { step: usize, t: f64 },

    #[error("no wall-touch after {steps} steps (t = {t}, h[last] = {h_last})")]
    NoWallTouch { steps: usize, t: f64, h_last: f64 },

    #[error("least-squares system is under-determined: {samples} samples for {terms} basis terms")]
    UnderDetermined { samples: usize, terms: usize },

    #[error("power index mismatch: surrogate trained at n = {trained}, got n = {requested}")]
    IndexMismatch { trained: f64, requested: f64 },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
