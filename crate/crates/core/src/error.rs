use thiserror::Error;

/// Errors raised by the engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(String),
    #[error("correlation matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("series did not converge after {n_used} terms (partial value {partial:e})")]
    NoConvergence { n_used: usize, partial: f64 },
    #[error("series at z0 = {z0} did not converge; choose a smaller z0")]
    InitialPointTooLarge { z0: f64 },
    #[error("precision insufficient: {0}")]
    PrecisionInsufficient(String),
    #[error("no operator found; raise bounds (max_order {max_order}, max_degree {max_degree})")]
    NoOperator { max_order: usize, max_degree: usize },
    #[error("ill-conditioned guessing system: smallest kept pivot {kept:e}, largest dropped {dropped:e}")]
    IllConditioned { kept: f64, dropped: f64 },
    #[error("expansion point is singular; shift z0 (leading coefficient vanishes at {0})")]
    SingularExpansionPoint(f64),
    #[error("singular point {point} inside integration path [{from}, {to}]; re-guess with a different normalization or offset z0")]
    SingularPath { point: f64, from: f64, to: f64 },
    #[error("step size underflow at z = {0}: stiff or singular system")]
    StepUnderflow(f64),
    #[error("probability {0} outside [0, 1]: wrong operator or singular passage")]
    ProbabilityOutOfRange(f64),
    #[error("singular channel draw: {0}")]
    SingularChannel(String),
    #[error("missing configuration: {0}")]
    MissingConfig(String),
    #[error("config parse error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
