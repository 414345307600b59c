use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter outside the supported domain (reaction order, time, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at x = {x}: {reason}")]
    Integration { x: f64, reason: String },

    #[error("invalid shooting bracket ({lo}, {hi}): both ends classified as {class}")]
    BracketInvalid { lo: f64, hi: f64, class: String },

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate}, error {error}")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    /// A numerical consistency check between two construction routes failed.
    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation aborted at t = {t}: {reason}")]
    Simulation { t: f64, reason: String },

    #[error("archive error: {0}")]
    Archive(String),

    /// Failure inside a named pipeline stage.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(stage: &str) -> impl Fn(Error) -> Error + '_ {
        move |e| Error::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        }
    }

    /// True for errors that come from bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Domain(_) | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
