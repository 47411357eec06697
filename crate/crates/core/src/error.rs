use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown sensor node `{0}`")]
    UnknownSensor(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge `{0}`-`{1}`")]
    DuplicateEdge(String, String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("non-finite coordinate for node `{0}`")]
    NonFiniteCoordinate(String),
    #[error("node index {0} out of range")]
    NodeIndex(usize),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model is not contractive (C_s = {0})")]
    NotContractive(f64),
    #[error("decay hypothesis violated: C_s * (deg G + 1) = {0} >= 1")]
    HypothesisViolated(f64),
    #[error("fixpoint iteration did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("scenario kind mismatch: expected {expected}")]
    KindMismatch { expected: &'static str },
    #[error("node `{0}` is not a sensor")]
    NotASensor(String),
    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("dataset: {0}")]
    Dataset(String),
    #[error("learner `{family}` does not support importance `{importance}`")]
    ImportanceMismatch {
        family: &'static str,
        importance: &'static str,
    },
    #[error("empty sample")]
    EmptySample,
    #[error("empty sensor list")]
    NoSensors,

    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
