use thiserror::Error;

/// Errors raised by the solvers, compressors and the round engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedMooError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid rank {rank}: must be in 1..={max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("budget of {budget} floats cannot afford one unit ({unit} floats) for {kind}")]
    Budget { kind: String, budget: usize, unit: usize },

    #[error("corrupt payload: {0}")]
    Decode(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid floor {floor}: floor * M must be < 1 (M = {tasks})")]
    InvalidFloor { floor: f64, tasks: usize },

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("diverged at round {round}: {reason}")]
    Diverged { round: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<FedMooError>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl FedMooError {
    /// Strips any round annotation.
    pub fn root(&self) -> &FedMooError {
        match self {
            FedMooError::AtRound { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self.root(), FedMooError::Diverged { .. })
    }
}

impl From<std::io::Error> for FedMooError {
    fn from(e: std::io::Error) -> Self {
        FedMooError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FedMooError>;
