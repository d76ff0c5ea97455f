use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Variable kind used in protocol and neighbour-state errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariableKind {
    Camera,
    Point,
}

impl std::fmt::Display for VariableKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VariableKind::Camera => f.write_str("camera"),
            VariableKind::Point => f.write_str("point"),
        }
    }
}

fn pair_label(observation: Option<usize>) -> String {
    match observation {
        Some(k) => format!("observation {k}"),
        None => "point".to_string(),
    }
}

impl Error {
    /// Attaches an observation index to a geometry error raised by a
    /// single-pair operation.
    pub fn at_observation(self, k: usize) -> Self {
        match self {
            Error::DegenerateGeometry { distance, .. } => Error::DegenerateGeometry {
                observation: Some(k),
                distance,
            },
            other => other,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {} is {distance:e} from its camera", pair_label(*.observation))]
    DegenerateGeometry {
        observation: Option<usize>,
        distance: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {point} is behind camera {camera}")]
    PointBehindCamera { camera: usize, point: usize },

    #[error("device {device} is missing {kind} {id} from its snapshot")]
    MissingNeighborState {
        device: usize,
        kind: VariableKind,
        id: usize,
    },

    #[error("reduced camera system could not be factorized")]
    LinearSolveFailure,

    #[error("rotation projection is ambiguous (singular values {0:?})")]
    NearSingularProjection([f64; 3]),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("device {device} failed at iteration {iteration}: {source}")]
    Device {
        device: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("count mismatch: {0}")]
    CountMismatch(String),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: u32, found: u32 },

    #[error("malformed record: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
