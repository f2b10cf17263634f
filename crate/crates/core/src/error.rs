use std::path::PathBuf;

use thiserror::Error;

/// Failures while reading or writing `.ptns` tensor files.
///
/// Each malformed-file condition has its own variant so callers (and the CLI's
/// exit-code mapping) can tell them apart.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"PTNS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("tensor dims overflow: {0}")]
    DimOverflow(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{found} trailing bytes after payload")]
    TrailingBytes { found: usize },
    #[error("dims {dims:?} do not describe {len} values")]
    ShapeMismatch { dims: Vec<usize>, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("joint index {index} out of range for {count} joints")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("joint count mismatch: {left} vs {right}")]
    JointCountMismatch { left: usize, right: usize },

    #[error("joint {joint} at ({x}, {y}) lies outside the {width}x{height} map")]
    OutOfBounds {
        joint: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("joint {joint} has non-positive depth {depth}")]
    NonPositiveDepth { joint: usize, depth: f64 },

    #[error("root joint {0} is not visible")]
    MissingRoot(usize),

    #[error("detection box does not overlap the image")]
    EmptyRegion,

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("no visible ground-truth joints to evaluate")]
    NoVisibleJoints,

    #[error("empty ground-truth set")]
    EmptyGroundTruth,

    #[error("empty batch")]
    EmptyBatch,

    #[error("scorer returned {0}, outside [0, 1]")]
    ScorerOutOfRange(f64),

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("frame {frame}, stage {stage}: {source}")]
    Stage {
        frame: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("could not place {requested} persons with the required separation after {attempts} attempts")]
    Placement { requested: usize, attempts: usize },
}

impl Error {
    /// Attaches the offending file path to an error.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
