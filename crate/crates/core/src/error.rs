use std::fmt;
use std::path::PathBuf;

use crate::transform::RigidTransform;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extraction,
    Ransac,
    Icp,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Extraction => "keypoint extraction",
            Stage::Ransac => "ransac",
            Stage::Icp => "icp",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is singular or too ill-conditioned to invert")]
    SingularMatrix,

    #[error("timestamp {t} outside deformation time domain [{min}, {max}]")]
    Domain { t: f64, min: f64, max: f64 },

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("opacity mask selects no points")]
    EmptySelection,

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("ransac found no hypothesis with at least {required} inliers (best had {inliers})")]
    RegistrationFailure {
        best: RigidTransform,
        inliers: usize,
        required: usize,
    },

    #[error("no correspondences within the ICP distance at the initial transform")]
    NoOverlap,

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate synthetic spec: {0}")]
    DegenerateSpec(String),

    #[error("PLY parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("PLY schema error: {0}")]
    Schema(String),

    #[error("invalid vertex data at indices {indices:?}")]
    Data { indices: Vec<usize> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips stage tags and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
