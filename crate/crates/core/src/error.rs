use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite value produced in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("incompatible genomes: {left} vs {right}")]
    Incompatible { left: String, right: String },

    #[error("genome length mismatch: manifest expects {expected} values, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("genome value at index {index} is not finite")]
    NonFiniteValue { index: usize },

    #[error("bad magic: not a checkpoint file")]
    BadMagic,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("fitness of individual {index} is not cached")]
    UncachedFitness { index: usize },

    #[error("fitness evaluation failed for individual {index}: {source}")]
    Fitness {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fitness of individual {index} is not finite ({value})")]
    NonFiniteFitness { index: usize, value: f64 },

    #[error("merge tree needs a power-of-two number of checkpoints (at least 2), got {0}; drop or add models to reach 2, 4, 8, ...")]
    NotPowerOfTwo(usize),

    #[error("merge node (level {level}, pair {index}) failed: {source}")]
    Node {
        level: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("unknown dataset kind `{0}` (expected two_moons, gaussian_blobs or concentric_rings)")]
    UnknownKind(String),

    #[error("partition `{0}` would be empty")]
    EmptyPartition(&'static str),

    #[error("unknown partition `{0}` (expected train, val or test)")]
    UnknownPartition(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
