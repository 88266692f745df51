use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] grasp_core::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid scene {id}: {msg}")]
    InvalidScene { id: String, msg: String },
    #[error("invalid assembly: {0}")]
    Assembly(String),
    #[error("version mismatch: {0}")]
    Version(String),
    #[error("cannot decode {path}: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("training aborted: {0}")]
    Training(String),
    #[error("dataset incomplete, missing: {}", .0.join(", "))]
    MissingFiles(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Core(grasp_core::Error::Shape { .. }) | Self::Shape(_) => "shape",
            Self::Core(grasp_core::Error::InvalidConfig(_)) | Self::InvalidConfig(_) => "config",
            Self::Core(grasp_core::Error::NoDepth { .. }) => "no-depth",
            Self::Core(grasp_core::Error::InvalidExtrinsic(_)) => "calibration",
            Self::Core(_) => "geometry",
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::InvalidSpec(_) => "spec",
            Self::InvalidScene { .. } => "scene",
            Self::Assembly(_) => "assembly",
            Self::Version(_) => "version",
            Self::Decode { .. } => "decode",
            Self::Training(_) => "training",
            Self::MissingFiles(_) => "missing-files",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" | "missing-files" => 3,
            "parse" | "decode" => 4,
            "version" | "spec" | "assembly" | "shape" => 5,
            "training" => 6,
            _ => 1,
        }
    }
}
