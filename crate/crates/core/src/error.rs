use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {source_name} at line {line}: {message}")]
    Format {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    #[error("degenerate pair: positions coincide, plunge and azimuth are undefined")]
    DegeneratePair,

    #[error("object at ({x:.3}, {z:.3}) has no support underneath")]
    FallsOutside { x: f64, z: f64 },

    #[error("layout failed: {0}")]
    Layout(String),

    #[error("masks and scene disagree: {0}")]
    Consistency(String),

    #[error("scene rejected by verification: {0}")]
    RejectedScene(String),

    #[error("generation exhausted after {attempts} attempts for scene {scene}")]
    Exhausted { scene: String, attempts: usize },

    #[error("ingestion error: missing positions for {}", .0.join(", "))]
    Ingestion(Vec<String>),

    #[error("cannot parse question `{0}`")]
    Parse(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{count} regions exceed the padded capacity of {n_max}")]
    Truncation { count: usize, n_max: usize },

    #[error("training diverged at step {step}: non-finite {term}")]
    Divergence { term: String, step: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable snake-case name of the variant, for machine-readable records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format { .. } => "format",
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::Lookup { .. } => "lookup",
            Error::DegeneratePair => "degenerate_pair",
            Error::FallsOutside { .. } => "falls_outside",
            Error::Layout(_) => "layout",
            Error::Consistency(_) => "consistency",
            Error::RejectedScene(_) => "rejected_scene",
            Error::Exhausted { .. } => "exhausted",
            Error::Ingestion(_) => "ingestion",
            Error::Parse(_) => "parse",
            Error::Shape(_) => "shape",
            Error::Truncation { .. } => "truncation",
            Error::Divergence { .. } => "divergence",
            Error::Capacity(_) => "capacity",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit status: 2 for configuration problems, 3 when scene
    /// generation or verification gives up, 4 when training diverges, 1
    /// otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format { .. } | Error::Lookup { .. } => 2,
            Error::Exhausted { .. } | Error::RejectedScene(_) => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn format(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Maps a toml deserialization error onto [`Error::Format`] with a 1-based line.
    pub(crate) fn from_toml(source_name: &str, text: &str, err: toml::de::Error) -> Self {
        let line = err
            .span()
            .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::format(source_name, line, err.message().to_string())
    }
}
