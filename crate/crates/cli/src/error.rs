use helmdg_core::HelmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("config error: {0}")]
    Config(String),
    /// A core failure, tagged with the mesh index and the study stage.
    #[error("mesh {mesh}, {stage}: {source}")]
    Stage {
        mesh: usize,
        stage: &'static str,
        #[source]
        source: HelmError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DriverError>;

/// Exit status for configuration problems (including unreadable inputs).
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

impl DriverError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => EXIT_CONFIG,
            Self::Stage { source, .. } => match source {
                HelmError::Structural(_)
                | HelmError::Specification(_)
                | HelmError::Geometry(_)
                | HelmError::Input(_)
                | HelmError::Parse(_)
                | HelmError::Io { .. } => EXIT_CONFIG,
                HelmError::Capability(_) | HelmError::NearSingular { .. } | HelmError::Numerical(_) => EXIT_NUMERICAL,
            },
        }
    }
}

/// Attaches the mesh index and stage to core errors.
pub trait StageExt<T> {
    fn at(self, mesh: usize, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for std::result::Result<T, HelmError> {
    fn at(self, mesh: usize, stage: &'static str) -> Result<T> {
        self.map_err(|source| DriverError::Stage { mesh, stage, source })
    }
}
