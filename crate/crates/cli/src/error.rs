use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] seisforge_core::Error),

    #[error(transparent)]
    Model(#[from] seisforge_srfd::Error),

    #[error(transparent)]
    Pipeline(#[from] seisforge_pipeline::Error),
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GENERATION: i32 = 3;
pub const EXIT_COMPATIBILITY: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

fn core_code(e: &seisforge_core::Error) -> i32 {
    use seisforge_core::Error as E;
    match e {
        E::Config(_) | E::Domain(_) | E::Io { .. } => EXIT_CONFIG,
        E::Generation(_) | E::Scaling(_) => EXIT_GENERATION,
        E::Parse { .. } | E::Data { .. } | E::Format(_) => EXIT_COMPATIBILITY,
        E::Numerical { .. } => EXIT_NUMERICAL,
    }
}

fn model_code(e: &seisforge_srfd::Error) -> i32 {
    use seisforge_srfd::Error as E;
    match e {
        E::Config(_) | E::Usage(_) | E::Io { .. } => EXIT_CONFIG,
        E::Format(_) | E::Compatibility(_) => EXIT_COMPATIBILITY,
    }
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use seisforge_pipeline::Error as P;
        match self {
            Self::Config(_) | Self::Io { .. } => EXIT_CONFIG,
            Self::Core(e) => core_code(e),
            Self::Model(e) => model_code(e),
            Self::Pipeline(e) => match e {
                P::Config(_) | P::Io { .. } => EXIT_CONFIG,
                P::Generation(_) => EXIT_GENERATION,
                P::Compatibility(_) | P::Format(_) => EXIT_COMPATIBILITY,
                P::NonFinite { .. } => EXIT_NUMERICAL,
                P::Core(e) => core_code(e),
                P::Model(e) => model_code(e),
            },
        }
    }
}
