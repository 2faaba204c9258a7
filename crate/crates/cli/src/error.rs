use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] pairwalk::Error),

    #[error("gate failed: {0}")]
    Gate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration and precondition problems, 3 for residual or
    /// acceptance gates.
    pub fn exit_code(&self) -> i32 {
        use pairwalk::Error as E;
        match self {
            CliError::Gate(_) => 3,
            CliError::Core(E::Synthesis { .. } | E::Consistency { .. } | E::Stability(_)) => 3,
            _ => 2,
        }
    }
}
