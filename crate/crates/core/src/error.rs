use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("insufficient energy: stored {stored} < requested {amount}")]
    InsufficientEnergy { stored: f64, amount: f64 },
    #[error("no inactive capacitor left to activate")]
    NoInactiveCapacitor,
    #[error("invalid pattern: {0}")]
    InvalidSpec(String),
    #[error("tick {tick} out of range for trace of length {len}")]
    OutOfRange { tick: usize, len: usize },
    #[error("peak has no counts above the noise floor")]
    EmptyPeak,
    #[error("state (level {level}, step {step}) outside a {k}x{t} table")]
    InvalidState {
        level: usize,
        step: usize,
        k: usize,
        t: usize,
    },
    #[error("invalid phase transition from phase {from} on {observation}")]
    InvalidTransition { from: u8, observation: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error("unknown plot `{name}`; valid plots: {valid}")]
    UnknownPlot { name: String, valid: String },
    #[error("unknown preset `{name}`; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },
    #[error("{0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by bad user input (configs, names, values).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::UnknownPlot { .. }
                | Error::UnknownPreset { .. }
        )
    }

    pub(crate) fn validation(field: &str, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
