use thiserror::Error;

#[derive(Debug, Error)]
pub enum OcticError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} = {value} is not divisible by {divisor}")]
    NotDivisible {
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

impl OcticError {
    /// Attach the offending path to an I/O error.
    pub fn at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> OcticError + '_ {
        move |source| OcticError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, OcticError>;

pub(crate) fn check_divisible(what: &'static str, value: usize, divisor: usize) -> Result<()> {
    if divisor == 0 || value % divisor != 0 {
        return Err(OcticError::NotDivisible {
            what,
            value,
            divisor,
        });
    }
    Ok(())
}
