use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the toolkit.
///
/// Variants are grouped by how the CLI reports them: configuration problems
/// exit with 2, stage/algorithm failures with 3, and OS-level I/O with 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or semantically invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// OS-level I/O failure (open/read/write/create).
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed content in a text input (CSV, pair list, ...).
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Malformed SGRID content; `offset` is the byte where decoding failed.
    #[error("{}: invalid SGRID at byte {offset}: {msg}", path.display())]
    Sgrid {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    /// Precondition violation or inconsistent in-memory inputs.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Interferogram network splits into more than one connected component.
    #[error(
        "network has {count} connected components [{detail}]; \
         rerun with allow_disconnected to invert each component about its own reference"
    )]
    Disconnected { count: usize, detail: String },

    /// Wrapped phase contains residues, so path integration is unreliable.
    #[error("{count} phase residues detected; path integration is inconsistent here, use unwrap_ls")]
    Residues { count: usize },

    /// Iterative solver ran out of iterations.
    #[error(
        "conjugate gradient stalled at relative residual {residual:.3e} \
         after {iters} iterations (target {tol:.1e})"
    )]
    CgStalled {
        tol: f64,
        iters: usize,
        residual: f64,
    },

    /// A pipeline stage failed; wraps the underlying cause.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap any error with the pipeline stage it occurred in. Nested stage
    /// wrappers are collapsed so the innermost stage name wins.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 2 config, 3 stage/algorithm, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
