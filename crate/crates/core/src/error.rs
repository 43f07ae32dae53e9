use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("vector has no edges and cannot be assigned to a phenotype")]
    NotAssignable,

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("undefined index: {0}")]
    UndefinedIndex(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error(
        "complete separation detected (|coefficient| = {magnitude:.3} at iteration {iteration})"
    )]
    Separation { iteration: usize, magnitude: f64 },

    #[error("singular information matrix (collinear covariates)")]
    Collinearity,

    #[error("no events observed")]
    NoEvents,

    #[error(
        "partial likelihood diverges (|coefficient| = {magnitude:.3} at iteration {iteration})"
    )]
    Divergence { iteration: usize, magnitude: f64 },

    #[error(
        "optimizer did not converge after {iterations} iterations (max |gradient| = {gradient:e})"
    )]
    NonConvergence { iterations: usize, gradient: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping provenance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Separation { .. }
                | Error::Collinearity
                | Error::NoEvents
                | Error::Divergence { .. }
                | Error::NonConvergence { .. }
                | Error::Estimation(_)
                | Error::DegenerateGeometry(_)
        )
    }

    /// Process exit code: 2 for input/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_root_cause() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Validation("x".into()).exit_code(), 2);
        assert_eq!(Error::NoEvents.exit_code(), 3);
        let wrapped = Error::Separation {
            iteration: 4,
            magnitude: 20.0,
        }
        .context("slide a")
        .context("analysis stage");
        assert_eq!(wrapped.exit_code(), 3);
        assert!(wrapped.to_string().starts_with("analysis stage: slide a: "));
    }

    #[test]
    fn context_with_is_lazy_on_success() {
        let ok: Result<u8> = Ok(1);
        assert_eq!(ok.context_with(|| unreachable!()).unwrap(), 1);
        let err: Result<u8> = Err(Error::NoEvents);
        assert!(matches!(
            err.context_with(|| "tile 3".into()),
            Err(Error::Context { .. })
        ));
    }
}
