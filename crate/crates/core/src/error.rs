use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single offending configuration field.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {}", join_fields(.0))]
    Validation(Vec<FieldError>),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),
}

fn join_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, past any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Stage tags from outermost to innermost.
    pub fn stages(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut e = self;
        while let Error::Stage { stage, source } = e {
            out.push(*stage);
            e = source;
        }
        out
    }

    /// Process exit code: 1 validation, 2 non-convergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Format(_) => 1,
            Error::NonConvergence(_) => 2,
            Error::Io { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

/// Collects field errors and turns them into a single validation error.
#[derive(Debug, Default)]
pub(crate) struct Validator {
    errors: Vec<FieldError>,
}

impl Validator {
    pub fn check(&mut self, ok: bool, field: &str, message: &str) -> &mut Self {
        if !ok {
            self.errors.push(FieldError::new(field, message));
        }
        self
    }

    pub fn extend(&mut self, other: Result<()>) -> &mut Self {
        match other {
            Ok(()) => {}
            Err(Error::Validation(mut errs)) => self.errors.append(&mut errs),
            Err(e) => self.errors.push(FieldError::new("?", e.to_string())),
        }
        self
    }

    pub fn finish(&mut self) -> Result<()> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(std::mem::take(&mut self.errors)))
        }
    }
}
