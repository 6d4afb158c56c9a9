//! Crate-wide error type.
//!
//! Errors fall into two coarse categories that callers (notably the CLI)
//! care about: *validation* failures — the inputs or configuration violate a
//! documented precondition — and *I/O or format* failures while touching the
//! filesystem. [`Error::is_validation`] exposes the split without forcing
//! callers to match every variant.

use std::io;

/// Error type shared by every module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input violated a documented precondition or invariant.
    #[error("validation: {0}")]
    Validation(String),

    /// An operation was invoked in a label mode that does not support it
    /// (e.g. mask-only admission tests on color labels).
    #[error("mode: {0}")]
    Mode(String),

    /// A frame index was offered twice to the same memory bank.
    #[error("frame {0} is already present in the bank")]
    DuplicateFrame(usize),

    /// Filesystem-level failure.
    #[error("i/o: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    /// A file existed but its contents were not in the expected format.
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// Shorthand constructor for [`Error::Validation`].
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand constructor for [`Error::Io`] with a human context string.
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors that indicate bad inputs rather than a failing
    /// filesystem; the CLI maps these to exit code 2 and the rest to 3.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Mode(_) | Error::DuplicateFrame(_)
        )
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_split_matches_variants() {
        assert!(Error::validation("x").is_validation());
        assert!(Error::Mode("m".into()).is_validation());
        assert!(Error::DuplicateFrame(3).is_validation());
        assert!(!Error::io("open", io::Error::new(io::ErrorKind::NotFound, "gone")).is_validation());
        assert!(!Error::Format("bad magic".into()).is_validation());
    }

    #[test]
    fn display_includes_context() {
        let err = Error::io("reading frame 4", io::Error::new(io::ErrorKind::Other, "boom"));
        let text = err.to_string();
        assert!(text.contains("reading frame 4"));
        assert!(text.contains("boom"));
    }
}
