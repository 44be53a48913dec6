//! File formats, dataset handling and reporting for tri-coupled
//! relative-attention recurrent networks.
//!
//! The `tcra-core` crate owns all numerics; this crate owns everything that
//! touches the filesystem: the binary tensor container, dataset manifests,
//! the synthetic interaction generator, model checkpoints, attention-weight
//! exports and the train/eval reports. The `tcra` binary wires those pieces
//! into a command line.

use std::fmt;
use std::path::PathBuf;

pub mod attention_dump;
pub mod checkpoint;
pub mod manifest;
pub mod report;
pub mod synth;
pub mod tensor_file;

/// Everything that can go wrong on the filesystem side, kept separate from
/// [`tcra_core::Error`] so each failure carries the path it came from.
#[derive(Debug)]
pub enum Error {
    /// Bad command-line usage: unknown flags, missing arguments, values out
    /// of range before any work starts.
    Usage(String),
    /// The operating system refused a read, write or directory operation.
    Io { path: PathBuf, source: std::io::Error },
    /// A binary file that does not parse; `offset` is the byte position at
    /// which the reader gave up.
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    /// A JSON document (manifest, checkpoint metadata) that does not parse
    /// or does not match the expected schema.
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    /// The core library rejected the data or the numbers went bad.
    Core(tcra_core::Error),
    /// A numerical check that ran to completion and failed, e.g. analytic
    /// gradients disagreeing with finite differences.
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure: 1 for usage problems, 2 for
    /// unreadable or malformed data, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } | Error::Format { .. } | Error::Json { .. } => 2,
            Error::Numerical(_) => 3,
            Error::Core(core) => match core {
                tcra_core::Error::NonFinite(_) | tcra_core::Error::TrainDiverged { .. } => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Usage(msg) => write!(f, "usage: {msg}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Format {
                path,
                offset,
                message,
            } => write!(f, "{} at byte {offset}: {message}", path.display()),
            Error::Json { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Core(e) => write!(f, "{e}"),
            Error::Numerical(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Json { source, .. } => Some(source),
            Error::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<tcra_core::Error> for Error {
    fn from(e: tcra_core::Error) -> Self {
        Error::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_usage_data_and_numerics() {
        assert_eq!(Error::Usage("bad flag".into()).exit_code(), 1);
        assert_eq!(
            Error::io("x", std::io::Error::from(std::io::ErrorKind::NotFound)).exit_code(),
            2
        );
        assert_eq!(Error::format("x", 4, "bad version").exit_code(), 2);
        assert_eq!(
            Error::Core(tcra_core::Error::Data("bad label".into())).exit_code(),
            2
        );
        assert_eq!(
            Error::Core(tcra_core::Error::NonFinite("loss".into())).exit_code(),
            3
        );
        assert_eq!(
            Error::Core(tcra_core::Error::TrainDiverged {
                epoch: 3,
                sample: "s7".into(),
                lr: 0.001,
            })
            .exit_code(),
            3
        );
        assert_eq!(Error::Numerical("rel err 0.2".into()).exit_code(), 3);
    }

    #[test]
    fn display_includes_path_and_offset() {
        let e = Error::format("data/t.tcra", 6, "unknown dtype 7");
        let msg = e.to_string();
        assert!(msg.contains("data/t.tcra"));
        assert!(msg.contains("byte 6"));
        assert!(msg.contains("unknown dtype 7"));
    }
}
