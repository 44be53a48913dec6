//! Error type shared by all core modules.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by tensor operations, model construction, training and
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand dimensions do not agree; carries both shapes.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A configuration value is out of range or inconsistent with the data.
    Config(String),
    /// Input data violates a precondition (bad label, empty sequence, ...).
    Data(String),
    /// A computation produced a non-finite value.
    NonFinite(String),
    /// Training aborted on a non-finite loss.
    TrainDiverged {
        epoch: usize,
        sample: String,
        lr: f64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: dimension mismatch between {lhs:?} and {rhs:?}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::TrainDiverged { epoch, sample, lr } => write!(
                f,
                "training aborted: non-finite loss at epoch {epoch}, sample {sample}, lr {lr:e}"
            ),
        }
    }
}

impl core::error::Error for Error {}
