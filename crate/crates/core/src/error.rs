use std::path::PathBuf;

use thiserror::Error;

use crate::grid_model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(ValidationReport),

    #[error("reduced admittance matrix is singular (network disconnected or degenerate)")]
    SingularReducedMatrix,

    #[error("load/green partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("station power {power} is below its circuit power {circuit}")]
    BelowCircuitPower { power: f64, circuit: f64 },

    #[error("greenness is undefined when brown import is not positive (e0 = {0})")]
    UndefinedMetric(f64),

    #[error("infeasible{}: {reason}", slot.map(|s| format!(" at slot {s}")).unwrap_or_default())]
    Infeasible { reason: String, slot: Option<usize> },

    #[error("grid search over {0} stations is too large (at most 3 supported)")]
    TooLarge(usize),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("trace {} has gaps at (slot, id): {}", path.display(), fmt_gaps(.missing))]
    Gap {
        path: PathBuf,
        missing: Vec<(usize, String)>,
    },

    #[error("trace {} has negative value {value} at slot {slot}, id {id}", path.display())]
    NegativeValue {
        path: PathBuf,
        slot: usize,
        id: String,
        value: f64,
    },

    #[error("mismatched horizons: {0} vs {1}")]
    MismatchedHorizons(usize, usize),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn infeasible(reason: impl Into<String>) -> Self {
        Error::Infeasible {
            reason: reason.into(),
            slot: None,
        }
    }

    /// Attaches a slot index to an `Infeasible` error; other variants pass through.
    pub fn at_slot(self, slot: usize) -> Self {
        match self {
            Error::Infeasible { reason, .. } => Error::Infeasible {
                reason,
                slot: Some(slot),
            },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn fmt_gaps(missing: &[(usize, String)]) -> String {
    const SHOWN: usize = 10;
    let mut parts: Vec<String> = missing
        .iter()
        .take(SHOWN)
        .map(|(s, id)| format!("({s}, {id})"))
        .collect();
    if missing.len() > SHOWN {
        parts.push(format!("... {} more", missing.len() - SHOWN));
    }
    parts.join(", ")
}
