use thiserror::Error;

use crate::estimators::EstimatorId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("treatment must be 0 or 1, found {value} at row {row}")]
    NonBinaryTreatment { row: usize, value: f64 },

    #[error("binary mediator must be 0 or 1, found {value} at row {row}, column {col}")]
    NonBinaryMediator { row: usize, col: usize, value: f64 },

    #[error("non-finite value in {field} at row {row}")]
    NonFiniteValue { field: &'static str, row: usize },

    #[error("dataset contains a single treatment arm")]
    SingleArm,

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("classifier target contains a single class")]
    SingleClass,

    #[error("cannot split {rows} rows into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },

    #[error("no rows with treatment = {arm}")]
    EmptyArm { arm: u8 },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("{estimator} does not support {kind} mediators")]
    UnsupportedMediator {
        estimator: EstimatorId,
        kind: &'static str,
    },

    #[error("unknown simulation setting {0}")]
    UnknownSetting(u32),

    #[error("all {0} bootstrap replicates failed")]
    AllReplicatesFailed(usize),

    #[error("cannot aggregate an empty group")]
    EmptyGroup,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("no rows left after dropping incomplete records")]
    EmptyAfterFiltering,

    #[error("could not parse {column:?} at line {line}: {value:?}")]
    Parse {
        column: String,
        line: usize,
        value: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Degeneracies that come from the data at hand rather than from a bug
    /// or a bad configuration. Bootstrap replicates failing this way are
    /// dropped and counted.
    pub fn is_data_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::SingleArm
                | Error::EmptyArm { .. }
                | Error::SingleClass
                | Error::DegenerateWeights(_)
                | Error::DegenerateDesign(_)
        )
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::UnknownSetting(_)
            | Error::UnsupportedMediator { .. }
            | Error::Json(_) => 1,
            _ => 2,
        }
    }
}
