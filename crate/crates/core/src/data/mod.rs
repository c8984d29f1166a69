//! Wide-format longitudinal data: validation, design matrices, treatment plans
//! and CSV input/output.

mod csv_io;
mod dataset;
mod design;
mod plan;

use thiserror::Error;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvSchema};
pub use dataset::{Field, LongitudinalDataset, Rule, UnitRecord, ValidationError};
pub use design::{design_matrix, restricted_cubic_spline, DesignMatrix, DesignSpec, Term};
pub use plan::{followers_mask, TreatmentPlan};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("missing column '{name}' (time {time})")]
    MissingColumn { name: String, time: usize },
    #[error("invalid design: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
