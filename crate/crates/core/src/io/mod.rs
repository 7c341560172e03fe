//! File formats: raw binary grids with JSON sidecars, network checkpoints,
//! streamline bundle export, and metric report serialization. All binary
//! payloads are little-endian 32-bit floats; all formats round-trip exactly
//! at that stored precision.

mod bundle;
mod checkpoint;
mod raw;
mod report;

pub use bundle::{export_streamline_bundle, load_streamline_bundle, BundleFormat};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use raw::{
    load_raw_field, load_raw_scalar, save_raw_field, save_raw_scalar, RawSidecar,
};
pub use report::{report_rows_to_json, report_rows_to_text};

use crate::field::FieldError;
use crate::neural::NeuralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("payload size mismatch in {path}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: String,
        expected: u64,
        actual: u64,
    },
    #[error("bad magic {found:?}, not a checkpoint file")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint format version {found} (supported: {supported})")]
    VersionUnsupported { found: u32, supported: u32 },
    #[error("corrupt checkpoint payload: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}
