//! Central error type for the whole crate.
//!
//! Every fallible public API returns [`PanError`]. The CLI maps variants onto
//! process exit codes (config -> 2, data -> 3, divergence -> 4), so new
//! variants should pick the bucket they belong to via [`PanError::exit_code`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanError {
    /// Operand shapes do not line up (wrong rank, mismatched dims, ...).
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// Spatial geometry is invalid (odd extent before a 2x downscale, kernel
    /// larger than the padded input, resolution not a power of two, ...).
    #[error("geometry error in {op}: {detail}")]
    Geometry { op: &'static str, detail: String },

    /// Input outside an op's mathematical domain (e.g. log of non-positive).
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// An op produced a NaN or infinity. Raised immediately, naming the op.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// Gradient-tape misuse (backward without an active tape, root not on the
    /// tape, non-scalar root, ...).
    #[error("tape error: {0}")]
    Tape(String),

    /// Rank violation (e.g. backward root must be rank 0).
    #[error("rank error: {0}")]
    Rank(String),

    /// Bad configuration: unknown key, unparsable value, inconsistent combo.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset / file-format problems: missing folder, undecodable image,
    /// corrupt or version-mismatched checkpoint, malformed feature file.
    #[error("data error: {0}")]
    Data(String),

    /// Training diverged (non-finite loss or gradient). Carries the parameter
    /// or loss name and, when available, the last good checkpoint path.
    #[error("divergence: {what}{}", last_checkpoint.as_ref().map(|p| format!(" (last checkpoint: {p})")).unwrap_or_default())]
    Divergence {
        what: String,
        last_checkpoint: Option<String>,
    },

    /// Mixing artifacts from different provenance (e.g. FID between feature
    /// sets produced by different embedders).
    #[error("provenance error: {0}")]
    Provenance(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PanError {
    /// Process exit code bucket for the CLI: 0 success, 2 config, 3 data,
    /// 4 numerical divergence. Everything else also maps to 3 (data-ish).
    pub fn exit_code(&self) -> i32 {
        match self {
            PanError::Config(_) => 2,
            PanError::Divergence { .. } | PanError::NonFinite { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, PanError>;
