use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("path not found: {0}")]
    RootNotFound(PathBuf),

    #[error("permission denied: {0}")]
    PermissionDenied(PathBuf),

    #[error("no candidate artifact found")]
    NoCandidates,

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt archive: {0}")]
    CorruptArchive(String),

    #[error("archive has no word/document.xml part")]
    MissingDocumentPart,

    #[error("no fixture recorded for request `{request_key}`")]
    FixtureMissing { request_key: String },

    #[error("source {0} is not enabled")]
    DisabledSource(String),

    #[error("no query can be built for entry {ordinal} at pass {pass}")]
    NoQueryPossible { ordinal: usize, pass: u8 },

    #[error("verdicts ({verdicts}) do not align with extracted entries ({entries})")]
    AlignmentMismatch { entries: usize, verdicts: usize },

    #[error("{0} changed since the plan was made")]
    StaleFile(PathBuf),

    #[error("write denied for {path}: {reason}")]
    WriteDenied { path: PathBuf, reason: String },

    #[error("replacement blocked by policy: {}", .0.join(", "))]
    BlockedByPolicy(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine code used in structured error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::RootNotFound(_) => "root_not_found",
            Error::PermissionDenied(_) => "permission_denied",
            Error::NoCandidates => "no_candidates",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::UnreadableFile { .. } => "unreadable_file",
            Error::CorruptArchive(_) => "corrupt_archive",
            Error::MissingDocumentPart => "missing_document_part",
            Error::FixtureMissing { .. } => "fixture_missing",
            Error::DisabledSource(_) => "disabled_source",
            Error::NoQueryPossible { .. } => "no_query_possible",
            Error::AlignmentMismatch { .. } => "alignment_mismatch",
            Error::StaleFile(_) => "stale_file",
            Error::WriteDenied { .. } => "write_denied",
            Error::BlockedByPolicy(_) => "blocked_by_policy",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
