//! Bibliography verification and policy-gated repair.
//!
//! The flow is scan → extract → verify → resolve manifestations → policy →
//! plan → apply. [`pipeline`] composes it; the CLI and the MCP server are thin
//! wrappers over that module and emit the same report.

pub mod error;
pub mod extract;
pub mod ids;
pub mod manifestation;
pub mod matcher;
pub mod mcp;
pub mod pipeline;
pub mod policy;
pub mod rewrite;
pub mod scanner;
pub mod sources;
pub mod text;

pub use error::{Error, Result};
pub use extract::{
    extract_references, extract_references_at, lint_bibliography, Author, EntryKind, ExtractionResult, LintCode,
    LintFinding, OriginFormat, RawReference, ReferenceInput,
};
pub use manifestation::{group_manifestations, resolve_preference, ManifestationSet};
pub use matcher::{
    cluster::{dedupe_and_cluster, MatchCluster},
    score::{score_match, MatchScore},
    verify_batch, verify_entry, EntryStatus, EntryVerdict, Issue, IssueCode, MatcherConfig,
};
pub use pipeline::{Report, RunOptions, VERSION};
pub use policy::{evaluate_policy, summarize_batch, BatchSummary, PolicyDecision, PolicyPreset, PresetName};
pub use rewrite::{
    apply_rewrite, generate_citation_key, plan_rewrite, render_bibliography, ApplyResult, KeyMapping, Patch,
    PatchKind, RenderFormat, RewriteMode, RewritePlan, WriteMode,
};
pub use scanner::{scan_workspace, select_primary_artifact, ScanCandidate, ScanReport};
pub use sources::{
    query_source, CandidateRecord, Connectors, FailureClass, FailureKind, Query, QueryKind, QueryOutcome,
    SourceConfig, SourceHealth, SourceName, TransportMode,
};
