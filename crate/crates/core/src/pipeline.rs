//! The end-to-end flow shared by the CLI and the MCP server, and the single
//! JSON report both of them emit.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_references_at, LintFinding, OriginFormat, Rejected};
use crate::matcher::{evidence_outcomes, verify_batch, EntryVerdict, MatcherConfig};
use crate::policy::{evaluate_policy, summarize_batch, BatchSummary, PolicyDecision, PolicyPreset, SafetyInputs};
use crate::rewrite::{
    apply_rewrite, compute_key_mapping, plan_rewrite, worklist_of, ApplyResult, KeyMapping, PlanOptions,
    RenderFormat, RewriteMode, RewritePlan, WorklistItem, WriteMode,
};
use crate::scanner::{scan_workspace, select_primary_artifact, ScanReport, DEFAULT_MAX_DEPTH};
use crate::sources::{summarize_health, Connectors, SourceConfig, SourceHealth, SourceName, TransportMode};

pub const TOOL_NAME: &str = "citecheck";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub path: String,
    pub mode: RewriteMode,
    pub write: WriteMode,
    pub format: RenderFormat,
    pub preset: PolicyPreset,
    /// Overrides the enabled set from the environment.
    pub sources: Option<BTreeSet<SourceName>>,
    pub transport: Option<TransportMode>,
    pub fixtures_dir: Option<PathBuf>,
    pub rename_keys: bool,
    pub max_depth: usize,
}

impl RunOptions {
    pub fn new(path: impl Into<String>) -> Self {
        RunOptions {
            path: path.into(),
            mode: RewriteMode::Review,
            write: WriteMode::Preview,
            format: RenderFormat::Json,
            preset: PolicyPreset::builtin(crate::policy::PresetName::Default),
            sources: None,
            transport: None,
            fixtures_dir: None,
            rename_keys: false,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    /// Environment configuration with this run's overrides applied.
    pub fn source_config(&self) -> Result<SourceConfig> {
        let mut cfg = SourceConfig::from_env()?;
        if let Some(s) = &self.sources {
            cfg.enabled = s.clone();
        }
        if let Some(t) = self.transport {
            cfg.transport = t;
        }
        if let Some(d) = &self.fixtures_dir {
            cfg.fixtures_dir = Some(d.clone());
        }
        Ok(cfg)
    }

    pub fn connectors(&self) -> Result<Connectors> {
        Connectors::from_config(self.source_config()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub path: String,
    pub mode: RewriteMode,
    pub write: WriteMode,
    pub format: RenderFormat,
    pub preset: PolicyPreset,
    pub sources: Vec<SourceName>,
    pub transport: TransportMode,
    pub rename_keys: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub artifact: String,
    pub format: OriginFormat,
    pub section_span: Option<(usize, usize)>,
    pub bib_resources: Vec<String>,
    pub entry_count: usize,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredId {
    pub ordinal: usize,
    pub field: String,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementStatus {
    NotRequested,
    Blocked,
    Planned,
    NoChanges,
    Applied,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorPayload {
    fn from(e: &Error) -> Self {
        ErrorPayload {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ReportConfig,
    pub scan: ScanReport,
    pub extraction: ExtractionSummary,
    pub lint: Vec<LintFinding>,
    pub verdicts: Vec<EntryVerdict>,
    pub worklist: Vec<WorklistItem>,
    pub health: Vec<SourceHealth>,
    pub summary: BatchSummary,
    pub decision: PolicyDecision,
    pub key_mapping: KeyMapping,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<RewritePlan>,
    pub recovered_identifiers: Vec<RecoveredId>,
    pub replacement_status: ReplacementStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub apply: Option<ApplyResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<ErrorPayload>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Policy exit code, raised when a requested write could not happen.
    pub fn exit_code(&self) -> i32 {
        let base = match self.command.as_str() {
            "analyze" | "repair" => self.decision.exit_code,
            _ => 0,
        };
        match &self.error {
            Some(e) if e.code == "blocked_by_policy" => base.max(1),
            Some(_) => 2,
            None => base,
        }
    }

    /// The report, or one rendering of the corrected bibliography.
    pub fn output(&self) -> String {
        match (self.config.format, &self.plan) {
            (RenderFormat::Json, _) | (_, None) => self.to_json(),
            (f, Some(plan)) => plan.rendered.get(&f).cloned().unwrap_or_default(),
        }
    }
}

/// Resolve the directory that paths are relative to, plus the artifact path.
fn locate(path: &Path, scan: &ScanReport) -> Result<(PathBuf, String)> {
    let artifact = select_primary_artifact(scan)?;
    let root = if path.is_file() {
        match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    } else {
        path.to_path_buf()
    };
    Ok((root, artifact))
}

pub fn scan(opts: &RunOptions) -> Result<ScanReport> {
    scan_workspace(Path::new(&opts.path), opts.max_depth)
}

fn run(command: &str, opts: &RunOptions, connectors: &Connectors, plan: bool, apply: bool) -> Result<Report> {
    let path = Path::new(&opts.path);
    let scan = scan_workspace(path, opts.max_depth)?;
    let (root, artifact) = locate(path, &scan)?;
    let extraction = extract_references_at(&root, &artifact)?;

    let verdicts = verify_batch(&extraction.entries, connectors, &MatcherConfig::default());
    let enabled: BTreeSet<SourceName> = connectors.enabled_sources().into_iter().collect();
    let health = summarize_health(evidence_outcomes(&verdicts).iter(), &enabled);
    let key_mapping = compute_key_mapping(&root, &extraction.entries, opts.rename_keys);
    let summary = summarize_batch(
        &verdicts,
        SafetyInputs {
            lint: &extraction.lint,
            unsafe_key_rewrites: if opts.rename_keys { key_mapping.unsafe_count() } else { 0 },
        },
    );
    let decision = evaluate_policy(&summary, &opts.preset);

    let mut report = Report {
        tool: TOOL_NAME.into(),
        version: VERSION.into(),
        command: command.into(),
        config: ReportConfig {
            path: opts.path.replace('\\', "/"),
            mode: opts.mode,
            write: opts.write,
            format: opts.format,
            preset: opts.preset.clone(),
            sources: enabled.iter().copied().collect(),
            transport: connectors.config.transport,
            rename_keys: opts.rename_keys,
        },
        extraction: ExtractionSummary {
            artifact: extraction.artifact.clone(),
            format: extraction.format,
            section_span: extraction.section_span,
            bib_resources: extraction.bib_resources.clone(),
            entry_count: extraction.entries.len(),
            rejected: extraction.rejected.clone(),
        },
        scan,
        lint: extraction.lint.clone(),
        worklist: worklist_of(&verdicts),
        health,
        summary,
        decision,
        key_mapping: key_mapping.clone(),
        plan: None,
        recovered_identifiers: Vec::new(),
        replacement_status: ReplacementStatus::NotRequested,
        apply: None,
        error: None,
        verdicts,
    };
    if !plan {
        return Ok(report);
    }

    let p = plan_rewrite(&root, &extraction, &report.verdicts, opts.mode, &report.decision, &PlanOptions { key_mapping })?;
    report.recovered_identifiers = p
        .recovered_identifiers(&report.verdicts)
        .into_iter()
        .map(|(ordinal, field, value)| RecoveredId { ordinal, field, value })
        .collect();
    report.replacement_status = match (opts.mode, p.is_blocked()) {
        (RewriteMode::Review, _) => ReplacementStatus::NotRequested,
        (_, true) => ReplacementStatus::Blocked,
        _ if p.patches.is_empty() => ReplacementStatus::NoChanges,
        _ => ReplacementStatus::Planned,
    };
    if apply && opts.mode == RewriteMode::Replacement && opts.write != WriteMode::Preview {
        match apply_rewrite(&root, &p, opts.write) {
            Ok(res) => {
                if res.applied {
                    report.replacement_status = ReplacementStatus::Applied;
                }
                report.apply = Some(res);
            }
            Err(e) => {
                if !matches!(e, Error::BlockedByPolicy(_)) {
                    report.replacement_status = ReplacementStatus::Failed;
                }
                report.error = Some(ErrorPayload::from(&e));
            }
        }
    } else if apply {
        report.apply = Some(apply_rewrite(&root, &p, WriteMode::Preview)?);
    }
    report.plan = Some(p);
    Ok(report)
}

pub fn analyze(opts: &RunOptions, connectors: &Connectors) -> Result<Report> {
    run("analyze", opts, connectors, false, false)
}

pub fn plan(opts: &RunOptions, connectors: &Connectors) -> Result<Report> {
    run("plan", opts, connectors, true, false)
}

/// Scan, extract, verify, decide, plan, then apply when a write was requested.
pub fn repair(opts: &RunOptions, connectors: &Connectors) -> Result<Report> {
    run("repair", opts, connectors, true, true)
}

/// Accepts a bare plan or a report containing one.
pub fn parse_plan(json: &str) -> Result<RewritePlan> {
    let v: serde_json::Value = serde_json::from_str(json)?;
    let plan = match v.get("plan") {
        Some(p) if v.get("tool").is_some() => p.clone(),
        _ => v,
    };
    if plan.is_null() {
        return Err(Error::InvalidArgument("report carries no plan".into()));
    }
    Ok(serde_json::from_value(plan)?)
}

/// Apply a previously produced plan. `path` is the workspace root or the
/// artifact the plan was made for.
pub fn apply_plan(path: &Path, plan: &RewritePlan, write: WriteMode) -> Result<ApplyResult> {
    let root = if path.is_file() {
        path.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    } else if path.is_dir() {
        path.to_path_buf()
    } else {
        return Err(Error::RootNotFound(path.to_path_buf()));
    };
    apply_rewrite(&root, plan, write)
}
