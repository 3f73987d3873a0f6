//! Rewrite planning: patches against the original bytes, rendered outputs and
//! replacement-safety counts. Application lives in [`apply`].

pub mod apply;
pub mod keys;
pub mod render;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extract::bibtex::{parse_bibtex, BibEntry};
use crate::extract::{ExtractionResult, OriginFormat, ReferenceInput};
use crate::matcher::{EntryStatus, EntryVerdict, IssueCode};
use crate::policy::PolicyDecision;
use crate::sources::CandidateRecord;
use crate::text::{ascii_fold, tokens};

pub use apply::{apply_rewrite, sidecar_path, ApplyResult, WriteMode};
pub use keys::{assign_keys, compute_key_mapping, generate_citation_key, KeyMapping, KeyUsage};
pub use render::{render_bibliography, RenderFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteMode {
    Review,
    Replacement,
}

impl RewriteMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "review" => Some(Self::Review),
            "replacement" => Some(Self::Replacement),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Review => "review",
            Self::Replacement => "replacement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    EntryReplace,
    FieldUpdate,
    KeyRename,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub target_path: String,
    pub span: (usize, usize),
    pub replacement_text: String,
    pub entry_ordinal: usize,
    pub kind: PatchKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Safety {
    pub duplicate_keys: u32,
    pub unsafe_key_rewrites: u32,
    pub manifestation_conflicts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorklistItem {
    pub ordinal: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub citation_key: Option<String>,
    pub status: EntryStatus,
    pub issues: Vec<IssueCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewritePlan {
    pub mode: RewriteMode,
    pub artifact: String,
    pub patches: Vec<Patch>,
    pub key_mapping: KeyMapping,
    pub rendered: BTreeMap<RenderFormat, String>,
    pub safety: Safety,
    /// sha256 of each file the plan depends on, keyed by path relative to the root.
    pub digests: BTreeMap<String, String>,
    /// Non-empty exactly when replacement was requested and refused.
    pub blocked_reasons: Vec<String>,
    pub worklist: Vec<WorklistItem>,
}

impl RewritePlan {
    pub fn is_blocked(&self) -> bool {
        !self.blocked_reasons.is_empty()
    }

    /// Identifiers this plan adds or changes, as (ordinal, field, value).
    pub fn recovered_identifiers(&self, verdicts: &[EntryVerdict]) -> Vec<(usize, String, String)> {
        let mut out = Vec::new();
        for v in verdicts {
            if !self.patches.iter().any(|p| p.entry_ordinal == v.entry.ordinal()) {
                continue;
            }
            let Some(c) = &v.chosen else { continue };
            if c.doi.is_some() && c.doi != v.entry.doi {
                out.push((v.entry.ordinal(), "doi".into(), c.doi.clone().unwrap()));
            }
            if c.pmid.is_some() && v.entry.pmid.is_none() {
                out.push((v.entry.ordinal(), "pmid".into(), c.pmid.clone().unwrap()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    /// Precomputed mapping; renames are applied only when it is collision-free.
    pub key_mapping: KeyMapping,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn family_keys(authors: &[crate::extract::Author]) -> Vec<String> {
    authors
        .iter()
        .map(|a| ascii_fold(&a.family).chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect())
        .collect()
}

/// Fields of `entry` that differ from the chosen record, with the new values.
/// Titles and author lists compare on folded tokens so casing alone never churns.
pub fn field_changes(entry: &ReferenceInput, chosen: &CandidateRecord) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if !chosen.authors.is_empty() && family_keys(&entry.authors) != family_keys(&chosen.authors) {
        out.push(("author", render::bib_authors(&chosen.authors)));
    }
    if !chosen.title.trim().is_empty()
        && entry.title.as_deref().map(tokens) != Some(tokens(&chosen.title))
    {
        out.push(("title", chosen.title.clone()));
    }
    if let (None, Some(v)) = (&entry.venue, &chosen.venue) {
        out.push(("venue", v.clone()));
    }
    if let Some(y) = chosen.year {
        if entry.year != Some(y) {
            out.push(("year", y.to_string()));
        }
    }
    if let Some(v) = &chosen.volume {
        out.push(("volume", v.clone()));
    }
    if let Some(p) = &chosen.pages {
        out.push(("pages", p.clone()));
    }
    if let Some(d) = &chosen.doi {
        if entry.doi.as_ref() != Some(d) {
            out.push(("doi", d.clone()));
        }
    }
    if let (None, Some(p)) = (&entry.pmid, &chosen.pmid) {
        out.push(("pmid", p.clone()));
    }
    out
}

fn venue_field_for(entry_type: &str) -> Option<&'static str> {
    match entry_type {
        "article" => Some("journal"),
        "inproceedings" | "conference" | "incollection" => Some("booktitle"),
        _ => None,
    }
}

fn indent_of(text: &str, entry: &BibEntry) -> String {
    let Some(f) = entry.fields.last() else { return "  ".into() };
    let line_start = text[..f.span.0].rfind('\n').map_or(0, |i| i + 1);
    let lead = &text[line_start..f.span.0];
    if lead.chars().all(|c| c == ' ' || c == '\t') && !lead.is_empty() {
        lead.to_string()
    } else {
        "  ".into()
    }
}

/// Field-update patches for one BibTeX entry. `volume` and `pages` are only
/// added when absent; existing values are left alone.
fn bib_patches(file: &str, text: &str, entry: &BibEntry, ordinal: usize, changes: &[(&'static str, String)]) -> Vec<Patch> {
    let mut patches = Vec::new();
    let mut inserts = Vec::new();
    for (name, value) in changes {
        let name = match *name {
            "venue" => match venue_field_for(&entry.entry_type) {
                Some(n) => n,
                None => continue,
            },
            n => n,
        };
        let rendered = render::bib_value(value);
        match entry.field(name) {
            Some(_) if matches!(name, "volume" | "pages") => {}
            Some(f) => patches.push(Patch {
                target_path: file.to_string(),
                span: f.value_span,
                replacement_text: rendered,
                entry_ordinal: ordinal,
                kind: PatchKind::FieldUpdate,
            }),
            None => inserts.push(format!("{name} = {rendered}")),
        }
    }
    if !inserts.is_empty() {
        let indent = indent_of(text, entry);
        let at = entry.fields.last().map_or(entry.key_span.1, |f| f.span.1);
        let body: String = inserts.iter().map(|f| format!(",\n{indent}{f}")).collect();
        patches.push(Patch {
            target_path: file.to_string(),
            span: (at, at),
            replacement_text: body,
            entry_ordinal: ordinal,
            kind: PatchKind::FieldUpdate,
        });
    }
    patches
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:\[\d+\]|\(\d+\)|\d+[.)]|[-*+]|\\bibitem\s*(?:\[[^\]]*\])?\s*\{[^}]*\})?\s*").unwrap()
});

/// Entry-replace patch for a free-text reference; the list marker and
/// trailing whitespace of the original are kept.
fn text_patch(entry: &ReferenceInput, chosen: &CandidateRecord) -> Patch {
    let original = &entry.raw.original_text;
    let prefix = MARKER.find(original).map_or("", |m| m.as_str());
    let body_end = original.trim_end().len();
    let trailing = &original[body_end.max(prefix.len())..];
    let item = render::corrected_item(entry, Some(chosen), String::new());
    Patch {
        target_path: entry.raw.source_file.clone(),
        span: entry.raw.source_span,
        replacement_text: format!("{prefix}{}{trailing}", render::text_line(&item)),
        entry_ordinal: entry.ordinal(),
        kind: PatchKind::EntryReplace,
    }
}

/// Entries a curator should look at: anything not verified or carrying an issue.
pub fn worklist_of(verdicts: &[EntryVerdict]) -> Vec<WorklistItem> {
    verdicts
        .iter()
        .filter(|v| v.status != EntryStatus::Verified || !v.issues.is_empty())
        .map(|v| WorklistItem {
            ordinal: v.entry.ordinal(),
            citation_key: v.entry.raw.citation_key.clone(),
            status: v.status,
            issues: v.issues.iter().map(|i| i.code).collect(),
        })
        .collect()
}

fn patchable<'a>(v: &'a EntryVerdict, policy: &PolicyDecision) -> Option<&'a CandidateRecord> {
    let status_ok = match v.status {
        EntryStatus::Verified => true,
        EntryStatus::NeedsReview => policy.allow_replacement_with_needs_review,
        _ => false,
    };
    let blocked = v.issues.iter().any(|i| i.code.is_blocking());
    if !status_ok || blocked || v.entry.raw.origin_format == OriginFormat::Docx {
        return None;
    }
    v.chosen.as_ref()
}

pub fn plan_rewrite(
    root: &Path,
    extraction: &ExtractionResult,
    verdicts: &[EntryVerdict],
    mode: RewriteMode,
    policy: &PolicyDecision,
    options: &PlanOptions,
) -> Result<RewritePlan> {
    if verdicts.len() != extraction.entries.len()
        || verdicts.iter().zip(&extraction.entries).any(|(v, e)| v.entry.ordinal() != e.ordinal())
    {
        return Err(Error::AlignmentMismatch {
            entries: extraction.entries.len(),
            verdicts: verdicts.len(),
        });
    }

    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut wanted: Vec<&str> = vec![extraction.artifact.as_str()];
    wanted.extend(extraction.bib_resources.iter().map(String::as_str));
    wanted.extend(extraction.entries.iter().map(|e| e.raw.source_file.as_str()));
    for f in wanted {
        if !files.contains_key(f) {
            let path = root.join(f);
            let bytes = std::fs::read(&path).map_err(|source| Error::UnreadableFile { path, source })?;
            files.insert(f.to_string(), bytes);
        }
    }
    let digests = files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect();

    let s = &policy.summary;
    let safety = Safety {
        duplicate_keys: s.duplicate_key_count,
        unsafe_key_rewrites: s.unsafe_key_rewrite_count,
        manifestation_conflicts: s.manifestation_conflict_count,
    };

    let worklist = worklist_of(verdicts);

    let render_input: Vec<(ReferenceInput, Option<CandidateRecord>)> = verdicts
        .iter()
        .map(|v| {
            let chosen = match v.status {
                EntryStatus::Verified if !v.issues.iter().any(|i| i.code.is_blocking()) => v.chosen.clone(),
                _ => None,
            };
            (v.entry.clone(), chosen)
        })
        .collect();
    let rendered = RenderFormat::ALL
        .iter()
        .map(|f| (*f, render_bibliography(&render_input, *f)))
        .collect();

    let mut plan = RewritePlan {
        mode,
        artifact: extraction.artifact.clone(),
        patches: Vec::new(),
        key_mapping: options.key_mapping.clone(),
        rendered,
        safety,
        digests,
        blocked_reasons: Vec::new(),
        worklist,
    };
    if mode == RewriteMode::Review {
        return Ok(plan);
    }
    if !policy.replacement_allowed {
        plan.blocked_reasons = policy.replacement_blockers();
        if plan.blocked_reasons.is_empty() {
            plan.blocked_reasons.push("replacement not allowed by policy".into());
        }
        return Ok(plan);
    }

    let mut parsed: BTreeMap<String, Vec<BibEntry>> = BTreeMap::new();
    let mut patches = Vec::new();
    let renames = if options.key_mapping.is_unsafe() {
        BTreeMap::new()
    } else {
        options.key_mapping.renames.clone()
    };
    for v in verdicts {
        let e = &v.entry;
        let file = &e.raw.source_file;
        let changes = patchable(v, policy).map(|c| (c, field_changes(e, c)));
        match e.raw.origin_format {
            OriginFormat::Bibtex => {
                let text = String::from_utf8_lossy(&files[file]).into_owned();
                let entries = parsed.entry(file.clone()).or_insert_with(|| parse_bibtex(&text).entries);
                let Some(b) = entries.iter().find(|b| b.span == e.raw.source_span) else { continue };
                if let Some((_, ch)) = &changes {
                    patches.extend(bib_patches(file, &text, b, e.ordinal(), ch));
                }
                if let Some(new) = renames.get(&b.key) {
                    patches.push(Patch {
                        target_path: file.clone(),
                        span: b.key_span,
                        replacement_text: new.clone(),
                        entry_ordinal: e.ordinal(),
                        kind: PatchKind::KeyRename,
                    });
                }
            }
            _ => {
                if let Some((c, ch)) = &changes {
                    if ch.iter().any(|(n, _)| !matches!(*n, "volume" | "pages")) {
                        patches.push(text_patch(e, c));
                    }
                }
            }
        }
    }
    patches.sort_by(|a, b| (&a.target_path, a.span).cmp(&(&b.target_path, b.span)));
    plan.patches = patches;
    Ok(plan)
}
