//! Source-independent bibliography checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Anomaly, EntryKind, ReferenceInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintCode {
    MissingField,
    MalformedDoi,
    DuplicateKey,
    SuspiciousYear,
    EmptyEntry,
    ControlChars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub code: LintCode,
    pub entry_ordinal: usize,
    pub message: String,
    pub severity: Severity,
}

pub fn sort_findings(findings: &mut [LintFinding]) {
    findings.sort_by(|a, b| {
        (a.entry_ordinal, a.code, &a.message).cmp(&(b.entry_ordinal, b.code, &b.message))
    });
}

pub fn lint_bibliography(entries: &[ReferenceInput]) -> Vec<LintFinding> {
    let mut out = Vec::new();
    let mut by_key: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for e in entries {
        if let Some(k) = e.raw.citation_key.as_deref() {
            by_key.entry(k).or_default().push(e.ordinal());
        }
    }
    for (key, ordinals) in &by_key {
        if ordinals.len() < 2 {
            continue;
        }
        for &ord in ordinals {
            out.push(LintFinding {
                code: LintCode::DuplicateKey,
                entry_ordinal: ord,
                message: format!("duplicate citation key `{key}` ({} entries)", ordinals.len()),
                severity: Severity::Error,
            });
        }
    }

    for e in entries {
        let ord = e.ordinal();
        let needs: &[&str] = match e.entry_kind {
            EntryKind::Journal | EntryKind::Conference => &["venue", "year"],
            EntryKind::Book | EntryKind::Preprint => &["year"],
            _ => &[],
        };
        for &field in needs {
            let missing = match field {
                "venue" => e.venue.is_none(),
                _ => e.year.is_none(),
            };
            if missing {
                out.push(LintFinding {
                    code: LintCode::MissingField,
                    entry_ordinal: ord,
                    message: format!("{} entry is missing {field}", kind_name(e.entry_kind)),
                    severity: Severity::Warning,
                });
            }
        }
        if e.title.is_none() {
            out.push(LintFinding {
                code: LintCode::MissingField,
                entry_ordinal: ord,
                message: "entry is missing title".into(),
                severity: Severity::Warning,
            });
        }
        for a in &e.anomalies {
            out.push(match a {
                Anomaly::MalformedDoi { value } => LintFinding {
                    code: LintCode::MalformedDoi,
                    entry_ordinal: ord,
                    message: format!("malformed DOI `{value}`"),
                    severity: Severity::Error,
                },
                Anomaly::SuspiciousYear { value } => LintFinding {
                    code: LintCode::SuspiciousYear,
                    entry_ordinal: ord,
                    message: format!("year `{value}` outside 1500-2099"),
                    severity: Severity::Warning,
                },
                Anomaly::ControlChars { field } => LintFinding {
                    code: LintCode::ControlChars,
                    entry_ordinal: ord,
                    message: format!("control characters in {field}"),
                    severity: Severity::Info,
                },
            });
        }
    }
    sort_findings(&mut out);
    out
}

fn kind_name(k: EntryKind) -> &'static str {
    match k {
        EntryKind::Journal => "journal",
        EntryKind::Conference => "conference",
        EntryKind::Preprint => "preprint",
        EntryKind::Book => "book",
        EntryKind::Other => "other",
        EntryKind::Unknown => "unknown",
    }
}
