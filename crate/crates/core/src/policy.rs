//! Batch summaries, preset evaluation and the replacement gate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{LintCode, LintFinding};
use crate::matcher::{EntryStatus, EntryVerdict, IssueCode};
use crate::sources::FailureKind;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatusRatios {
    pub verified: f64,
    pub needs_review: f64,
    pub unresolved: f64,
    pub not_checked: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub verified: u32,
    pub needs_review: u32,
    pub unresolved: u32,
    pub not_checked: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: u32,
    pub counts: StatusCounts,
    pub ratios: StatusRatios,
    pub failures_by_class: BTreeMap<FailureKind, u32>,
    pub duplicate_key_count: u32,
    pub manifestation_conflict_count: u32,
    pub unsafe_key_rewrite_count: u32,
}

impl BatchSummary {
    pub fn from_counts(counts: StatusCounts) -> Self {
        let total = counts.verified + counts.needs_review + counts.unresolved + counts.not_checked;
        let r = |n: u32| if total == 0 { 0.0 } else { n as f64 / total as f64 };
        BatchSummary {
            total,
            counts,
            ratios: StatusRatios {
                verified: r(counts.verified),
                needs_review: r(counts.needs_review),
                unresolved: r(counts.unresolved),
                not_checked: r(counts.not_checked),
            },
            ..Default::default()
        }
    }
}

/// Local safety signals that do not come from verdicts.
#[derive(Debug, Clone, Copy, Default)]
pub struct SafetyInputs<'a> {
    pub lint: &'a [LintFinding],
    pub unsafe_key_rewrites: u32,
}

pub fn summarize_batch(verdicts: &[EntryVerdict], safety: SafetyInputs<'_>) -> BatchSummary {
    let mut counts = StatusCounts::default();
    for v in verdicts {
        match v.status {
            EntryStatus::Verified => counts.verified += 1,
            EntryStatus::NeedsReview => counts.needs_review += 1,
            EntryStatus::Unresolved => counts.unresolved += 1,
            EntryStatus::NotChecked => counts.not_checked += 1,
        }
    }
    let mut s = BatchSummary::from_counts(counts);
    for v in verdicts {
        for e in &v.evidence {
            if let Some(f) = &e.outcome.failure {
                if f.class != FailureKind::NotFound {
                    *s.failures_by_class.entry(f.class).or_insert(0) += 1;
                }
            }
        }
        if v.has_issue(IssueCode::ManifestationConflict) {
            s.manifestation_conflict_count += 1;
        }
    }
    s.duplicate_key_count = safety.lint.iter().filter(|f| f.code == LintCode::DuplicateKey).count() as u32;
    s.unsafe_key_rewrite_count = safety.unsafe_key_rewrites;
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Strict,
    Default,
    Lenient,
}

impl PresetName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strict" => Some(Self::Strict),
            "default" => Some(Self::Default),
            "lenient" => Some(Self::Lenient),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Strict => "strict",
            Self::Default => "default",
            Self::Lenient => "lenient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPreset {
    pub name: PresetName,
    pub max_unresolved_ratio: f64,
    pub max_not_checked_ratio: f64,
    pub min_verified_ratio: f64,
    pub fail_on_auth_failure: bool,
    pub allow_replacement_with_needs_review: bool,
}

impl PolicyPreset {
    pub fn builtin(name: PresetName) -> Self {
        let (u, n, v, auth, nr) = match name {
            PresetName::Strict => (0.10, 0.05, 0.80, true, false),
            PresetName::Default => (0.25, 0.15, 0.50, true, false),
            PresetName::Lenient => (0.50, 0.50, 0.00, false, true),
        };
        PolicyPreset {
            name,
            max_unresolved_ratio: u,
            max_not_checked_ratio: n,
            min_verified_ratio: v,
            fail_on_auth_failure: auth,
            allow_replacement_with_needs_review: nr,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        PresetName::parse(name)
            .map(Self::builtin)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`")))
    }

    /// Override preset values from a JSON object; absent keys keep the built-in value.
    pub fn with_overrides(mut self, json: &serde_json::Value) -> Result<Self> {
        let obj = json
            .as_object()
            .ok_or_else(|| Error::InvalidArgument("preset overrides must be a JSON object".into()))?;
        for (k, v) in obj {
            let num = || v.as_f64().ok_or_else(|| Error::InvalidArgument(format!("`{k}` must be a number")));
            let flag = || v.as_bool().ok_or_else(|| Error::InvalidArgument(format!("`{k}` must be a boolean")));
            match k.as_str() {
                "max_unresolved_ratio" => self.max_unresolved_ratio = num()?,
                "max_not_checked_ratio" => self.max_not_checked_ratio = num()?,
                "min_verified_ratio" => self.min_verified_ratio = num()?,
                "fail_on_auth_failure" => self.fail_on_auth_failure = flag()?,
                "allow_replacement_with_needs_review" => self.allow_replacement_with_needs_review = flag()?,
                "name" => {}
                other => return Err(Error::InvalidArgument(format!("unknown preset field `{other}`"))),
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    AuthenticationFailure,
    NotCheckedOperational,
    NotCheckedRatio,
    UnresolvedRatio,
    VerifiedRatio,
    DuplicateKeys,
    UnsafeKeyRewrites,
    ManifestationConflicts,
    NeedsReviewPresent,
    PolicyFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub code: ReasonCode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound: Option<f64>,
    pub detail: String,
    /// Whether this gate affects the exit code or only the replacement gate.
    pub blocks_exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub preset: PresetName,
    pub exit_code: i32,
    pub replacement_allowed: bool,
    /// Copied from the preset; lets replacement plans patch needs_review entries.
    pub allow_replacement_with_needs_review: bool,
    pub reasons: Vec<Reason>,
    pub summary: BatchSummary,
}

impl PolicyDecision {
    /// Every tripped gate, when replacement is not allowed.
    pub fn replacement_blockers(&self) -> Vec<String> {
        if self.replacement_allowed {
            return Vec::new();
        }
        self.reasons.iter().map(|r| r.detail.clone()).collect()
    }
}

fn gate(code: ReasonCode, observed: f64, bound: f64, detail: String, blocks_exit: bool) -> Reason {
    Reason {
        code,
        observed: Some(observed),
        bound: Some(bound),
        detail,
        blocks_exit,
    }
}

pub fn evaluate_policy(summary: &BatchSummary, preset: &PolicyPreset) -> PolicyDecision {
    let mut operational = Vec::new();
    let mut ratio = Vec::new();
    let mut replacement = Vec::new();
    let r = &summary.ratios;

    let auth = summary.failures_by_class.get(&FailureKind::Authentication).copied().unwrap_or(0);
    if auth > 0 && preset.fail_on_auth_failure {
        operational.push(Reason {
            code: ReasonCode::AuthenticationFailure,
            observed: Some(auth as f64),
            bound: Some(0.0),
            detail: format!("{auth} authentication failure(s) with fail_on_auth_failure set"),
            blocks_exit: true,
        });
    }
    if summary.total > 0 {
        if r.not_checked > preset.max_not_checked_ratio {
            let hard: u32 = summary.failures_by_class.values().sum();
            let transient: u32 = [FailureKind::Transport, FailureKind::RateLimit]
                .iter()
                .map(|k| summary.failures_by_class.get(k).copied().unwrap_or(0))
                .sum();
            let detail = format!(
                "not_checked ratio {:.4} exceeds {:.4}",
                r.not_checked, preset.max_not_checked_ratio
            );
            if hard > 0 && hard == transient {
                operational.push(gate(ReasonCode::NotCheckedOperational, r.not_checked, preset.max_not_checked_ratio, detail, true));
            } else {
                ratio.push(gate(ReasonCode::NotCheckedRatio, r.not_checked, preset.max_not_checked_ratio, detail, true));
            }
        }
        if r.unresolved > preset.max_unresolved_ratio {
            ratio.push(gate(
                ReasonCode::UnresolvedRatio,
                r.unresolved,
                preset.max_unresolved_ratio,
                format!("unresolved ratio {:.4} exceeds {:.4}", r.unresolved, preset.max_unresolved_ratio),
                true,
            ));
        }
        if r.verified < preset.min_verified_ratio {
            ratio.push(gate(
                ReasonCode::VerifiedRatio,
                r.verified,
                preset.min_verified_ratio,
                format!("verified ratio {:.4} below {:.4}", r.verified, preset.min_verified_ratio),
                true,
            ));
        }
    }
    for (code, n, what) in [
        (ReasonCode::DuplicateKeys, summary.duplicate_key_count, "duplicate citation key finding(s)"),
        (ReasonCode::UnsafeKeyRewrites, summary.unsafe_key_rewrite_count, "unsafe citation-key rewrite(s)"),
        (ReasonCode::ManifestationConflicts, summary.manifestation_conflict_count, "manifestation conflict(s)"),
    ] {
        if n > 0 {
            replacement.push(gate(code, n as f64, 0.0, format!("{n} {what}"), false));
        }
    }
    if r.needs_review > 0.0 && !preset.allow_replacement_with_needs_review {
        replacement.push(gate(
            ReasonCode::NeedsReviewPresent,
            r.needs_review,
            0.0,
            format!("needs_review ratio {:.4} and the preset does not allow replacement alongside review items", r.needs_review),
            false,
        ));
    }

    let exit_code = if !operational.is_empty() {
        2
    } else if !ratio.is_empty() {
        1
    } else {
        0
    };
    let replacement_allowed = exit_code == 0 && replacement.is_empty();
    let mut reasons = operational;
    reasons.extend(ratio);
    reasons.extend(replacement);
    PolicyDecision {
        preset: preset.name,
        exit_code,
        replacement_allowed,
        allow_replacement_with_needs_review: preset.allow_replacement_with_needs_review,
        reasons,
        summary: summary.clone(),
    }
}
