//! Multi-pass retrieval, clustering and per-entry verdicts.

pub mod cluster;
pub mod score;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use cluster::{dedupe_and_cluster, MatchCluster};
pub use score::{score_match, IdentifierSignal, MatchScore, YearSignal};

use crate::error::{Error, Result};
use crate::extract::ReferenceInput;
use crate::manifestation::{group_manifestations, resolve_preference, ManifestationSet};
use crate::sources::{
    query_source, supports, CandidateRecord, Connectors, FailureClass, IdKind, Query, QueryKind, QueryOutcome,
    QueryResult, SourceName,
};
use crate::text::{content_words, squash_whitespace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    TitleMismatch,
    IdentifierConflict,
    YearDisagreement,
    AuthorMismatch,
    InsufficientEvidence,
    ManifestationConflict,
    VenueMismatch,
}

impl IssueCode {
    pub fn is_blocking(self) -> bool {
        matches!(self, Self::IdentifierConflict | Self::ManifestationConflict | Self::TitleMismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Verified,
    NeedsReview,
    Unresolved,
    NotChecked,
}

impl EntryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verified => "verified",
            Self::NeedsReview => "needs_review",
            Self::Unresolved => "unresolved",
            Self::NotChecked => "not_checked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDigest {
    pub records: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<FailureClass>,
    pub request_keys: Vec<String>,
    pub latency_ms: u64,
}

impl OutcomeDigest {
    pub fn of(o: &QueryOutcome) -> Self {
        OutcomeDigest {
            records: o.records().iter().map(|r| r.source_id.clone()).collect(),
            failure: o.failure().cloned(),
            request_keys: o.request_keys.clone(),
            latency_ms: o.latency_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub pass: u8,
    pub source: SourceName,
    pub query: Query,
    pub outcome: OutcomeDigest,
    /// Follow-up lookup of an identifier asserted by an earlier record.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub expansion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryVerdict {
    pub entry: ReferenceInput,
    pub status: EntryStatus,
    pub confidence: f64,
    pub issues: Vec<Issue>,
    pub chosen: Option<CandidateRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_score: Option<MatchScore>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manifestations: Option<ManifestationSet>,
    pub evidence: Vec<EvidenceItem>,
    /// Best cluster confidence after each pass that ran.
    pub pass_confidence: Vec<f64>,
    pub passes_used: u8,
}

impl EntryVerdict {
    pub fn has_issue(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub verified_threshold: f64,
    pub weak_threshold: f64,
    pub workers: usize,
    pub max_passes: u8,
    /// Identifiers followed per pass from `related_ids`.
    pub expansion_budget: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            verified_threshold: 0.9,
            weak_threshold: 0.6,
            workers: 4,
            max_passes: 3,
            expansion_budget: 3,
        }
    }
}

pub const RELAXED_WORDS: usize = 6;

pub fn build_pass_query(entry: &ReferenceInput, pass: u8) -> Result<Query> {
    let no_query = || Error::NoQueryPossible {
        ordinal: entry.ordinal(),
        pass,
    };
    let title = entry.title.as_deref().map(squash_whitespace).filter(|t| !t.is_empty());
    let q = match pass {
        1 => {
            if let Some(d) = &entry.doi {
                Query::new(QueryKind::DoiLookup, d.clone())
            } else if let Some(p) = &entry.pmid {
                Query::new(QueryKind::PmidLookup, p.clone())
            } else if let Some(a) = &entry.arxiv_id {
                Query::new(QueryKind::ArxivLookup, a.clone())
            } else {
                Query::new(QueryKind::TitleSearch, title.ok_or_else(no_query)?).with_year(entry.year)
            }
        }
        2 => {
            let title = title.ok_or_else(no_query)?;
            match entry.authors.first() {
                Some(a) => Query::new(QueryKind::TitleAuthorSearch, title)
                    .with_author(Some(a.family.clone()))
                    .with_year(entry.year),
                None => Query::new(QueryKind::TitleSearch, title).with_year(entry.year),
            }
        }
        3 => {
            let words = content_words(&title.ok_or_else(no_query)?);
            if words.is_empty() {
                return Err(no_query());
            }
            let text = words.into_iter().take(RELAXED_WORDS).collect::<Vec<_>>().join(" ");
            Query::new(QueryKind::RelaxedSearch, text).with_year(entry.year)
        }
        _ => return Err(no_query()),
    };
    Ok(q)
}

pub fn derive_issues(entry: &ReferenceInput, best: Option<&MatchCluster>, weak_threshold: f64) -> Vec<Issue> {
    let Some(c) = best else {
        return vec![Issue {
            code: IssueCode::InsufficientEvidence,
            detail: "no candidate records found".into(),
        }];
    };
    let s = &c.best_score;
    let cand = c.best();
    let mut out = Vec::new();
    if entry.title.is_some() && s.title_sim < 0.6 {
        out.push(Issue {
            code: IssueCode::TitleMismatch,
            detail: format!("title similarity {:.2} with {} record {}", s.title_sim, cand.source.as_str(), cand.source_id),
        });
    }
    if s.identifier_signal == IdentifierSignal::Conflict {
        let mut diffs = Vec::new();
        for (name, a, b) in [
            ("doi", &entry.doi, &cand.doi),
            ("pmid", &entry.pmid, &cand.pmid),
            ("arxiv", &entry.arxiv_id, &cand.arxiv_id),
        ] {
            if let (Some(a), Some(b)) = (a, b) {
                if a != b {
                    diffs.push(format!("{name} {a} vs {b}"));
                }
            }
        }
        out.push(Issue {
            code: IssueCode::IdentifierConflict,
            detail: diffs.join("; "),
        });
    }
    if s.year_signal == YearSignal::Mismatch {
        out.push(Issue {
            code: IssueCode::YearDisagreement,
            detail: format!("cited {} vs source {}", entry.year.unwrap_or_default(), cand.year.unwrap_or_default()),
        });
    }
    if entry.authors.len() >= 2 && s.author_sim < 0.5 {
        out.push(Issue {
            code: IssueCode::AuthorMismatch,
            detail: format!("author overlap {:.2}", s.author_sim),
        });
    }
    if s.confidence < weak_threshold {
        out.push(Issue {
            code: IssueCode::InsufficientEvidence,
            detail: format!("best confidence {:.2}", s.confidence),
        });
    }
    if entry.venue.is_some() && cand.venue.is_some() && s.venue_sim < VENUE_MISMATCH_BELOW {
        out.push(Issue {
            code: IssueCode::VenueMismatch,
            detail: format!(
                "cited `{}` vs source `{}`",
                entry.venue.as_deref().unwrap_or_default(),
                cand.venue.as_deref().unwrap_or_default()
            ),
        });
    }
    out
}

pub const VENUE_MISMATCH_BELOW: f64 = 0.25;

/// Status from confidence and issues. Blocking issues only justify review
/// when the best record plausibly is the cited work (title similarity at
/// least 0.6, or the entry has no title).
pub fn assign_status(
    confidence: f64,
    issues: &[Issue],
    score: Option<&MatchScore>,
    entry_has_title: bool,
    cfg: &MatcherConfig,
) -> EntryStatus {
    let blocking = issues.iter().any(|i| i.code.is_blocking());
    if score.is_some() && confidence >= cfg.verified_threshold && !blocking {
        return EntryStatus::Verified;
    }
    let plausible = score.is_some_and(|s| !entry_has_title || s.title_sim >= 0.6);
    let review_blocker = issues
        .iter()
        .any(|i| matches!(i.code, IssueCode::IdentifierConflict | IssueCode::ManifestationConflict));
    if review_blocker && plausible {
        return EntryStatus::NeedsReview;
    }
    if score.is_some() && confidence >= cfg.weak_threshold {
        return EntryStatus::NeedsReview;
    }
    EntryStatus::Unresolved
}

fn run_queries(jobs: Vec<(SourceName, Query)>, connectors: &Connectors) -> Vec<(SourceName, Query, QueryOutcome)> {
    let mut out: Vec<(SourceName, Query, QueryOutcome)> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(src, q)| {
                s.spawn(move || {
                    let o = query_source(src, &q, connectors).expect("only enabled sources are queried");
                    (src, q, o)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("query thread panicked")).collect()
    });
    out.sort_by(|a, b| (a.0.as_str(), &a.1.text).cmp(&(b.0.as_str(), &b.1.text)));
    out
}

fn expansion_jobs(
    new_records: &[CandidateRecord],
    known: &BTreeSet<(IdKind, String)>,
    connectors: &Connectors,
    budget: usize,
) -> Vec<(SourceName, Query)> {
    let mut wanted: BTreeSet<(IdKind, String)> = BTreeSet::new();
    for r in new_records {
        for id in &r.related_ids {
            if id.kind != IdKind::Pmid && !known.contains(&(id.kind, id.value.clone())) {
                wanted.insert((id.kind, id.value.clone()));
            }
        }
    }
    let enabled = connectors.enabled_sources();
    let mut jobs = Vec::new();
    for (kind, value) in wanted.into_iter().take(budget) {
        let qk = match kind {
            IdKind::Doi => QueryKind::DoiLookup,
            IdKind::Arxiv => QueryKind::ArxivLookup,
            IdKind::Pmid => QueryKind::PmidLookup,
        };
        let preferred = match kind {
            IdKind::Arxiv => SourceName::Arxiv,
            _ => SourceName::Crossref,
        };
        let src = if enabled.contains(&preferred) {
            Some(preferred)
        } else {
            enabled.iter().copied().find(|s| supports(*s, qk))
        };
        if let Some(src) = src {
            jobs.push((src, Query::new(qk, value)));
        }
    }
    jobs
}

fn known_ids(records: &[CandidateRecord], queried: &BTreeSet<(IdKind, String)>) -> BTreeSet<(IdKind, String)> {
    let mut k = queried.clone();
    for r in records {
        for id in r.own_ids() {
            k.insert((id.kind, id.value));
        }
    }
    k
}

pub fn verify_entry(entry: &ReferenceInput, connectors: &Connectors, cfg: &MatcherConfig) -> EntryVerdict {
    let enabled = connectors.enabled_sources();
    let mut evidence: Vec<EvidenceItem> = Vec::new();
    let mut candidates: Vec<CandidateRecord> = Vec::new();
    let mut pass_confidence = Vec::new();
    let mut queried: BTreeSet<(IdKind, String)> = BTreeSet::new();
    let mut passes_used = 0u8;
    let mut any_answer = false;

    if !enabled.is_empty() {
        for pass in 1..=cfg.max_passes.clamp(1, 3) {
            let Ok(query) = build_pass_query(entry, pass) else { break };
            passes_used = pass;
            match query.kind {
                QueryKind::DoiLookup => queried.insert((IdKind::Doi, query.text.clone())),
                QueryKind::ArxivLookup => queried.insert((IdKind::Arxiv, query.text.clone())),
                _ => false,
            };
            let jobs: Vec<(SourceName, Query)> = enabled
                .iter()
                .filter(|s| supports(**s, query.kind))
                .map(|s| (*s, query.clone()))
                .collect();
            let mut batch = run_queries(jobs, connectors);
            let mut expansions = Vec::new();
            let mut new_records: Vec<CandidateRecord> = batch.iter().flat_map(|(_, _, o)| o.records().to_vec()).collect();
            // one hop along asserted cross-identifiers
            let known = known_ids(&candidates, &queried);
            let known = known_ids(&new_records, &known);
            let jobs = expansion_jobs(&new_records, &known, connectors, cfg.expansion_budget);
            for (_, q) in &jobs {
                let kind = if q.kind == QueryKind::ArxivLookup { IdKind::Arxiv } else { IdKind::Doi };
                queried.insert((kind, q.text.clone()));
            }
            if !jobs.is_empty() {
                expansions = run_queries(jobs, connectors);
                new_records.extend(expansions.iter().flat_map(|(_, _, o)| o.records().to_vec()));
            }
            for (is_exp, items) in [(false, &mut batch), (true, &mut expansions)] {
                for (src, q, o) in items.drain(..) {
                    if !o.is_hard_failure() {
                        any_answer = true;
                    }
                    evidence.push(EvidenceItem {
                        pass,
                        source: src,
                        query: q,
                        outcome: OutcomeDigest::of(&o),
                        expansion: is_exp,
                    });
                }
            }
            candidates.extend(new_records);
            let best = dedupe_and_cluster(&candidates, entry)
                .first()
                .map_or(0.0, |c| c.best_score.confidence);
            pass_confidence.push(best);
            if best >= cfg.weak_threshold {
                break;
            }
        }
    }

    let not_checked = enabled.is_empty() || (!evidence.is_empty() && !any_answer);
    let clusters = dedupe_and_cluster(&candidates, entry);
    let best = clusters.first();
    if not_checked || passes_used == 0 {
        let detail = if enabled.is_empty() {
            "no sources enabled".to_string()
        } else if passes_used == 0 {
            "no query could be built for this entry".to_string()
        } else {
            "every source query failed".to_string()
        };
        let status = if not_checked { EntryStatus::NotChecked } else { EntryStatus::Unresolved };
        return EntryVerdict {
            entry: entry.clone(),
            status,
            confidence: 0.0,
            issues: vec![Issue {
                code: IssueCode::InsufficientEvidence,
                detail,
            }],
            chosen: None,
            best_score: None,
            manifestations: None,
            evidence,
            pass_confidence,
            passes_used,
        };
    }

    let mut issues = derive_issues(entry, best, cfg.weak_threshold);
    let mut chosen = None;
    let mut manifestations = None;
    if let Some(c) = best {
        let set = group_manifestations(c, entry);
        let (preferred, conflict) = resolve_preference(&set);
        if let Some(i) = conflict {
            issues.push(i);
        }
        if c.best_score.confidence >= cfg.weak_threshold {
            chosen = preferred;
        }
        manifestations = Some(set);
    }
    issues.sort_by(|a, b| a.code.cmp(&b.code).then_with(|| a.detail.cmp(&b.detail)));
    issues.dedup_by(|a, b| a.code == b.code);
    let confidence = best.map_or(0.0, |c| c.best_score.confidence);
    let score = best.map(|c| c.best_score);
    let status = assign_status(confidence, &issues, score.as_ref(), entry.title.is_some(), cfg);
    EntryVerdict {
        entry: entry.clone(),
        status,
        confidence,
        issues,
        chosen,
        best_score: score,
        manifestations,
        evidence,
        pass_confidence,
        passes_used,
    }
}

/// Verify entries on a bounded worker pool; output order follows input order.
pub fn verify_batch(entries: &[ReferenceInput], connectors: &Connectors, cfg: &MatcherConfig) -> Vec<EntryVerdict> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<EntryVerdict>>> = Mutex::new(vec![None; entries.len()]);
    let workers = cfg.workers.clamp(1, 16).min(entries.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= entries.len() {
                    break;
                }
                let v = verify_entry(&entries[i], connectors, cfg);
                slots.lock().unwrap()[i] = Some(v);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| v.expect("every entry verified"))
        .collect()
}

/// Outcomes behind every evidence item, flattened, for health summaries.
pub fn evidence_failures(verdicts: &[EntryVerdict]) -> Vec<(SourceName, Option<FailureClass>)> {
    verdicts
        .iter()
        .flat_map(|v| v.evidence.iter().map(|e| (e.source, e.outcome.failure.clone())))
        .collect()
}

/// Rebuild minimal outcomes from evidence so health can be summarized from verdicts alone.
pub fn evidence_outcomes(verdicts: &[EntryVerdict]) -> Vec<QueryOutcome> {
    verdicts
        .iter()
        .flat_map(|v| {
            v.evidence.iter().map(|e| QueryOutcome {
                source: e.source,
                query: e.query.clone(),
                result: match &e.outcome.failure {
                    Some(f) => QueryResult::Failure(f.clone()),
                    None => QueryResult::Records(Vec::new()),
                },
                latency_ms: e.outcome.latency_ms,
                request_keys: e.outcome.request_keys.clone(),
            })
        })
        .collect()
}
