//! Field-level comparison of an entry against one candidate record.

use serde::{Deserialize, Serialize};

use crate::extract::{Author, ReferenceInput};
use crate::sources::CandidateRecord;
use crate::text::{fold, title_similarity, venue_similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YearSignal {
    Exact,
    OffByOne,
    Mismatch,
    Absent,
}

impl YearSignal {
    pub fn of(a: Option<i32>, b: Option<i32>) -> Self {
        match (a, b) {
            (Some(a), Some(b)) if a == b => Self::Exact,
            (Some(a), Some(b)) if (a - b).abs() == 1 => Self::OffByOne,
            (Some(_), Some(_)) => Self::Mismatch,
            _ => Self::Absent,
        }
    }

    pub fn term(self) -> f64 {
        match self {
            Self::Exact => 1.0,
            Self::OffByOne => 0.7,
            Self::Absent => 0.5,
            Self::Mismatch => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentifierSignal {
    Exact,
    Conflict,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub title_sim: f64,
    pub author_sim: f64,
    pub year_signal: YearSignal,
    pub venue_sim: f64,
    pub identifier_signal: IdentifierSignal,
    pub confidence: f64,
}

pub const W_TITLE: f64 = 0.5;
pub const W_AUTHOR: f64 = 0.2;
pub const W_YEAR: f64 = 0.15;
pub const W_VENUE: f64 = 0.15;
/// Score used for a field that one side lacks.
pub const NEUTRAL: f64 = 0.5;

pub fn weighted(title_sim: f64, author_sim: f64, year: YearSignal, venue_sim: f64) -> f64 {
    W_TITLE * title_sim + W_AUTHOR * author_sim + W_YEAR * year.term() + W_VENUE * venue_sim
}

/// Identifier override on top of the weighted sum.
pub fn combine(weighted: f64, id: IdentifierSignal, title_sim: f64, entry_has_title: bool) -> f64 {
    let c = match id {
        IdentifierSignal::Exact if title_sim >= 0.6 || !entry_has_title => weighted.max(0.95),
        IdentifierSignal::Conflict => weighted.min(0.5),
        _ => weighted,
    };
    c.clamp(0.0, 1.0)
}

fn key(s: &str) -> String {
    fold(s).chars().filter(|c| c.is_alphanumeric()).collect()
}

fn given_compatible(a: Option<&str>, b: Option<&str>) -> bool {
    match (a.map(key), b.map(key)) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => a.chars().next() == b.chars().next(),
        _ => true,
    }
}

/// Fraction of query family names found among the candidate's authors.
pub fn author_similarity(query: &[Author], candidate: &[Author]) -> f64 {
    if query.is_empty() || candidate.is_empty() {
        return NEUTRAL;
    }
    let hits = query
        .iter()
        .filter(|q| {
            let fam = key(&q.family);
            candidate
                .iter()
                .any(|c| key(&c.family) == fam && given_compatible(q.given.as_deref(), c.given.as_deref()))
        })
        .count();
    hits as f64 / query.len() as f64
}

pub fn identifier_signal(entry: &ReferenceInput, cand: &CandidateRecord) -> IdentifierSignal {
    let pairs = [
        (entry.doi.as_deref(), cand.doi.as_deref()),
        (entry.pmid.as_deref(), cand.pmid.as_deref()),
        (entry.arxiv_id.as_deref(), cand.arxiv_id.as_deref()),
    ];
    let mut shared = false;
    for (a, b) in pairs {
        if let (Some(a), Some(b)) = (a, b) {
            if a == b {
                return IdentifierSignal::Exact;
            }
            shared = true;
        }
    }
    if shared {
        IdentifierSignal::Conflict
    } else {
        IdentifierSignal::Absent
    }
}

pub fn score_match(entry: &ReferenceInput, cand: &CandidateRecord) -> MatchScore {
    let title_sim = entry.title.as_deref().map_or(0.0, |t| title_similarity(t, &cand.title));
    let author_sim = author_similarity(&entry.authors, &cand.authors);
    let year_signal = YearSignal::of(entry.year, cand.year);
    let venue_sim = match (entry.venue.as_deref(), cand.venue.as_deref()) {
        (Some(a), Some(b)) => venue_similarity(a, b),
        _ => NEUTRAL,
    };
    let identifier_signal = identifier_signal(entry, cand);
    let w = weighted(title_sim, author_sim, year_signal, venue_sim);
    MatchScore {
        title_sim,
        author_sim,
        year_signal,
        venue_sim,
        identifier_signal,
        confidence: combine(w, identifier_signal, title_sim, entry.title.is_some()),
    }
}
