//! Journal > conference > preprint preference over identifier-linked records.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::extract::{EntryKind, ReferenceInput};
use crate::matcher::{Issue, IssueCode, MatchCluster};
use crate::sources::{CandidateRecord, RelatedId, SourceName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestationSet {
    pub work_members: Vec<CandidateRecord>,
    /// Confidence of each work member against the entry, same order.
    pub confidences: Vec<f64>,
    pub preferred: Option<CandidateRecord>,
    pub cited_kind: EntryKind,
    pub conflict: bool,
    /// Cluster members joined by title similarity only; never drive preference.
    pub unlinked: Vec<String>,
}

fn entry_ids(entry: &ReferenceInput) -> BTreeSet<RelatedId> {
    let mut ids = BTreeSet::new();
    use crate::sources::IdKind;
    if let Some(d) = &entry.doi {
        ids.insert(RelatedId { kind: IdKind::Doi, value: d.clone() });
    }
    if let Some(p) = &entry.pmid {
        ids.insert(RelatedId { kind: IdKind::Pmid, value: p.clone() });
    }
    if let Some(a) = &entry.arxiv_id {
        ids.insert(RelatedId { kind: IdKind::Arxiv, value: a.clone() });
    }
    ids
}

/// The identifier that names this record's own manifestation. Aggregating
/// sources have none.
fn primary_id(r: &CandidateRecord) -> Option<RelatedId> {
    use crate::sources::IdKind;
    let (kind, value) = match r.source {
        SourceName::Crossref => (IdKind::Doi, r.doi.clone()?),
        SourceName::Pubmed => (IdKind::Pmid, r.pmid.clone()?),
        SourceName::Arxiv => (IdKind::Arxiv, r.arxiv_id.clone()?),
        SourceName::SemanticScholar => return None,
    };
    Some(RelatedId { kind, value })
}

fn id_linked(a: &CandidateRecord, b: &CandidateRecord) -> bool {
    let ai = a.all_ids();
    b.all_ids().iter().any(|i| ai.contains(i))
}

/// Members reachable from the best-scoring one through identifier links.
pub fn group_manifestations(cluster: &MatchCluster, entry: &ReferenceInput) -> ManifestationSet {
    let n = cluster.members.len();
    let mut linked = vec![false; n];
    linked[cluster.best_member] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if linked[i] {
                continue;
            }
            if (0..n).any(|j| linked[j] && id_linked(&cluster.members[i], &cluster.members[j])) {
                linked[i] = true;
                changed = true;
            }
        }
    }
    let mut set = ManifestationSet {
        work_members: Vec::new(),
        confidences: Vec::new(),
        preferred: None,
        cited_kind: entry.entry_kind,
        conflict: false,
        unlinked: Vec::new(),
    };
    for i in 0..n {
        let m = &cluster.members[i];
        if linked[i] {
            set.work_members.push(m.clone());
            set.confidences.push(cluster.scores[i].confidence);
        } else {
            set.unlinked.push(format!("{}:{}", m.source.as_str(), m.source_id));
        }
    }
    let (preferred, conflict) = pick(&set, entry);
    set.preferred = preferred;
    set.conflict = conflict;
    set
}

fn pick(set: &ManifestationSet, entry: &ReferenceInput) -> (Option<CandidateRecord>, bool) {
    let mut best: Option<usize> = None;
    for i in 0..set.work_members.len() {
        let better = match best {
            None => true,
            Some(b) => {
                let (x, y) = (&set.work_members[i], &set.work_members[b]);
                let kx = x.manifestation_kind.preference();
                let ky = y.manifestation_kind.preference();
                kx > ky
                    || (kx == ky
                        && (set.confidences[i] > set.confidences[b]
                            || (set.confidences[i] == set.confidences[b]
                                && (x.source, &x.source_id) < (y.source, &y.source_id))))
            }
        };
        if better {
            best = Some(i);
        }
    }
    let Some(b) = best else { return (None, false) };
    let preferred = set.work_members[b].clone();
    let cited = entry_ids(entry);
    let cited_rank = set
        .work_members
        .iter()
        .filter(|m| primary_id(m).is_some_and(|p| cited.contains(&p)))
        .map(|m| m.manifestation_kind.preference())
        .max();
    let conflict = cited_rank.is_some_and(|r| r < preferred.manifestation_kind.preference());
    (Some(preferred), conflict)
}

/// Preferred member plus a `manifestation_conflict` issue when the entry
/// cites a lower-preference manifestation of a work that has a better one.
pub fn resolve_preference(set: &ManifestationSet) -> (Option<CandidateRecord>, Option<Issue>) {
    let issue = set.conflict.then(|| {
        let p = set.preferred.as_ref().expect("conflict implies a preferred member");
        Issue {
            code: IssueCode::ManifestationConflict,
            detail: format!(
                "entry cites a lower-preference manifestation; preferred {} record {} ({:?})",
                p.source.as_str(),
                p.source_id,
                p.manifestation_kind
            )
            .to_lowercase(),
        }
    });
    (set.preferred.clone(), issue)
}
