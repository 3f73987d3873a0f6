//! Deduplication and union-find clustering of candidate records.

use serde::{Deserialize, Serialize};

use super::score::{score_match, MatchScore};
use crate::extract::ReferenceInput;
use crate::sources::{sort_candidates, CandidateRecord};
use crate::text::{fold, title_similarity};

pub const CLUSTER_TITLE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCluster {
    pub cluster_key: String,
    pub members: Vec<CandidateRecord>,
    pub scores: Vec<MatchScore>,
    pub best_member: usize,
    pub best_score: MatchScore,
}

impl MatchCluster {
    pub fn best(&self) -> &CandidateRecord {
        &self.members[self.best_member]
    }
}

fn years_compatible(a: Option<i32>, b: Option<i32>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1,
        _ => true,
    }
}

/// Shared identifier (own or asserted) or near-identical title with compatible years.
pub fn joins(a: &CandidateRecord, b: &CandidateRecord) -> bool {
    let ai = a.all_ids();
    if b.all_ids().iter().any(|id| ai.contains(id)) {
        return true;
    }
    title_similarity(&a.title, &b.title) >= CLUSTER_TITLE_THRESHOLD && years_compatible(a.year, b.year)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Collapse exact duplicates, then group by the transitive closure of [`joins`].
pub fn partition(candidates: &[CandidateRecord]) -> Vec<Vec<CandidateRecord>> {
    let mut recs = candidates.to_vec();
    sort_candidates(&mut recs);
    recs.dedup_by(|a, b| a.sort_key() == b.sort_key());
    let n = recs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if joins(&recs[i], &recs[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<CandidateRecord>> = Vec::new();
    let mut root_index: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_index[r] {
            Some(g) => groups[g].push(recs[i].clone()),
            None => {
                root_index[r] = Some(groups.len());
                groups.push(vec![recs[i].clone()]);
            }
        }
    }
    groups
}

pub fn cluster_key(members: &[CandidateRecord]) -> String {
    if let Some(doi) = members.iter().filter_map(|m| m.doi.as_deref()).min() {
        return format!("doi:{doi}");
    }
    let m = &members[0];
    let title: String = fold(&m.title)
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let title = crate::text::squash_whitespace(&title);
    match m.year {
        Some(y) => format!("title:{title}|{y}"),
        None => format!("title:{title}|"),
    }
}

pub fn dedupe_and_cluster(candidates: &[CandidateRecord], entry: &ReferenceInput) -> Vec<MatchCluster> {
    let mut clusters: Vec<MatchCluster> = partition(candidates)
        .into_iter()
        .map(|members| {
            let scores: Vec<MatchScore> = members.iter().map(|m| score_match(entry, m)).collect();
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if s.confidence > scores[best].confidence {
                    best = i;
                }
            }
            MatchCluster {
                cluster_key: cluster_key(&members),
                best_score: scores[best],
                best_member: best,
                scores,
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        b.best_score
            .confidence
            .total_cmp(&a.best_score.confidence)
            .then_with(|| a.cluster_key.cmp(&b.cluster_key))
    });
    clusters
}
