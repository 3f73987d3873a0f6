//! Citation-key generation and key-mapping risk.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::extract::ReferenceInput;
use crate::scanner::{is_skipped_dir, DEFAULT_MAX_DEPTH};
use crate::text::{ascii_fold, content_words};

/// Base key: first-author family + year + first content word of the title.
pub fn generate_citation_key(entry: &ReferenceInput) -> String {
    let family = entry
        .authors
        .first()
        .map(|a| alnum(&a.family))
        .filter(|f| !f.is_empty())
        .unwrap_or_else(|| "anon".into());
    let year = entry.year.map_or_else(|| "nd".to_string(), |y| y.to_string());
    let word = entry
        .title
        .as_deref()
        .and_then(|t| content_words(t).into_iter().map(|w| alnum(&w)).find(|w| !w.is_empty()))
        .unwrap_or_default();
    format!("{family}{year}{word}")
}

fn alnum(s: &str) -> String {
    ascii_fold(s).chars().filter(|c| c.is_ascii_alphanumeric()).flat_map(|c| c.to_lowercase()).collect()
}

fn suffix(i: usize) -> String {
    // a..z, then aa, ab, ...
    let mut n = i;
    let mut s = Vec::new();
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.iter().rev().collect()
}

/// Generated keys for a batch; colliding bases get a, b, c … in input order,
/// skipping any suffix that would land on another entry's key.
pub fn assign_keys(entries: &[&ReferenceInput]) -> Vec<String> {
    let bases: Vec<String> = entries.iter().map(|e| generate_citation_key(e)).collect();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for b in &bases {
        *totals.entry(b).or_insert(0) += 1;
    }
    let reserved: BTreeSet<&str> = totals.iter().filter(|(_, n)| **n == 1).map(|(b, _)| *b).collect();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut next: BTreeMap<&str, usize> = BTreeMap::new();
    bases
        .iter()
        .map(|b| {
            if totals[b.as_str()] == 1 {
                return b.clone();
            }
            let n = next.entry(b).or_insert(0);
            loop {
                let k = format!("{b}{}", suffix(*n));
                *n += 1;
                if !reserved.contains(k.as_str()) && used.insert(k.clone()) {
                    return k;
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyUsage {
    pub file: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMapping {
    /// old key -> new key, renamed keys only.
    pub renames: BTreeMap<String, String>,
    pub collisions: Vec<String>,
    pub unresolved_usages: Vec<KeyUsage>,
}

impl KeyMapping {
    pub fn is_unsafe(&self) -> bool {
        !self.collisions.is_empty() || !self.unresolved_usages.is_empty()
    }

    pub fn unsafe_count(&self) -> u32 {
        (self.collisions.len() + self.unresolved_usages.iter().map(|u| u.count).sum::<usize>()) as u32
    }
}

static CITE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\\(?:[A-Za-z]*cite[A-Za-z]*|nocite)\*?\s*(?:\[[^\]]*\]\s*){0,2}\{([^}]*)\}").unwrap()
});

/// Keys cited in a LaTeX source, one item per occurrence.
pub fn cited_keys(tex: &str) -> Vec<String> {
    CITE.captures_iter(tex)
        .flat_map(|c| c[1].split(',').map(|k| k.trim().to_string()).collect::<Vec<_>>())
        .filter(|k| !k.is_empty())
        .collect()
}

/// Mapping for BibTeX entries. Empty unless `rename` is set.
pub fn compute_key_mapping(root: &Path, entries: &[ReferenceInput], rename: bool) -> KeyMapping {
    let mut mapping = KeyMapping::default();
    if !rename {
        return mapping;
    }
    let keyed: Vec<&ReferenceInput> = entries.iter().filter(|e| e.raw.citation_key.is_some()).collect();
    let generated = assign_keys(&keyed);
    let mut targets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut old_to_new: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (e, new) in keyed.iter().zip(&generated) {
        let old = e.raw.citation_key.clone().unwrap();
        targets.entry(new.clone()).or_default().insert(old.clone());
        old_to_new.entry(old).or_default().insert(new.clone());
    }
    let mut collisions: BTreeSet<String> = targets
        .iter()
        .filter(|(_, olds)| olds.len() > 1)
        .map(|(n, _)| n.clone())
        .collect();
    // a duplicated old key cannot be mapped unambiguously
    for news in old_to_new.values().filter(|n| n.len() > 1) {
        collisions.extend(news.iter().cloned());
    }
    for (old, news) in &old_to_new {
        let new = news.iter().next().unwrap();
        if new != old {
            mapping.renames.insert(old.clone(), new.clone());
        }
    }
    mapping.collisions = collisions.into_iter().collect();
    if !mapping.renames.is_empty() {
        mapping.unresolved_usages = usages(root, &mapping.renames);
    }
    mapping
}

fn usages(root: &Path, renames: &BTreeMap<String, String>) -> Vec<KeyUsage> {
    let mut out = Vec::new();
    let walker = WalkDir::new(root)
        .max_depth(DEFAULT_MAX_DEPTH)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|d| d.depth() == 0 || !(d.file_type().is_dir() && is_skipped_dir(&d.file_name().to_string_lossy())));
    for d in walker.flatten() {
        let p = d.path();
        if !d.file_type().is_file() || p.extension().is_none_or(|x| !x.eq_ignore_ascii_case("tex")) {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(p) else { continue };
        let count = cited_keys(&text).iter().filter(|k| renames.contains_key(*k)).count();
        if count > 0 {
            let rel = p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/");
            out.push(KeyUsage { file: rel, count });
        }
    }
    out
}
