//! Synthetic inputs shared by the benchmarks.

use citecheck::extract::normalize::normalize_reference;
use citecheck::extract::{OriginFormat, RawFields, RawReference};
use citecheck::sources::{IdKind, ManifestationKind, RelatedId};
use citecheck::{Author, CandidateRecord, ReferenceInput, SourceName};

const WORDS: [&str; 12] = [
    "sparse", "graph", "networks", "protein", "robust", "learning", "kidney", "cohort", "ranking", "streaming",
    "inference", "models",
];

fn title(i: usize) -> String {
    (0..6).map(|k| WORDS[(i * 7 + k * 5) % WORDS.len()]).collect::<Vec<_>>().join(" ")
}

/// A BibTeX file with `n` journal entries.
pub fn bib_text(n: usize) -> String {
    let mut s = String::new();
    for i in 0..n {
        s.push_str(&format!(
            "@article{{key{i},\n  author = {{Doe, Jane and Roe, Bo{i}}},\n  title = {{{}}},\n  journal = {{Journal of Things}},\n  year = {{{}}},\n  doi = {{10.1000/x.{i}}}\n}}\n\n",
            title(i),
            1990 + i % 30
        ));
    }
    s
}

/// A plain-text references section with `n` numbered entries.
pub fn plain_text(n: usize) -> String {
    let mut s = String::from("Body text.\n\nReferences\n\n");
    for i in 0..n {
        s.push_str(&format!("[{}] J. Doe, B. Roe. {}. Journal of Things, {}.\n", i + 1, title(i), 1990 + i % 30));
    }
    s
}

pub fn entry(i: usize) -> ReferenceInput {
    let raw = RawReference {
        source_file: "refs.bib".into(),
        source_span: (0, 0),
        original_text: String::new(),
        origin_format: OriginFormat::Bibtex,
        citation_key: Some(format!("key{i}")),
        ordinal: i + 1,
    };
    let mut f = RawFields::default();
    f.entry_type = Some("article".into());
    f.values.insert("title".into(), title(i));
    f.values.insert("author".into(), "Doe, Jane and Roe, Bo".into());
    f.values.insert("journal".into(), "Journal of Things".into());
    f.values.insert("year".into(), (1990 + i % 30).to_string());
    normalize_reference(raw, &f).expect("synthetic entry normalizes")
}

/// `n` candidates for `entry(i)`: one exact, the rest near and far variants,
/// with some shared identifiers so clusters form.
pub fn candidates(i: usize, n: usize) -> Vec<CandidateRecord> {
    (0..n)
        .map(|k| {
            let source = SourceName::ALL[k % 4];
            let t = if k % 3 == 0 { title(i) } else { title(i + k) };
            CandidateRecord {
                source,
                source_id: format!("{}-{k}", source.as_str()),
                title: t,
                authors: vec![Author::new("Doe", Some("Jane")), Author::new("Roe", Some("Bo"))],
                year: Some(1990 + (i % 30) as i32 + (k % 2) as i32),
                venue: Some("Journal of Things".into()),
                doi: (k % 2 == 0).then(|| format!("10.1000/x.{}", i + k / 4)),
                pmid: None,
                arxiv_id: (source == SourceName::Arxiv).then(|| format!("2101.{:05}", k)),
                volume: None,
                pages: None,
                manifestation_kind: if source == SourceName::Arxiv { ManifestationKind::Preprint } else { ManifestationKind::Journal },
                related_ids: RelatedId::new(IdKind::Doi, &format!("10.1000/x.{i}")).into_iter().collect(),
                raw_provenance: String::new(),
            }
        })
        .collect()
}
