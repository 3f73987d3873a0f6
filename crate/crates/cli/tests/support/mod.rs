#![allow(dead_code)]

pub mod stub;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use citecheck::pipeline::{self, RunOptions};
use citecheck::{Connectors, SourceConfig, SourceName, TransportMode};

use stub::{CatalogRecord, Fault, Stub};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn workspace(name: &str) -> PathBuf {
    fixtures().join("workspaces").join(name)
}

pub fn catalog() -> Vec<CatalogRecord> {
    let text = std::fs::read_to_string(fixtures().join("catalog.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// A recorded fixture set: which workspaces feed it, which sources it
/// exercises and what faults the stub injects while recording.
pub struct Case {
    pub name: &'static str,
    pub sources: &'static [SourceName],
    pub faults: &'static [(SourceName, Fault)],
    /// Sources whose base URL points at a closed port.
    pub unreachable: &'static [SourceName],
    pub artifacts: &'static [&'static str],
}

pub const DEFAULT_SOURCES: &[SourceName] = &[SourceName::Crossref, SourceName::Pubmed, SourceName::Arxiv];

pub const OK: Case = Case {
    name: "ok",
    sources: DEFAULT_SOURCES,
    faults: &[],
    unreachable: &[],
    artifacts: &[
        "mixed/refs.bib",
        "mixed/paper.tex",
        "mixed/notes.md",
        "mixed/reading.txt",
        "mixed/chapter.docx",
        "doi_recovery/refs.bib",
        "duplicate_keys/refs.bib",
        "manifestation/refs.bib",
    ],
};

pub const FAULTS: Case = Case {
    name: "faults",
    sources: &[SourceName::Crossref, SourceName::Pubmed, SourceName::Arxiv, SourceName::SemanticScholar],
    faults: &[
        (SourceName::Crossref, Fault::Status(401)),
        (SourceName::Pubmed, Fault::Status(429)),
        (SourceName::Arxiv, Fault::Truncated),
    ],
    unreachable: &[SourceName::SemanticScholar],
    artifacts: &["failures/refs.bib"],
};

pub const CASES: [&Case; 2] = [&OK, &FAULTS];

pub fn recorded(case: &Case) -> PathBuf {
    fixtures().join("recorded").join(case.name)
}

pub fn source_list(sources: &[SourceName]) -> String {
    sources.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
}

/// Options for an offline replay of `case` over `path`.
pub fn replay_options(case: &Case, path: &Path) -> RunOptions {
    let mut o = RunOptions::new(path.to_string_lossy());
    o.sources = Some(case.sources.iter().copied().collect::<BTreeSet<_>>());
    o.transport = Some(TransportMode::Replay);
    o.fixtures_dir = Some(recorded(case));
    o
}

pub fn replay_connectors(case: &Case) -> Connectors {
    replay_options(case, Path::new(".")).connectors().unwrap()
}

/// Paragraphs of the bundled .docx chapter.
pub const DOCX_PARAGRAPHS: &[&str] = &[
    "Chapter 2: Methods",
    "Islet atlases and molecular graph models were used as baselines.",
    "References",
    "[1] H. Nakamura, A. R. Patel. Single-cell transcriptomics of human pancreatic islets in type 2 diabetes. Cell Metabolism Reports, 2020.",
    "[2] J. Keller, P. Singh. Attention-based graph networks for molecular property prediction. Proceedings of the Conference on Learning Representations, 2021.",
];

/// Record `case` against the stub into `out`.
pub fn record_case(case: &Case, out: &Path) {
    let faults: BTreeMap<SourceName, Fault> = case.faults.iter().copied().collect();
    let server = Stub::start(catalog(), faults);
    let mut cfg = SourceConfig::default();
    cfg.enabled = case.sources.iter().copied().collect();
    for s in SourceName::ALL {
        let url = if case.unreachable.contains(&s) {
            stub::dead_url()
        } else {
            server.base_url()
        };
        cfg.base_urls.insert(s, url);
    }
    cfg.transport = TransportMode::Record;
    cfg.fixtures_dir = Some(out.to_path_buf());
    cfg.timeout = Duration::from_secs(5);
    cfg.base_backoff = Duration::from_millis(1);
    let connectors = Connectors::from_config(cfg).unwrap();
    for a in case.artifacts {
        let opts = RunOptions::new(fixtures().join("workspaces").join(a).to_string_lossy());
        pipeline::analyze(&opts, &connectors).unwrap();
    }
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dest = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dest);
        } else {
            std::fs::copy(e.path(), dest).unwrap();
        }
    }
}

/// Fresh writable copy of a bundled workspace.
pub fn scratch(name: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&workspace(name), dir.path());
    dir
}

/// Sorted file name → bytes for a directory.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    if let Ok(rd) = std::fs::read_dir(dir) {
        for e in rd.flatten() {
            if e.file_type().map(|t| t.is_file()).unwrap_or(false) {
                out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap());
            }
        }
    }
    out
}
