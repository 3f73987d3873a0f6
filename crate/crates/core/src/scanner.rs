//! Workspace walking and primary-artifact selection.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::extract::{docx, plain};

pub const DEFAULT_MAX_DEPTH: usize = 8;
pub const PROBE_BYTES: usize = 64 * 1024;
pub const SKIP_DIRS: [&str; 6] = [".git", "build", "dist", "node_modules", "out", "target"];
pub const NAME_HINTS: [&str; 5] = ["reference", "paper", "manuscript", "draft", "bibliography"];
const DOCX_PROBE_LIMIT: u64 = 32 * 1024 * 1024;

static BIBTEX_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"@[A-Za-z]+\s*\{").unwrap());
static TEX_BIB_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\\(bibliography|addbibresource)\s*(\[[^\]]*\])?\s*\{|\\begin\{thebibliography\}").unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanCandidate {
    pub path: String,
    pub extension: String,
    pub name_hint_score: u32,
    pub extension_rank: u32,
    pub content_score: u32,
    pub total_score: i64,
    pub size_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDir {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub root: String,
    pub candidates: Vec<ScanCandidate>,
    pub selected: Option<String>,
    pub skipped_dirs: Vec<SkippedDir>,
}

pub fn extension_rank(ext: &str) -> Option<u32> {
    match ext {
        "bib" => Some(4),
        "tex" => Some(3),
        "md" => Some(2),
        "txt" => Some(1),
        "docx" => Some(0),
        _ => None,
    }
}

pub fn total_score(extension_rank: u32, name_hint_score: u32, content_score: u32) -> i64 {
    100 * extension_rank as i64 + 10 * name_hint_score as i64 + content_score as i64
}

pub fn name_hint_score(file_name: &str) -> u32 {
    let lower = file_name.to_lowercase();
    NAME_HINTS.iter().filter(|h| lower.contains(*h)).count() as u32
}

/// 3 points each for a reference-section header, a BibTeX entry marker and
/// a LaTeX bibliography command.
pub fn content_score(probe: &str) -> u32 {
    let mut score = 0;
    if plain::detect_reference_section(probe).is_some() {
        score += 3;
    }
    if BIBTEX_MARKER.is_match(probe) {
        score += 3;
    }
    if TEX_BIB_MARKER.is_match(probe) {
        score += 3;
    }
    score
}

fn extension_of(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_lowercase())
}

pub fn score_candidate(path: &str, probe: &str, size_bytes: u64) -> ScanCandidate {
    let ext = extension_of(Path::new(path)).unwrap_or_default();
    let rank = extension_rank(&ext).unwrap_or(0);
    let base = path.rsplit('/').next().unwrap_or(path);
    let hints = name_hint_score(base);
    let content = content_score(probe);
    ScanCandidate {
        path: path.to_string(),
        extension: ext,
        name_hint_score: hints,
        extension_rank: rank,
        content_score: content,
        total_score: total_score(rank, hints, content),
        size_bytes,
        probe_error: None,
    }
}

fn read_probe(path: &Path, ext: &str, size: u64) -> std::io::Result<String> {
    if ext == "docx" {
        if size > DOCX_PROBE_LIMIT {
            return Ok(String::new());
        }
        let bytes = fs::read(path)?;
        let text = docx::extract_docx_text(&bytes)
            .map(|p| p.join("\n"))
            .unwrap_or_default();
        let mut end = text.len().min(PROBE_BYTES);
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        return Ok(text[..end].to_string());
    }
    let mut buf = Vec::with_capacity(PROBE_BYTES.min(size as usize));
    fs::File::open(path)?.take(PROBE_BYTES as u64).read_to_end(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

pub(crate) fn is_skipped_dir(name: &str) -> bool {
    name.starts_with('.') || SKIP_DIRS.contains(&name)
}

/// Rewrite sidecars produced by this tool are never selected.
fn is_sidecar(name: &str) -> bool {
    name.contains(".citecheck.")
}

fn rel_string(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn candidate_for(abs: &Path, rel: &str) -> Option<ScanCandidate> {
    let ext = extension_of(abs)?;
    extension_rank(&ext)?;
    let size = fs::metadata(abs).map(|m| m.len()).unwrap_or(0);
    match read_probe(abs, &ext, size) {
        Ok(probe) => Some(score_candidate(rel, &probe, size)),
        Err(e) => {
            let mut c = score_candidate(rel, "", size);
            c.probe_error = Some(e.kind().to_string());
            Some(c)
        }
    }
}

pub fn sort_candidates(candidates: &mut [ScanCandidate]) {
    candidates.sort_by(|a, b| b.total_score.cmp(&a.total_score).then_with(|| a.path.cmp(&b.path)));
}

pub fn scan_workspace(root: &Path, max_depth: usize) -> Result<ScanReport> {
    let meta = match fs::metadata(root) {
        Ok(m) => m,
        Err(e) if e.kind() == std::io::ErrorKind::PermissionDenied => {
            return Err(Error::PermissionDenied(root.to_path_buf()))
        }
        Err(_) => return Err(Error::RootNotFound(root.to_path_buf())),
    };
    let root_display = root.to_string_lossy().replace('\\', "/");

    if meta.is_file() {
        let name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let candidates: Vec<ScanCandidate> = candidate_for(root, &name).into_iter().collect();
        let selected = candidates.first().map(|c| c.path.clone());
        return Ok(ScanReport {
            root: root_display,
            candidates,
            selected,
            skipped_dirs: Vec::new(),
        });
    }
    if let Err(e) = fs::read_dir(root) {
        return Err(match e.kind() {
            std::io::ErrorKind::PermissionDenied => Error::PermissionDenied(root.to_path_buf()),
            _ => Error::Io(e),
        });
    }

    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    let walker = WalkDir::new(root)
        .max_depth(max_depth.max(1))
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0 || !e.file_type().is_dir() || !is_skipped_dir(&e.file_name().to_string_lossy())
        });
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                let path: PathBuf = err.path().map(Path::to_path_buf).unwrap_or_default();
                let reason = err
                    .io_error()
                    .map(|e| e.kind().to_string())
                    .unwrap_or_else(|| "unreadable".into());
                skipped.push(SkippedDir {
                    path: rel_string(&path, root),
                    reason,
                });
                continue;
            }
        };
        if entry.depth() == 0 {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        if entry.file_type().is_dir() {
            continue;
        }
        if !entry.file_type().is_file() || is_sidecar(&name) {
            continue;
        }
        if let Some(c) = candidate_for(entry.path(), &rel_string(entry.path(), root)) {
            candidates.push(c);
        }
    }
    // Skipped directories that the filter hid are reported too.
    collect_skipped(root, root, 1, max_depth.max(1), &mut skipped);
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    skipped.dedup_by(|a, b| a.path == b.path);

    sort_candidates(&mut candidates);
    let selected = candidates.first().map(|c| c.path.clone());
    Ok(ScanReport {
        root: root_display,
        candidates,
        selected,
        skipped_dirs: skipped,
    })
}

fn collect_skipped(root: &Path, dir: &Path, depth: usize, max_depth: usize, out: &mut Vec<SkippedDir>) {
    if depth > max_depth {
        return;
    }
    let Ok(rd) = fs::read_dir(dir) else { return };
    let mut entries: Vec<_> = rd.filter_map(|e| e.ok()).collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let Ok(ft) = e.file_type() else { continue };
        if !ft.is_dir() {
            continue;
        }
        let name = e.file_name().to_string_lossy().into_owned();
        if is_skipped_dir(&name) {
            let reason = if name.starts_with('.') { "hidden" } else { "generated" };
            out.push(SkippedDir {
                path: rel_string(&e.path(), root),
                reason: reason.into(),
            });
        } else {
            collect_skipped(root, &e.path(), depth + 1, max_depth, out);
        }
    }
}

pub fn select_primary_artifact(report: &ScanReport) -> Result<String> {
    report.candidates.first().map(|c| c.path.clone()).ok_or(Error::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn touch(dir: &Path, rel: &str, content: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, content).unwrap();
    }

    #[test]
    fn no_supported_files() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), "notes.py", "print()");
        let r = scan_workspace(d.path(), 8).unwrap();
        assert!(r.candidates.is_empty());
        assert_eq!(r.selected, None);
        assert!(matches!(select_primary_artifact(&r), Err(Error::NoCandidates)));
    }

    #[test]
    fn draft_tex_beats_data_txt() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), "draft.tex", "xxxx");
        touch(d.path(), "data.txt", "yyyy");
        let r = scan_workspace(d.path(), 8).unwrap();
        assert_eq!(r.selected.as_deref(), Some("draft.tex"));
    }

    #[test]
    fn hidden_dirs_skipped() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), ".git/refs.bib", "@article{a,title={T}}");
        touch(d.path(), "paper.bib", "@article{a,title={T}}");
        touch(d.path(), "node_modules/x/refs.bib", "");
        let r = scan_workspace(d.path(), 8).unwrap();
        let paths: Vec<_> = r.candidates.iter().map(|c| c.path.as_str()).collect();
        assert_eq!(paths, ["paper.bib"]);
        let skipped: Vec<_> = r.skipped_dirs.iter().map(|s| s.path.as_str()).collect();
        assert_eq!(skipped, [".git", "node_modules"]);
    }

    #[test]
    fn single_file_root() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), "a/refs.md", "# References\n- x\n");
        let r = scan_workspace(&d.path().join("a/refs.md"), 8).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.selected.as_deref(), Some("refs.md"));
    }

    #[test]
    fn missing_root() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(scan_workspace(&d.path().join("nope"), 8), Err(Error::RootNotFound(_))));
    }

    #[test]
    fn depth_limit_and_forward_slashes() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), "a/b/c.bib", "");
        touch(d.path(), "a/b/c/d/e.bib", "");
        let r = scan_workspace(d.path(), 3).unwrap();
        let paths: Vec<_> = r.candidates.iter().map(|c| c.path.as_str()).collect();
        assert_eq!(paths, ["a/b/c.bib"]);
    }

    #[test]
    fn manuscript_tex_scores() {
        let c = score_candidate("manuscript.tex", "\\bibliography{refs}", 10);
        assert!(c.name_hint_score >= 1);
        assert!(c.content_score > 0);
        let x = score_candidate("x.docx", "", 0);
        assert_eq!((x.name_hint_score, x.content_score, x.extension_rank), (0, 0, 0));
    }

    #[test]
    fn references_bib_beats_old_bib() {
        // oracle: enumerate the scoring definition by hand
        let probe = "@article{a, title={T}}";
        let by_hand = |name: &str| {
            let hints = ["reference", "paper", "manuscript", "draft", "bibliography"]
                .iter()
                .filter(|h| name.contains(*h))
                .count() as i64;
            400 + 10 * hints + 3
        };
        let r = score_candidate("references.bib", probe, 1);
        let o = score_candidate("old.bib", probe, 1);
        assert_eq!(r.total_score, by_hand("references.bib"));
        assert_eq!(o.total_score, by_hand("old.bib"));
        assert!(r.total_score > o.total_score);
    }

    #[test]
    fn equal_scores_break_on_path() {
        let mut cs = vec![score_candidate("b.bib", "", 0), score_candidate("a.bib", "", 0)];
        sort_candidates(&mut cs);
        let report = ScanReport {
            root: ".".into(),
            selected: None,
            candidates: cs,
            skipped_dirs: vec![],
        };
        assert_eq!(select_primary_artifact(&report).unwrap(), "a.bib");
    }

    #[test]
    fn sidecars_not_candidates() {
        let d = tempfile::tempdir().unwrap();
        touch(d.path(), "refs.bib", "");
        touch(d.path(), "refs.citecheck.bib", "");
        let r = scan_workspace(d.path(), 8).unwrap();
        assert_eq!(r.candidates.len(), 1);
    }

    proptest! {
        #[test]
        fn rescoring_is_deterministic(name in "[a-z]{1,12}", ext in prop::sample::select(vec!["bib", "tex", "md", "txt", "docx"]), probe in ".{0,200}") {
            let path = format!("{name}.{ext}");
            let a = score_candidate(&path, &probe, 5);
            let b = score_candidate(&path, &probe, 5);
            prop_assert_eq!(a.total_score, total_score(a.extension_rank, a.name_hint_score, a.content_score));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn non_candidate_files_do_not_change_selection(names in prop::collection::vec("[a-z]{1,8}", 1..6)) {
            let d = tempfile::tempdir().unwrap();
            touch(d.path(), "paper.tex", "\\bibliography{x}");
            touch(d.path(), "notes.md", "# References\n");
            let before = scan_workspace(d.path(), 8).unwrap().selected;
            for n in &names {
                touch(d.path(), &format!("{n}.py"), "x");
            }
            let after = scan_workspace(d.path(), 8).unwrap();
            prop_assert_eq!(before, after.selected);
        }
    }
}
