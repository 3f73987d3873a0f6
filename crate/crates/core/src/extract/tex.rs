//! LaTeX bibliography resources and inline `thebibliography` environments.

use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;

static BIB_COMMAND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\\(bibliography|addbibresource)\s*(?:\[[^\]]*\])?\s*\{([^}]*)\}").unwrap()
});
static BIBITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\bibitem\s*(?:\[[^\]]*\])?\s*\{[^}]*\}").unwrap());
static TEX_COMMAND: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\(newblock|emph|textit|textbf|textsc|url|em|it|bf|sc|href)\b\s*").unwrap());

/// Blank out everything after an unescaped `%` on each line, keeping byte offsets.
fn strip_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    for line in src.split_inclusive('\n') {
        let bytes = line.as_bytes();
        let mut cut = None;
        for (i, &c) in bytes.iter().enumerate() {
            if c == b'%' && (i == 0 || bytes[i - 1] != b'\\') {
                cut = Some(i);
                break;
            }
        }
        match cut {
            Some(i) => {
                out.push_str(&line[..i]);
                for c in line[i..].chars() {
                    if c == '\n' {
                        out.push('\n');
                    } else {
                        out.extend(std::iter::repeat_n(' ', c.len_utf8()));
                    }
                }
            }
            None => out.push_str(line),
        }
    }
    out
}

/// File names named by `\bibliography` / `\addbibresource`, in order, `.bib` appended
/// for `\bibliography` names that lack it. Commented-out commands are ignored.
pub fn bib_directives(tex_source: &str) -> Vec<String> {
    let clean = strip_comments(tex_source);
    let mut names: Vec<String> = Vec::new();
    for cap in BIB_COMMAND.captures_iter(&clean) {
        let append_ext = &cap[1] == "bibliography";
        for part in cap[2].split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let name = if append_ext && !part.ends_with(".bib") {
                format!("{part}.bib")
            } else {
                part.to_string()
            };
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    names
}

/// Existing bibliography files referenced by the source, deduplicated in
/// first-appearance order.
pub fn resolve_tex_bib_resources(tex_source: &str, base_dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = Vec::new();
    for name in bib_directives(tex_source) {
        let path = base_dir.join(&name);
        if path.is_file() && !out.contains(&path) {
            out.push(path);
        }
    }
    out
}

pub struct BibitemEnv {
    pub span: (usize, usize),
    pub items: Vec<(usize, usize)>,
}

/// Spans of each `\bibitem` inside the last `thebibliography` environment.
pub fn find_bibitems(tex_source: &str) -> Option<BibitemEnv> {
    let clean = strip_comments(tex_source);
    let begin_tag = "\\begin{thebibliography}";
    let begin = clean.rfind(begin_tag)?;
    let body_start = clean[begin..].find('\n').map(|i| begin + i + 1).unwrap_or(clean.len());
    let end = clean[body_start..]
        .find("\\end{thebibliography}")
        .map(|i| body_start + i)
        .unwrap_or(clean.len());
    let starts: Vec<usize> = BIBITEM
        .find_iter(&clean[body_start..end])
        .map(|m| body_start + m.start())
        .collect();
    let mut items = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let stop = starts.get(i + 1).copied().unwrap_or(end);
        let trimmed = tex_source[s..stop].trim_end();
        if !trimmed.is_empty() {
            items.push((s, s + trimmed.len()));
        }
    }
    Some(BibitemEnv {
        span: (body_start, end),
        items,
    })
}

/// Turn one `\bibitem` block into plain reference text.
pub fn clean_bibitem(item: &str) -> String {
    let without_label = BIBITEM.replace(item, "");
    let s = TEX_COMMAND.replace_all(&without_label, "");
    let s = s.replace('~', " ").replace("--", "-");
    let s = super::normalize::delatex(&s);
    crate::text::squash_whitespace(&s)
}
