//! Persistent identifier normalization (DOI, PMID, arXiv).
//!
//! Every identifier that enters the system, whether cited by an author or
//! asserted by a remote source, goes through these functions so that equality
//! comparisons are meaningful.

use std::sync::LazyLock;

use regex::Regex;

static DOI_SYNTAX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^10\.[0-9]+(\.[0-9]+)*/\S+$").unwrap());
static DOI_IN_TEXT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\b10\.[0-9]{4,9}(\.[0-9]+)*/[^\s"<>{}]+"#).unwrap());
static ARXIV_NEW: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(\d{4}\.\d{4,5})(v(\d+))?$").unwrap());
static ARXIV_OLD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^([a-z\-]+(\.[a-z]{2})?/\d{7})(v(\d+))?$").unwrap());
static ARXIV_IN_TEXT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(?:arxiv:\s*|arxiv\.org/(?:abs|pdf)/)((?:\d{4}\.\d{4,5}|[a-z\-]+(?:\.[a-z]{2})?/\d{7})(?:v\d+)?)",
    )
    .unwrap()
});
static PMID_IN_TEXT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bPMID:?\s*(\d{1,9})\b").unwrap());

const DOI_PREFIXES: [&str; 6] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi.org/",
    "doi:",
];

/// Strip resolver prefixes and lowercase. Does not validate; see [`is_valid_doi`].
pub fn clean_doi(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let lower = s.to_ascii_lowercase();
        match DOI_PREFIXES.iter().find(|p| lower.starts_with(*p)) {
            Some(p) => s = s[p.len()..].trim_start(),
            None => break,
        }
    }
    s.trim_end_matches(['.', ',', ';', ')'])
        .to_lowercase()
}

pub fn is_valid_doi(doi: &str) -> bool {
    DOI_SYNTAX.is_match(doi)
}

/// Cleaned DOI if it is syntactically valid.
pub fn normalize_doi(raw: &str) -> Option<String> {
    let d = clean_doi(raw);
    is_valid_doi(&d).then_some(d)
}

/// Normalized arXiv id plus the version suffix, if any.
pub fn normalize_arxiv(raw: &str) -> Option<(String, Option<u32>)> {
    let mut s = raw.trim();
    for scheme in ["https://", "http://", "www."] {
        if s.len() >= scheme.len() && s[..scheme.len()].eq_ignore_ascii_case(scheme) {
            s = &s[scheme.len()..];
        }
    }
    let lower = s.to_ascii_lowercase();
    if let Some(m) = ARXIV_IN_TEXT.captures(s) {
        if m.get(0).map(|m| m.start()) == Some(0) {
            s = m.get(1).unwrap().as_str();
        }
    } else if lower.starts_with("arxiv") {
        return None;
    }
    let s = s.trim_end_matches(".pdf");
    if let Some(c) = ARXIV_NEW.captures(s) {
        let version = c.get(3).and_then(|v| v.as_str().parse().ok());
        return Some((c[1].to_string(), version));
    }
    if let Some(c) = ARXIV_OLD.captures(s) {
        let version = c.get(4).and_then(|v| v.as_str().parse().ok());
        return Some((c[1].to_lowercase(), version));
    }
    None
}

pub fn normalize_pmid(raw: &str) -> Option<String> {
    let s = raw.trim();
    let s = s
        .strip_prefix("PMID:")
        .or_else(|| s.strip_prefix("pmid:"))
        .unwrap_or(s)
        .trim();
    let s = s.trim_start_matches('0');
    (!s.is_empty() && s.len() <= 9 && s.bytes().all(|b| b.is_ascii_digit())).then(|| s.to_string())
}

/// First DOI-looking substring, with its byte range.
pub fn find_doi(text: &str) -> Option<(String, std::ops::Range<usize>)> {
    let m = DOI_IN_TEXT.find(text)?;
    let trimmed = m.as_str().trim_end_matches(['.', ',', ';', ')', ']']);
    Some((
        trimmed.to_lowercase(),
        m.start()..m.start() + trimmed.len(),
    ))
}

pub fn find_arxiv(text: &str) -> Option<((String, Option<u32>), std::ops::Range<usize>)> {
    let c = ARXIV_IN_TEXT.captures(text)?;
    let whole = c.get(0).unwrap();
    let id = normalize_arxiv(c.get(1).unwrap().as_str())?;
    Some((id, whole.range()))
}

pub fn find_pmid(text: &str) -> Option<(String, std::ops::Range<usize>)> {
    let c = PMID_IN_TEXT.captures(text)?;
    let id = normalize_pmid(c.get(1).unwrap().as_str())?;
    Some((id, c.get(0).unwrap().range()))
}
