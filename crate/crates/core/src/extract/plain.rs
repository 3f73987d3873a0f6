//! Reference sections in prose documents and free-text reference parsing.

use std::sync::LazyLock;

use regex::Regex;

use super::normalize::{find_year, is_initials, join_authors, parse_name};
use super::{Author, RawFields};
use crate::ids;
use crate::text::squash_whitespace;

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(#{1,6})?\s*[*_]*\s*(?:(?:\d+|[ivxlc]+)\.?\s+)?(references|bibliography|works cited|literature cited|reference list|cited works)\s*[*_]*\s*:?\s*$",
    )
    .unwrap()
});
static NEXT_SECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(#{1,6}\s*)?(?:(?:\d+|[ivxlc]+|[a-z])\.?\s+)?(appendix|appendices|acknowledge?ments?|supplementary (material|information)|author contributions|funding|conflicts? of interest|figure legends|tables)\b",
    )
    .unwrap()
});
static MD_HEADER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(#{1,6})\s+\S").unwrap());
static NUMBERED_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\[\d+\]|\(\d+\)|\d+\.)\s+").unwrap());
static BULLET_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*[-*+]\s+").unwrap());
static LEADING_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\[\d+\]|\(\d+\)|\d+\.|[-*+])\s+").unwrap());
static MD_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\]]*)\]\(([^)\s]*)\)").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bhttps?://\S+").unwrap());
static ID_LABELS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\b(doi:\s*|arxiv:\s*\S+|pmid:?\s*\d+|10\.[0-9]{4,9}(\.[0-9]+)*/[^\s"<>{}]+)"#).unwrap()
});
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"["“]([^"”]{3,})["”]"#).unwrap());
static APA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.+?)\s*\(((?:1[5-9]|20)\d\d)[a-z]?\)[.,:]?\s*(.*)$").unwrap());
static VENUE_TAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(\s*[,;:]\s*(vol\.?\s*)?\d.*|\s+\d+\s*\(.*|\s*\((1[5-9]|20)\d\d\).*|\s+(1[5-9]|20)\d\d\b.*)$").unwrap()
});
static ET_AL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i),?\s*et\s+al\.?").unwrap());
static AUTHOR_CONJ: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s*(?:,\s*)?(?:&|\band\b)\s*").unwrap());

const ABBREVIATIONS: [&str; 21] = [
    "acad", "adv", "am", "ann", "assoc", "conf", "dept", "ed", "eds", "eng", "int", "inc", "natl",
    "no", "pp", "proc", "rev", "soc", "symp", "trans", "vol",
];

fn lines_with_offsets(text: &str, start: usize, end: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut pos = start;
    for line in text[start..end].split_inclusive('\n') {
        out.push((pos, line));
        pos += line.len();
    }
    out
}

/// Span of the last references section: from the line after its header to
/// the next header of the same level, or end of text.
pub fn detect_reference_section(text: &str) -> Option<(usize, usize)> {
    let lines = lines_with_offsets(text, 0, text.len());
    let (idx, level) = lines.iter().enumerate().rev().find_map(|(i, (_, line))| {
        HEADER
            .captures(line.trim_end_matches(['\n', '\r']))
            .map(|c| (i, c.get(1).map_or(0, |m| m.as_str().len())))
    })?;
    let start = lines[idx].0 + lines[idx].1.len();
    let end = lines[idx + 1..]
        .iter()
        .find(|(_, line)| {
            let line = line.trim_end_matches(['\n', '\r']);
            let md_stop = level > 0
                && MD_HEADER
                    .captures(line)
                    .is_some_and(|c| c[1].len() <= level);
            md_stop || (line.len() <= 80 && NEXT_SECTION.is_match(line))
        })
        .map_or(text.len(), |(off, _)| *off);
    Some((start, end))
}

/// Split a section into reference spans: numbered markers when present, else
/// bullets, else blank-line blocks, else one reference per line.
pub fn segment_references(text: &str, section: (usize, usize)) -> Vec<(usize, usize)> {
    let lines = lines_with_offsets(text, section.0, section.1);
    let content = |l: &str| l.trim_end_matches(['\n', '\r']).to_string();
    let numbered = lines.iter().any(|(_, l)| NUMBERED_MARKER.is_match(l));
    let bulleted = !numbered && lines.iter().any(|(_, l)| BULLET_MARKER.is_match(l));
    let has_blank_separated_blocks = {
        let mut seen_text = false;
        let mut blank_after_text = false;
        let mut multi = false;
        for (_, l) in &lines {
            if content(l).trim().is_empty() {
                blank_after_text = seen_text;
            } else {
                if blank_after_text {
                    multi = true;
                }
                seen_text = true;
            }
        }
        multi
    };

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let flush = |cur: &mut Option<(usize, usize)>, spans: &mut Vec<(usize, usize)>| {
        if let Some((s, e)) = cur.take() {
            if e > s {
                spans.push((s, e));
            }
        }
    };
    for (off, line) in &lines {
        let body = content(line);
        let trimmed_start = body.len() - body.trim_start().len();
        let line_start = off + trimmed_start;
        let line_end = off + body.trim_end().len();
        let blank = body.trim().is_empty();
        if numbered || bulleted {
            let marker = if numbered { &*NUMBERED_MARKER } else { &*BULLET_MARKER };
            if marker.is_match(&body) {
                flush(&mut current, &mut spans);
                current = Some((line_start, line_end));
            } else if blank {
                continue;
            } else if let Some((_, e)) = current.as_mut() {
                *e = line_end;
            }
        } else if has_blank_separated_blocks {
            if blank {
                flush(&mut current, &mut spans);
            } else {
                match current.as_mut() {
                    Some((_, e)) => *e = line_end,
                    None => current = Some((line_start, line_end)),
                }
            }
        } else if !blank {
            spans.push((line_start, line_end));
        }
    }
    flush(&mut current, &mut spans);
    spans
}

/// `[text](url)` becomes `text url`; emphasis markers and backticks are dropped.
pub fn strip_markdown(s: &str) -> String {
    let s = MD_LINK.replace_all(s, "$1 $2");
    s.chars().filter(|c| !matches!(c, '*' | '`')).collect()
}

fn split_sentences(s: &str) -> Vec<String> {
    let words: Vec<&str> = s.split(' ').filter(|w| !w.is_empty()).collect();
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        cur.push(w);
        let ends = w.ends_with(['.', '?', '!']);
        if !ends {
            continue;
        }
        let bare = w.trim_end_matches(['.', '?', '!']);
        let boundary = if w.ends_with(['?', '!']) {
            true
        } else if is_initials(bare) && !bare.is_empty() {
            boundary_after_initial(
                if cur.len() >= 2 { Some(cur[cur.len() - 2]) } else { None },
                words.get(i + 1).copied(),
            )
        } else {
            !ABBREVIATIONS.contains(&bare.to_lowercase().as_str())
        };
        if boundary {
            out.push(cur.join(" "));
            cur.clear();
        }
    }
    if !cur.is_empty() {
        out.push(cur.join(" "));
    }
    out.into_iter()
        .map(|s| s.trim_end_matches(['.', ' ']).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// An initial ends a sentence only where it closes an author name such as
/// `Doe J.` or `Doe, J.` and the next word is not another name part.
fn boundary_after_initial(prev: Option<&str>, next: Option<&str>) -> bool {
    let Some(prev) = prev else { return false };
    let Some(next) = next else { return true };
    let is_conj = |w: &str| w.eq_ignore_ascii_case("and") || w == "&";
    if is_initials(next.trim_end_matches([',', '.'])) || is_conj(next) || next.ends_with(',') || is_conj(prev) {
        return false;
    }
    // `Kowalski, W. Chen.`: a lone capitalized word closing its own sentence is a surname
    let bare_next = next.trim_end_matches('.');
    if next.ends_with('.')
        && bare_next.chars().count() > 1
        && bare_next.chars().next().is_some_and(char::is_uppercase)
        && bare_next.chars().all(|c| c.is_alphabetic() || c == '-' || c == '\'')
    {
        return false;
    }
    prev.ends_with(',')
        || (prev.chars().next().is_some_and(char::is_uppercase)
            && !is_initials(prev.trim_end_matches(['.', ','])))
}

fn looks_like_authors(s: &str) -> bool {
    s.split([' ', ',']).any(|w| is_initials(w.trim_end_matches('.')) && !w.is_empty())
        || ET_AL.is_match(s)
        || s.contains(" and ")
        || s.contains(" & ")
}

/// Split a free-text author list into names.
pub fn split_free_authors(s: &str) -> Vec<Author> {
    let s = ET_AL.replace_all(s, "");
    let s = AUTHOR_CONJ.replace_all(&s, "; ");
    let mut out: Vec<Author> = Vec::new();
    for group in s.split(';') {
        let group = group.trim().trim_end_matches(',').trim();
        if group.is_empty() {
            continue;
        }
        let mut pending_family = false;
        for tok in group.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if pending_family && is_initials(tok) {
                if let Some(last) = out.last_mut() {
                    last.given = Some(tok.to_string());
                }
                pending_family = false;
                continue;
            }
            if tok.contains(' ') {
                if let Some(a) = parse_name(tok) {
                    out.push(a);
                }
                pending_family = false;
            } else {
                out.push(Author::new(tok, None));
                pending_family = true;
            }
        }
    }
    out
}

fn clean_venue(s: &str) -> Option<String> {
    let s = s.trim();
    let s = s
        .strip_prefix("In:")
        .or_else(|| s.strip_prefix("In "))
        .or_else(|| s.strip_prefix("in "))
        .unwrap_or(s)
        .trim();
    let s = VENUE_TAIL.replace(s, "");
    let s = s.trim().trim_end_matches(['.', ',', ';', ':']).trim();
    (!s.is_empty() && s.chars().any(char::is_alphabetic)).then(|| s.to_string())
}

/// Parse one free-text reference into the field map accepted by normalization.
pub fn parse_free_text(text: &str) -> RawFields {
    let mut fields = RawFields::default();
    let s = squash_whitespace(text);
    let s = LEADING_MARKER.replace(&s, "").into_owned();

    if let Some((doi, _)) = ids::find_doi(&s) {
        fields.values.insert("doi".into(), doi);
    }
    if let Some(((id, v), _)) = ids::find_arxiv(&s) {
        let v = v.map(|v| format!("v{v}")).unwrap_or_default();
        fields.values.insert("arxiv".into(), format!("{id}{v}"));
    }
    if let Some((pmid, _)) = ids::find_pmid(&s) {
        fields.values.insert("pmid".into(), pmid);
    }

    let working = URL.replace_all(&s, "");
    let working = ID_LABELS.replace_all(&working, "");
    let working = squash_whitespace(&working);
    let working = working.replace(" .", ".").replace(". .", ".");
    let working = working.trim().trim_end_matches(['.', ',', ';', ' ']).to_string();

    let (authors, title, venue_part, year_hint): (Option<String>, Option<String>, Option<String>, Option<i32>);
    if let Some(c) = QUOTED.captures(&working) {
        let m = c.get(0).unwrap();
        authors = Some(working[..m.start()].trim().trim_end_matches([',', '.']).to_string());
        title = Some(c[1].trim().trim_end_matches([',', '.']).to_string());
        venue_part = Some(working[m.end()..].trim_start_matches([',', '.', ' ']).to_string());
        year_hint = None;
    } else if let Some(c) = APA.captures(&working) {
        authors = Some(c[1].trim().trim_end_matches(',').to_string());
        year_hint = c[2].parse().ok();
        let rest = split_sentences(&c[3]);
        title = rest.first().cloned();
        venue_part = rest.get(1).cloned();
    } else {
        let sentences = split_sentences(&working);
        year_hint = None;
        match sentences.len() {
            0 => {
                authors = None;
                title = None;
                venue_part = None;
            }
            1 => {
                authors = None;
                title = Some(sentences[0].clone());
                venue_part = None;
            }
            2 if !looks_like_authors(&sentences[0]) => {
                authors = None;
                title = Some(sentences[0].clone());
                venue_part = Some(sentences[1].clone());
            }
            _ => {
                authors = Some(sentences[0].clone());
                title = Some(sentences[1].clone());
                venue_part = Some(sentences[2..].join(". "));
            }
        }
    }

    if let Some(a) = authors.filter(|a| !a.is_empty()) {
        let list = split_free_authors(&a);
        if !list.is_empty() {
            fields.values.insert("author".into(), join_authors(&list));
        }
    }
    if let Some(t) = title.filter(|t| !t.is_empty()) {
        fields.values.insert("title".into(), t);
    }
    let year = year_hint
        .or_else(|| venue_part.as_deref().and_then(find_year))
        .or_else(|| find_year(&working));
    if let Some(y) = year {
        fields.values.insert("year".into(), y.to_string());
    }
    if let Some(v) = venue_part.as_deref().and_then(clean_venue) {
        fields.values.insert("venue".into(), v);
    }
    fields
}
