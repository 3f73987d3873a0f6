use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use super::{Anomaly, Author, EntryKind, RawFields, RawReference, ReferenceInput};
use crate::ids;

pub const YEAR_MIN: i32 = 1500;
pub const YEAR_MAX: i32 = 2099;

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^0-9])([0-9]{4})(?:[^0-9]|$)").unwrap());
static AND_SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s+and\s+").unwrap());

fn accent_mark(cmd: char) -> Option<char> {
    Some(match cmd {
        '"' => '\u{0308}',
        '\'' => '\u{0301}',
        '`' => '\u{0300}',
        '^' => '\u{0302}',
        '~' => '\u{0303}',
        '=' => '\u{0304}',
        '.' => '\u{0307}',
        'c' => '\u{0327}',
        'v' => '\u{030C}',
        'u' => '\u{0306}',
        'H' => '\u{030B}',
        _ => return None,
    })
}

fn named_symbol(name: &str) -> Option<&'static str> {
    Some(match name {
        "ss" => "ß",
        "o" => "ø",
        "O" => "Ø",
        "aa" => "å",
        "AA" => "Å",
        "ae" => "æ",
        "AE" => "Æ",
        "oe" => "œ",
        "l" => "ł",
        "L" => "Ł",
        "i" => "ı",
        _ => return None,
    })
}

/// Resolve common LaTeX accents and escapes, then drop grouping braces.
pub fn delatex(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c != '\\' {
            if c != '{' && c != '}' {
                out.push(c);
            }
            i += 1;
            continue;
        }
        let Some(&next) = chars.get(i + 1) else {
            i += 1;
            continue;
        };
        if matches!(next, '&' | '%' | '$' | '#' | '_' | '{' | '}') {
            out.push(next);
            i += 2;
            continue;
        }
        // \"o, \"{o}, \c{c}, \v s
        if let Some(mark) = accent_mark(next) {
            let is_letter_cmd = next.is_ascii_alphabetic();
            let mut j = i + 2;
            if is_letter_cmd && chars.get(j).is_some_and(|c| c.is_ascii_alphabetic()) {
                // a longer command name like \cite; fall through to generic handling
            } else {
                while is_letter_cmd && chars.get(j) == Some(&' ') {
                    j += 1;
                }
                let (base, consumed) = match chars.get(j) {
                    Some('{') => match (chars.get(j + 1), chars.get(j + 2), chars.get(j + 3)) {
                        (Some('\\'), Some('i'), Some('}')) => (Some('i'), 4),
                        (Some(b), Some('}'), _) => (Some(*b), 3),
                        _ => (None, 0),
                    },
                    Some(b) if b.is_alphabetic() => (Some(*b), 1),
                    _ => (None, 0),
                };
                if let Some(base) = base {
                    out.extend([base, mark].iter().collect::<String>().nfc());
                    i = j + consumed;
                    continue;
                }
            }
        }
        let mut j = i + 1;
        while chars.get(j).is_some_and(|c| c.is_ascii_alphabetic()) {
            j += 1;
        }
        let name: String = chars[i + 1..j].iter().collect();
        if let Some(sym) = named_symbol(&name) {
            out.push_str(sym);
            if chars.get(j) == Some(&' ') {
                j += 1;
            }
        }
        i = j.max(i + 1);
    }
    out
}

fn has_control_chars(s: &str) -> bool {
    s.chars().any(|c| c.is_control() && !matches!(c, '\n' | '\r' | '\t'))
}

/// Display form: LaTeX resolved, NFKC, control characters removed, whitespace squashed.
pub fn clean_display(s: &str) -> String {
    let s: String = delatex(s)
        .nfkc()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    crate::text::squash_whitespace(&s)
}

fn clean_title(s: &str) -> Option<String> {
    let t = clean_display(s);
    let t = t.trim_end_matches(['.', ',', ';', ':']).trim().to_string();
    t.chars().any(char::is_alphanumeric).then_some(t)
}

/// Split an author field at top-level ` and `.
pub fn split_author_field(s: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut last = 0;
    let mut skip_to = 0;
    for (i, c) in s.char_indices() {
        if i < skip_to {
            continue;
        }
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            _ if depth == 0 && c.is_whitespace() => {
                if let Some(m) = AND_SPLIT.find_at(s, i).filter(|m| m.start() == i) {
                    parts.push(&s[last..i]);
                    last = m.end();
                    skip_to = m.end();
                }
            }
            _ => {}
        }
    }
    parts.push(&s[last..]);
    parts
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

/// True for tokens like `J.`, `JA`, `J.-P.`, `J. A.`.
pub fn is_initials(s: &str) -> bool {
    let s = s.trim();
    !s.is_empty()
        && s.len() <= 8
        && s.split([' ', '.', '-']).filter(|p| !p.is_empty()).all(|p| {
            p.chars().count() <= 2 && p.chars().all(|c| c.is_uppercase())
        })
}

/// Parse one BibTeX-style name: `Family, Given`, `Family, Jr, Given`,
/// `Given Family`, `Family AB` (Vancouver) or `{Corporate Name}`.
pub fn parse_name(raw: &str) -> Option<Author> {
    let raw = raw.trim();
    if raw.eq_ignore_ascii_case("others") || raw.is_empty() {
        return None;
    }
    if raw.starts_with('{') && raw.ends_with('}') && raw[1..raw.len() - 1].find(['{', '}']).is_none() {
        let family = clean_display(raw);
        return (!family.is_empty()).then(|| Author::new(family, None));
    }
    let clean = clean_display(raw);
    let parts: Vec<&str> = clean.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    match parts.len() {
        0 => None,
        1 => {
            let words: Vec<&str> = parts[0].split_whitespace().collect();
            match words.as_slice() {
                [] => None,
                [only] => Some(Author::new(*only, None)),
                [init @ .., last] if is_initials(last) && !init.iter().any(|w| is_initials(w)) => {
                    Some(Author::new(init.join(" "), Some(last)))
                }
                [init @ .., last] => Some(Author::new(*last, Some(&init.join(" ")))),
            }
        }
        2 => Some(Author::new(parts[0], Some(parts[1]))),
        _ => Some(Author::new(parts[0], Some(parts[parts.len() - 1]))),
    }
}

pub fn join_authors(authors: &[Author]) -> String {
    authors
        .iter()
        .map(|a| match &a.given {
            Some(g) => format!("{}, {}", a.family, g),
            None if a.family.contains(' ') => format!("{{{}}}", a.family),
            None => a.family.clone(),
        })
        .collect::<Vec<_>>()
        .join(" and ")
}

/// First 4-digit integer in the plausible range.
pub fn find_year(s: &str) -> Option<i32> {
    let mut at = 0;
    while let Some(c) = YEAR.captures_at(s, at) {
        let m = c.get(1).unwrap();
        let y: i32 = m.as_str().parse().ok()?;
        if (YEAR_MIN..=YEAR_MAX).contains(&y) {
            return Some(y);
        }
        at = m.end();
    }
    None
}

fn is_conference_venue(v: &str) -> bool {
    let f = crate::text::fold(v);
    ["proc", "conference", "symposium", "workshop", "meeting"]
        .iter()
        .any(|w| f.contains(w))
}

fn is_preprint_venue(v: &str) -> bool {
    let f = crate::text::fold(v);
    f.contains("arxiv") || f == "corr" || f.contains("biorxiv") || f.contains("medrxiv") || f.contains("preprint")
}

/// Build a normalized entry, or explain why the entry is unusable.
pub fn normalize_reference(raw: RawReference, fields: &RawFields) -> Result<ReferenceInput, String> {
    let mut anomalies = Vec::new();
    let mut note_control = |field: &str, value: &str| {
        if has_control_chars(value) {
            anomalies.push(Anomaly::ControlChars {
                field: field.to_string(),
            });
        }
    };

    let title_raw = fields.get("title");
    if let Some(t) = title_raw {
        note_control("title", t);
    }
    let title = title_raw.and_then(clean_title);

    let authors: Vec<Author> = match fields.get("author") {
        Some(a) => {
            note_control("author", a);
            split_author_field(a).iter().filter_map(|n| parse_name(n)).collect()
        }
        None => Vec::new(),
    };

    let venue_raw = ["journal", "journaltitle", "booktitle", "howpublished", "venue"]
        .iter()
        .find_map(|k| fields.get(k))
        .or_else(|| {
            matches!(fields.entry_type.as_deref(), Some("book" | "inbook"))
                .then(|| fields.get("publisher"))
                .flatten()
        });
    if let Some(v) = venue_raw {
        note_control("venue", v);
    }
    let venue = venue_raw
        .map(clean_display)
        .map(|v| v.trim_end_matches(['.', ',']).to_string())
        .filter(|v| !v.is_empty());

    let mut year = None;
    if let Some(y) = fields.get("year").or_else(|| fields.get("date")) {
        year = find_year(y);
        if year.is_none() && y.chars().any(|c| c.is_ascii_digit()) {
            anomalies.push(Anomaly::SuspiciousYear { value: y.trim().to_string() });
        }
    }

    let mut doi = None;
    if let Some(d) = fields.get("doi") {
        let cleaned = ids::clean_doi(d);
        if ids::is_valid_doi(&cleaned) {
            doi = Some(cleaned);
        } else if !cleaned.is_empty() {
            anomalies.push(Anomaly::MalformedDoi { value: cleaned });
        }
    }
    if doi.is_none() {
        if let Some(u) = fields.get("url") {
            doi = ids::find_doi(u).map(|(d, _)| d).filter(|d| ids::is_valid_doi(d));
        }
    }

    let pmid = fields.get("pmid").and_then(ids::normalize_pmid);

    let eprint_is_arxiv = fields
        .get("archiveprefix")
        .or_else(|| fields.get("eprinttype"))
        .is_some_and(|p| p.eq_ignore_ascii_case("arxiv"));
    let arxiv = fields
        .get("eprint")
        .filter(|_| eprint_is_arxiv || fields.get("archiveprefix").is_none())
        .and_then(ids::normalize_arxiv)
        .or_else(|| fields.get("arxiv").and_then(ids::normalize_arxiv))
        .or_else(|| {
            ["url", "journal", "note", "howpublished", "venue"]
                .iter()
                .filter_map(|k| fields.get(k))
                .find_map(|v| ids::find_arxiv(v).map(|(id, _)| id))
        });
    let (arxiv_id, arxiv_version) = match arxiv {
        Some((id, v)) => (Some(id), v),
        None => (None, None),
    };

    let entry_kind = match fields.entry_type.as_deref() {
        Some("article") => {
            if venue.as_deref().is_some_and(is_preprint_venue) {
                EntryKind::Preprint
            } else {
                EntryKind::Journal
            }
        }
        Some("inproceedings" | "conference" | "proceedings") => EntryKind::Conference,
        Some("book" | "inbook" | "incollection" | "booklet") => EntryKind::Book,
        Some("misc" | "online" | "unpublished" | "preprint") if arxiv_id.is_some() => EntryKind::Preprint,
        Some(_) => EntryKind::Other,
        None => match &venue {
            Some(v) if is_preprint_venue(v) => EntryKind::Preprint,
            Some(v) if is_conference_venue(v) => EntryKind::Conference,
            Some(_) => EntryKind::Journal,
            None if arxiv_id.is_some() => EntryKind::Preprint,
            None => EntryKind::Unknown,
        },
    };

    if title.is_none() && doi.is_none() && pmid.is_none() && arxiv_id.is_none() {
        return Err("unparseable: no title and no identifier".into());
    }

    Ok(ReferenceInput {
        title,
        authors,
        year,
        venue,
        doi,
        pmid,
        arxiv_id,
        arxiv_version,
        entry_kind,
        anomalies,
        raw,
    })
}
