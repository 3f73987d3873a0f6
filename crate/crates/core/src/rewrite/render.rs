//! Corrected-bibliography renderers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::bibtex::parse_bibtex;
use crate::extract::{Author, EntryKind, OriginFormat, ReferenceInput};
use crate::sources::{CandidateRecord, ManifestationKind};

use super::keys::assign_keys;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderFormat {
    Json,
    Bibtex,
    NumberedText,
    Markdown,
    Endnote,
}

impl RenderFormat {
    pub const ALL: [RenderFormat; 5] = [Self::Json, Self::Bibtex, Self::NumberedText, Self::Markdown, Self::Endnote];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "bibtex" | "bib" => Ok(Self::Bibtex),
            "numbered_text" | "numbered-text" | "text" => Ok(Self::NumberedText),
            "markdown" | "md" => Ok(Self::Markdown),
            "endnote" | "enw" => Ok(Self::Endnote),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Bibtex => "bibtex",
            Self::NumberedText => "numbered_text",
            Self::Markdown => "markdown",
            Self::Endnote => "endnote",
        }
    }
}

/// Display fields of one corrected entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderItem {
    pub ordinal: usize,
    pub key: String,
    pub kind: EntryKind,
    pub title: Option<String>,
    pub authors: Vec<Author>,
    pub year: Option<i32>,
    pub venue: Option<String>,
    pub volume: Option<String>,
    pub pages: Option<String>,
    pub doi: Option<String>,
    pub pmid: Option<String>,
    pub arxiv_id: Option<String>,
    pub corrected: bool,
}

fn original_bib_field(entry: &ReferenceInput, name: &str) -> Option<String> {
    if entry.raw.origin_format != OriginFormat::Bibtex {
        return None;
    }
    let parsed = parse_bibtex(&entry.raw.original_text);
    parsed.entries.first()?.field(name).map(|f| f.value.clone()).filter(|v| !v.trim().is_empty())
}

/// Entry fields overlaid with the chosen record, when there is one.
pub fn corrected_item(entry: &ReferenceInput, chosen: Option<&CandidateRecord>, key: String) -> RenderItem {
    let mut item = RenderItem {
        ordinal: entry.ordinal(),
        key,
        kind: entry.entry_kind,
        title: entry.title.clone(),
        authors: entry.authors.clone(),
        year: entry.year,
        venue: entry.venue.clone(),
        volume: original_bib_field(entry, "volume"),
        pages: original_bib_field(entry, "pages"),
        doi: entry.doi.clone(),
        pmid: entry.pmid.clone(),
        arxiv_id: entry.arxiv_id.clone(),
        corrected: false,
    };
    if let Some(c) = chosen {
        item.corrected = true;
        if !c.title.trim().is_empty() {
            item.title = Some(c.title.clone());
        }
        if !c.authors.is_empty() {
            item.authors = c.authors.clone();
        }
        item.year = c.year.or(item.year);
        item.venue = c.venue.clone().or(item.venue);
        item.volume = c.volume.clone().or(item.volume);
        item.pages = c.pages.clone().or(item.pages);
        item.doi = c.doi.clone().or(item.doi);
        item.pmid = c.pmid.clone().or(item.pmid);
        item.arxiv_id = c.arxiv_id.clone().or(item.arxiv_id);
        item.kind = match c.manifestation_kind {
            ManifestationKind::Journal => EntryKind::Journal,
            ManifestationKind::Conference => EntryKind::Conference,
            ManifestationKind::Preprint => EntryKind::Preprint,
            ManifestationKind::Unknown => item.kind,
        };
    }
    item
}

pub fn render_items(entries: &[(ReferenceInput, Option<CandidateRecord>)]) -> Vec<RenderItem> {
    let refs: Vec<&ReferenceInput> = entries.iter().map(|(e, _)| e).collect();
    let generated = assign_keys(&refs);
    entries
        .iter()
        .zip(generated)
        .map(|((e, c), g)| corrected_item(e, c.as_ref(), e.raw.citation_key.clone().unwrap_or(g)))
        .collect()
}

pub fn render_bibliography(entries: &[(ReferenceInput, Option<CandidateRecord>)], format: RenderFormat) -> String {
    let items = render_items(entries);
    match format {
        RenderFormat::Json => {
            let mut s = serde_json::to_string_pretty(&items).expect("render items serialize");
            s.push('\n');
            s
        }
        RenderFormat::Bibtex => items.iter().map(bibtex_entry).collect::<Vec<_>>().join("\n"),
        RenderFormat::NumberedText => items
            .iter()
            .enumerate()
            .map(|(i, it)| format!("[{}] {}\n", i + 1, text_line(it)))
            .collect(),
        RenderFormat::Markdown => items
            .iter()
            .enumerate()
            .map(|(i, it)| format!("{}. {}\n", i + 1, markdown_line(it)))
            .collect(),
        RenderFormat::Endnote => items.iter().map(endnote_block).collect::<Vec<_>>().join("\n"),
    }
}

/// Braced BibTeX value; unbalanced braces are dropped so the value re-parses.
pub fn bib_value(s: &str) -> String {
    let mut depth = 0usize;
    let mut out = String::with_capacity(s.len() + 2);
    out.push('{');
    let mut pending = Vec::new();
    for c in s.chars() {
        match c {
            '{' => {
                depth += 1;
                pending.push(out.len());
                out.push(c);
            }
            '}' if depth == 0 => {}
            '}' => {
                depth -= 1;
                pending.pop();
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    for at in pending.into_iter().rev() {
        out.remove(at);
    }
    out.push('}');
    out
}

pub fn bib_authors(authors: &[Author]) -> String {
    crate::extract::normalize::join_authors(authors)
}

fn venue_field(kind: EntryKind) -> &'static str {
    match kind {
        EntryKind::Journal => "journal",
        EntryKind::Conference => "booktitle",
        _ => "howpublished",
    }
}

pub fn bibtex_type(kind: EntryKind) -> &'static str {
    match kind {
        EntryKind::Journal => "article",
        EntryKind::Conference => "inproceedings",
        _ => "misc",
    }
}

pub fn bibtex_entry(it: &RenderItem) -> String {
    let mut fields: Vec<(&str, String)> = Vec::new();
    if !it.authors.is_empty() {
        fields.push(("author", bib_authors(&it.authors)));
    }
    if let Some(t) = &it.title {
        fields.push(("title", t.clone()));
    }
    if let Some(v) = &it.venue {
        fields.push((venue_field(it.kind), v.clone()));
    }
    if let Some(y) = it.year {
        fields.push(("year", y.to_string()));
    }
    for (name, v) in [("volume", &it.volume), ("pages", &it.pages), ("doi", &it.doi), ("pmid", &it.pmid)] {
        if let Some(v) = v {
            fields.push((name, v.clone()));
        }
    }
    if let Some(a) = &it.arxiv_id {
        fields.push(("eprint", a.clone()));
        fields.push(("archiveprefix", "arXiv".into()));
    }
    let body: Vec<String> = fields.iter().map(|(n, v)| format!("  {n} = {}", bib_value(v))).collect();
    format!("@{}{{{},\n{}\n}}\n", bibtex_type(it.kind), it.key, body.join(",\n"))
}

/// "Given Family"; trailing periods on initials are dropped so the line
/// does not read as a sentence break.
fn display_name(a: &Author) -> String {
    match &a.given {
        Some(g) => format!("{} {}", g.trim_end_matches('.'), a.family),
        None => a.family.clone(),
    }
}

fn text_parts(it: &RenderItem) -> Vec<String> {
    let mut parts = Vec::new();
    if !it.authors.is_empty() {
        parts.push(it.authors.iter().map(display_name).collect::<Vec<_>>().join(", "));
    }
    if let Some(t) = &it.title {
        parts.push(t.trim_end_matches('.').to_string());
    }
    match (&it.venue, it.year) {
        (Some(v), Some(y)) => parts.push(format!("{v}, {y}")),
        (Some(v), None) => parts.push(v.clone()),
        (None, Some(y)) => parts.push(y.to_string()),
        (None, None) => {}
    }
    parts
}

/// "Authors. Title. Venue, Year. doi:…"
pub fn text_line(it: &RenderItem) -> String {
    let mut parts = text_parts(it);
    if let Some(d) = &it.doi {
        parts.push(format!("doi:{d}"));
    } else if let Some(a) = &it.arxiv_id {
        parts.push(format!("arXiv:{a}"));
    }
    if let Some(p) = &it.pmid {
        parts.push(format!("PMID: {p}"));
    }
    let mut s = parts.join(". ");
    if !s.is_empty() && !s.ends_with('.') && it.doi.is_none() && it.arxiv_id.is_none() && it.pmid.is_none() {
        s.push('.');
    }
    s
}

pub fn markdown_line(it: &RenderItem) -> String {
    let mut parts = Vec::new();
    if !it.authors.is_empty() {
        parts.push(it.authors.iter().map(display_name).collect::<Vec<_>>().join(", "));
    }
    if let Some(t) = &it.title {
        parts.push(format!("*{}*", t.trim_end_matches('.')));
    }
    let rest = text_parts(&RenderItem {
        authors: vec![],
        title: None,
        ..it.clone()
    });
    parts.extend(rest);
    if let Some(d) = &it.doi {
        parts.push(format!("[doi:{d}](https://doi.org/{d})"));
    } else if let Some(a) = &it.arxiv_id {
        parts.push(format!("[arXiv:{a}](https://arxiv.org/abs/{a})"));
    }
    if let Some(p) = &it.pmid {
        parts.push(format!("[PMID: {p}](https://pubmed.ncbi.nlm.nih.gov/{p}/)"));
    }
    parts.join(". ")
}

pub fn endnote_block(it: &RenderItem) -> String {
    let kind = match it.kind {
        EntryKind::Journal => "Journal Article",
        EntryKind::Conference => "Conference Proceedings",
        EntryKind::Book => "Book",
        _ => "Generic",
    };
    let mut s = format!("%0 {kind}\n");
    for a in &it.authors {
        match &a.given {
            Some(g) => s.push_str(&format!("%A {}, {g}\n", a.family)),
            None => s.push_str(&format!("%A {}\n", a.family)),
        }
    }
    if let Some(t) = &it.title {
        s.push_str(&format!("%T {t}\n"));
    }
    if let Some(v) = &it.venue {
        let tag = if it.kind == EntryKind::Conference { "%B" } else { "%J" };
        s.push_str(&format!("{tag} {v}\n"));
    }
    if let Some(y) = it.year {
        s.push_str(&format!("%D {y}\n"));
    }
    if let Some(v) = &it.volume {
        s.push_str(&format!("%V {v}\n"));
    }
    if let Some(p) = &it.pages {
        s.push_str(&format!("%P {p}\n"));
    }
    if let Some(d) = &it.doi {
        s.push_str(&format!("%R {d}\n"));
    }
    s.push_str(&format!("%F {}\n", it.key));
    s
}
