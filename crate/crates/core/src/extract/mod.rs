//! Reference extraction from `.bib`, `.tex`, `.md`, `.txt` and `.docx` artifacts.

pub mod bibtex;
pub mod docx;
pub mod lint;
pub mod normalize;
pub mod plain;
pub mod tex;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use lint::{lint_bibliography, LintCode, LintFinding, Severity};
pub use normalize::normalize_reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginFormat {
    Bibtex,
    Tex,
    Markdown,
    Plaintext,
    Docx,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReference {
    /// Path of the file holding the text, relative to the extraction root.
    pub source_file: String,
    pub source_span: (usize, usize),
    pub original_text: String,
    pub origin_format: OriginFormat,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub citation_key: Option<String>,
    pub ordinal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Journal,
    Conference,
    Preprint,
    Book,
    Other,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Author {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub given: Option<String>,
}

impl Author {
    pub fn new(family: impl Into<String>, given: Option<&str>) -> Self {
        Author {
            family: family.into(),
            given: given.map(str::to_owned).filter(|g| !g.is_empty()),
        }
    }
}

/// Local defect noticed while normalizing; surfaced by the linter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Anomaly {
    MalformedDoi { value: String },
    SuspiciousYear { value: String },
    ControlChars { field: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInput {
    pub title: Option<String>,
    pub authors: Vec<Author>,
    pub year: Option<i32>,
    pub venue: Option<String>,
    pub doi: Option<String>,
    pub pmid: Option<String>,
    pub arxiv_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub arxiv_version: Option<u32>,
    pub entry_kind: EntryKind,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub anomalies: Vec<Anomaly>,
    pub raw: RawReference,
}

impl ReferenceInput {
    pub fn ordinal(&self) -> usize {
        self.raw.ordinal
    }

    pub fn has_identifier(&self) -> bool {
        self.doi.is_some() || self.pmid.is_some() || self.arxiv_id.is_some()
    }

    /// Field map equivalent to this entry's display values, in the shape
    /// [`normalize_reference`] accepts.
    pub fn to_fields(&self) -> RawFields {
        let mut values = BTreeMap::new();
        if let Some(t) = &self.title {
            values.insert("title".into(), t.clone());
        }
        if !self.authors.is_empty() {
            values.insert("author".into(), normalize::join_authors(&self.authors));
        }
        if let Some(y) = self.year {
            values.insert("year".into(), y.to_string());
        }
        let venue_field = match self.entry_kind {
            EntryKind::Conference => "booktitle",
            EntryKind::Book => "publisher",
            EntryKind::Journal => "journal",
            _ => "howpublished",
        };
        if let Some(v) = &self.venue {
            values.insert(venue_field.into(), v.clone());
        }
        if let Some(d) = &self.doi {
            values.insert("doi".into(), d.clone());
        } else if let Some(Anomaly::MalformedDoi { value }) =
            self.anomalies.iter().find(|a| matches!(a, Anomaly::MalformedDoi { .. }))
        {
            values.insert("doi".into(), value.clone());
        }
        if let Some(p) = &self.pmid {
            values.insert("pmid".into(), p.clone());
        }
        if let Some(a) = &self.arxiv_id {
            let v = self.arxiv_version.map(|v| format!("v{v}")).unwrap_or_default();
            values.insert("eprint".into(), format!("{a}{v}"));
            values.insert("archiveprefix".into(), "arXiv".into());
        }
        let entry_type = match self.entry_kind {
            EntryKind::Journal => Some("article"),
            EntryKind::Conference => Some("inproceedings"),
            EntryKind::Book => Some("book"),
            EntryKind::Preprint | EntryKind::Other => Some("misc"),
            EntryKind::Unknown => None,
        };
        RawFields {
            entry_type: entry_type.map(str::to_owned),
            values,
        }
    }
}

/// Unnormalized field values for one entry. `entry_type` is the lowercase
/// BibTeX type, absent for free-text references.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFields {
    pub entry_type: Option<String>,
    pub values: BTreeMap<String, String>,
}

impl RawFields {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub raw: RawReference,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub artifact: String,
    pub format: OriginFormat,
    pub entries: Vec<ReferenceInput>,
    pub rejected: Vec<Rejected>,
    pub section_span: Option<(usize, usize)>,
    pub bib_resources: Vec<String>,
    pub lint: Vec<LintFinding>,
}

pub fn format_for_extension(ext: &str) -> Option<OriginFormat> {
    match ext.to_ascii_lowercase().as_str() {
        "bib" => Some(OriginFormat::Bibtex),
        "tex" => Some(OriginFormat::Tex),
        "md" | "markdown" => Some(OriginFormat::Markdown),
        "txt" => Some(OriginFormat::Plaintext),
        "docx" => Some(OriginFormat::Docx),
        _ => None,
    }
}

/// Extract from a single file; entry paths are relative to its directory.
pub fn extract_references(artifact_path: &Path) -> Result<ExtractionResult> {
    let name = artifact_path
        .file_name()
        .ok_or_else(|| Error::UnsupportedFormat(artifact_path.display().to_string()))?
        .to_string_lossy()
        .into_owned();
    let root = match artifact_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    extract_references_at(&root, &name)
}

/// Extract `rel_path` (forward-slash, relative to `root`).
pub fn extract_references_at(root: &Path, rel_path: &str) -> Result<ExtractionResult> {
    let path = root.join(rel_path);
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_default();
    let format = format_for_extension(&ext).ok_or_else(|| Error::UnsupportedFormat(ext.clone()))?;

    let mut builder = Builder::default();
    let mut section_span = None;
    let mut bib_resources = Vec::new();
    let mut extra_lint = Vec::new();

    match format {
        OriginFormat::Bibtex => {
            let text = read_text(&path)?;
            builder.add_bibtex(rel_path, &text);
        }
        OriginFormat::Tex => {
            let text = read_text(&path)?;
            let base = path.parent().unwrap_or(root);
            let rel_dir = parent_rel(rel_path);
            let directives = tex::bib_directives(&text);
            let resolved = tex::resolve_tex_bib_resources(&text, base);
            for name in directives {
                let candidate = base.join(&name);
                if !resolved.contains(&candidate) {
                    extra_lint.push(LintFinding {
                        code: LintCode::MissingField,
                        entry_ordinal: 0,
                        message: format!("bibliography resource not found: {name}"),
                        severity: Severity::Warning,
                    });
                }
            }
            for res in &resolved {
                let rel = join_rel(&rel_dir, &res.strip_prefix(base).unwrap_or(res).to_string_lossy());
                let bib = read_text(res)?;
                builder.add_bibtex(&rel, &bib);
                if !bib_resources.contains(&rel) {
                    bib_resources.push(rel);
                }
            }
            if let Some(env) = tex::find_bibitems(&text) {
                section_span = Some(env.span);
                for item in env.items {
                    builder.add_free_text(rel_path, &text, item, OriginFormat::Tex, tex::clean_bibitem);
                }
            }
        }
        OriginFormat::Markdown | OriginFormat::Plaintext => {
            let text = read_text(&path)?;
            section_span = builder.add_section(rel_path, &text, format);
        }
        OriginFormat::Docx => {
            let bytes = fs::read(&path).map_err(|source| Error::UnreadableFile {
                path: path.clone(),
                source,
            })?;
            let text = docx::extract_docx_text(&bytes)?.join("\n");
            section_span = builder.add_section(rel_path, &text, format);
        }
    }

    let mut lint = lint_bibliography(&builder.entries);
    lint.extend(extra_lint);
    for r in &builder.rejected {
        lint.push(LintFinding {
            code: LintCode::EmptyEntry,
            entry_ordinal: r.raw.ordinal,
            message: r.reason.clone(),
            severity: Severity::Error,
        });
    }
    lint::sort_findings(&mut lint);

    Ok(ExtractionResult {
        artifact: rel_path.to_string(),
        format,
        entries: builder.entries,
        rejected: builder.rejected,
        section_span,
        bib_resources,
        lint,
    })
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

fn parent_rel(rel: &str) -> String {
    match rel.rfind('/') {
        Some(i) => rel[..i].to_string(),
        None => String::new(),
    }
}

fn join_rel(dir: &str, name: &str) -> String {
    let name = name.replace('\\', "/");
    if dir.is_empty() {
        name
    } else {
        format!("{dir}/{name}")
    }
}

#[derive(Default)]
struct Builder {
    entries: Vec<ReferenceInput>,
    rejected: Vec<Rejected>,
    next_ordinal: usize,
}

impl Builder {
    fn raw(&mut self, file: &str, text: &str, span: (usize, usize), format: OriginFormat, key: Option<String>) -> RawReference {
        self.next_ordinal += 1;
        RawReference {
            source_file: file.to_string(),
            source_span: span,
            original_text: text[span.0..span.1].to_string(),
            origin_format: format,
            citation_key: key,
            ordinal: self.next_ordinal,
        }
    }

    fn push(&mut self, raw: RawReference, fields: &RawFields) {
        match normalize_reference(raw.clone(), fields) {
            Ok(entry) => self.entries.push(entry),
            Err(reason) => self.rejected.push(Rejected { raw, reason }),
        }
    }

    fn add_bibtex(&mut self, file: &str, text: &str) {
        let parsed = bibtex::parse_bibtex(text);
        let mut items: Vec<(usize, Result<&bibtex::BibEntry, &bibtex::BibError>)> = parsed
            .entries
            .iter()
            .map(|e| (e.span.0, Ok(e)))
            .chain(parsed.errors.iter().map(|e| (e.span.0, Err(e))))
            .collect();
        items.sort_by_key(|(start, _)| *start);
        for (_, item) in items {
            match item {
                Ok(entry) => {
                    let raw = self.raw(file, text, entry.span, OriginFormat::Bibtex, Some(entry.key.clone()));
                    self.push(raw, &entry.raw_fields());
                }
                Err(err) => {
                    let raw = self.raw(file, text, err.span, OriginFormat::Bibtex, err.key.clone());
                    self.rejected.push(Rejected {
                        raw,
                        reason: format!("parse error: {}", err.message),
                    });
                }
            }
        }
    }

    fn add_free_text(
        &mut self,
        file: &str,
        text: &str,
        span: (usize, usize),
        format: OriginFormat,
        clean: fn(&str) -> String,
    ) {
        let raw = self.raw(file, text, span, format, None);
        let fields = plain::parse_free_text(&clean(&raw.original_text));
        self.push(raw, &fields);
    }

    fn add_section(&mut self, file: &str, text: &str, format: OriginFormat) -> Option<(usize, usize)> {
        let section = plain::detect_reference_section(text)?;
        let clean: fn(&str) -> String = match format {
            OriginFormat::Markdown => plain::strip_markdown,
            _ => str::to_owned,
        };
        for span in plain::segment_references(text, section) {
            self.add_free_text(file, text, span, format, clean);
        }
        Some(section)
    }
}
