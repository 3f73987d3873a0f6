//! Tolerant BibTeX parser that keeps byte spans for rewriting.
//!
//! Malformed entries are reported and skipped: parsing resumes at the next
//! `@`. `@string` macros are expanded, `@comment` and `@preamble` are skipped.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::RawFields;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibField {
    pub name: String,
    /// Value after macro expansion and concatenation, outer delimiters removed.
    pub value: String,
    /// `name = value` including both ends.
    pub span: (usize, usize),
    pub value_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibEntry {
    pub entry_type: String,
    pub key: String,
    pub key_span: (usize, usize),
    /// From `@` through the closing delimiter.
    pub span: (usize, usize),
    pub fields: Vec<BibField>,
}

impl BibEntry {
    pub fn field(&self, name: &str) -> Option<&BibField> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// First occurrence of each field wins.
    pub fn raw_fields(&self) -> RawFields {
        let mut values = BTreeMap::new();
        for f in &self.fields {
            values.entry(f.name.clone()).or_insert_with(|| f.value.clone());
        }
        RawFields {
            entry_type: Some(self.entry_type.clone()),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibError {
    /// From `@` up to the resumption point, trailing whitespace excluded.
    pub span: (usize, usize),
    pub message: String,
    pub key: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BibParse {
    pub entries: Vec<BibEntry>,
    pub errors: Vec<BibError>,
}

const MONTHS: [(&str, &str); 12] = [
    ("jan", "January"),
    ("feb", "February"),
    ("mar", "March"),
    ("apr", "April"),
    ("may", "May"),
    ("jun", "June"),
    ("jul", "July"),
    ("aug", "August"),
    ("sep", "September"),
    ("oct", "October"),
    ("nov", "November"),
    ("dec", "December"),
];

pub fn parse_bibtex(text: &str) -> BibParse {
    let mut p = Parser {
        src: text,
        b: text.as_bytes(),
        pos: 0,
        macros: MONTHS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        key: None,
    };
    let mut out = BibParse::default();
    while let Some(at) = p.find_from(p.pos, b'@') {
        p.pos = at + 1;
        p.key = None;
        match p.item(at) {
            Ok(Some(entry)) => out.entries.push(entry),
            Ok(None) => {}
            Err(message) => {
                let resume = p.find_from(at + 1, b'@').unwrap_or(text.len());
                let end = at + text[at..resume].trim_end().len();
                out.errors.push(BibError {
                    span: (at, end.max(at + 1)),
                    message,
                    key: p.key.take(),
                });
                p.pos = resume;
            }
        }
    }
    out
}

type PResult<T> = Result<T, String>;

struct Parser<'a> {
    src: &'a str,
    b: &'a [u8],
    pos: usize,
    macros: HashMap<String, String>,
    key: Option<String>,
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'-' | b':' | b'.' | b'+' | b'/')
}

fn is_key_char(c: u8) -> bool {
    !c.is_ascii_whitespace() && !matches!(c, b',' | b'{' | b'}' | b'(' | b')' | b'"' | b'=' | b'#' | b'%')
}

impl Parser<'_> {
    fn find_from(&self, from: usize, needle: u8) -> Option<usize> {
        self.b.get(from..)?.iter().position(|&c| c == needle).map(|i| i + from)
    }

    fn peek(&self) -> Option<u8> {
        self.b.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> (usize, usize) {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        (start, self.pos)
    }

    fn expect(&mut self, c: u8, what: &str) -> PResult<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected {what} at byte {}", self.pos))
        }
    }

    /// A line that starts a new entry cannot be part of a value.
    fn at_entry_line_start(&self, newline: usize) -> bool {
        let mut i = newline + 1;
        while i < self.b.len() && matches!(self.b[i], b' ' | b'\t' | b'\r') {
            i += 1;
        }
        i + 1 < self.b.len() && self.b[i] == b'@' && self.b[i + 1].is_ascii_alphabetic()
    }

    fn item(&mut self, at: usize) -> PResult<Option<BibEntry>> {
        self.skip_ws();
        let (s, e) = self.take_while(|c| c.is_ascii_alphanumeric() || c == b'_');
        if s == e {
            return Err("expected entry type after '@'".into());
        }
        let entry_type = self.src[s..e].to_ascii_lowercase();
        self.skip_ws();
        let close = match self.peek() {
            Some(b'{') => b'}',
            Some(b'(') => b')',
            _ => return Err(format!("expected '{{' or '(' after @{entry_type}")),
        };
        let open_pos = self.pos;
        self.pos += 1;
        match entry_type.as_str() {
            "comment" => {
                self.pos = open_pos;
                self.balanced(close)?;
                Ok(None)
            }
            "preamble" => {
                self.value()?;
                self.expect(close, "closing delimiter")?;
                Ok(None)
            }
            "string" => {
                self.skip_ws();
                let (s, e) = self.take_while(is_ident);
                if s == e {
                    return Err("expected macro name in @string".into());
                }
                let name = self.src[s..e].to_ascii_lowercase();
                self.expect(b'=', "'=' in @string")?;
                let (value, _) = self.value()?;
                self.expect(close, "closing delimiter")?;
                self.macros.insert(name, value);
                Ok(None)
            }
            _ => self.entry(at, entry_type, close).map(Some),
        }
    }

    fn entry(&mut self, at: usize, entry_type: String, close: u8) -> PResult<BibEntry> {
        self.skip_ws();
        let key_span = self.take_while(is_key_char);
        let key = self.src[key_span.0..key_span.1].to_string();
        if !key.is_empty() {
            self.key = Some(key.clone());
        }
        self.skip_ws();
        let mut fields = Vec::new();
        match self.peek() {
            Some(c) if c == close => {
                self.pos += 1;
            }
            Some(b',') => {
                self.pos += 1;
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return Err("unterminated entry".into()),
                        Some(c) if c == close => {
                            self.pos += 1;
                            break;
                        }
                        _ => {}
                    }
                    let field_start = self.pos;
                    let (s, e) = self.take_while(is_ident);
                    if s == e {
                        return Err(format!("expected field name at byte {}", self.pos));
                    }
                    let name = self.src[s..e].to_ascii_lowercase();
                    self.expect(b'=', "'=' after field name")?;
                    self.skip_ws();
                    let (value, value_span) = self.value()?;
                    fields.push(BibField {
                        name,
                        value,
                        span: (field_start, value_span.1),
                        value_span,
                    });
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(c) if c == close => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(format!("expected ',' or closing delimiter at byte {}", self.pos)),
                    }
                }
            }
            _ => return Err(format!("expected ',' after key at byte {}", self.pos)),
        }
        if key.is_empty() {
            return Err("entry has no citation key".into());
        }
        Ok(BibEntry {
            entry_type,
            key,
            key_span,
            span: (at, self.pos),
            fields,
        })
    }

    /// Skip a balanced `{...}` or `(...)` group starting at the current byte.
    fn balanced(&mut self, close: u8) -> PResult<()> {
        let open = self.b[self.pos];
        let mut depth = 0usize;
        while let Some(c) = self.peek() {
            self.pos += 1;
            if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    return Ok(());
                }
            }
        }
        Err("unbalanced delimiters".into())
    }

    /// Returns the expanded value and the span of its raw text.
    fn value(&mut self) -> PResult<(String, (usize, usize))> {
        let start = self.pos;
        let mut out = String::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'{') => {
                    let inner = self.delimited(b'}')?;
                    out.push_str(inner);
                }
                Some(b'"') => {
                    let inner = self.delimited(b'"')?;
                    out.push_str(inner);
                }
                Some(c) if c.is_ascii_digit() => {
                    let (s, e) = self.take_while(|c| c.is_ascii_digit());
                    out.push_str(&self.src[s..e]);
                }
                Some(c) if c.is_ascii_alphabetic() => {
                    let (s, e) = self.take_while(is_ident);
                    let name = self.src[s..e].to_ascii_lowercase();
                    match self.macros.get(&name) {
                        Some(v) => out.push_str(v),
                        None => out.push_str(&self.src[s..e]),
                    }
                }
                _ => return Err(format!("expected field value at byte {}", self.pos)),
            }
            let end = self.pos;
            self.skip_ws();
            if self.peek() == Some(b'#') {
                self.pos += 1;
                continue;
            }
            return Ok((out, (start, end)));
        }
    }

    /// Content between an opening `{`/`"` at the cursor and its matching close.
    fn delimited(&mut self, close: u8) -> PResult<&str> {
        let open_at = self.pos;
        self.pos += 1;
        let start = self.pos;
        let mut depth = 0i32;
        while let Some(c) = self.peek() {
            match c {
                b'\\' => {
                    self.pos += 2;
                    continue;
                }
                b'\n' if self.at_entry_line_start(self.pos) => {
                    return Err(format!("unterminated value starting at byte {open_at}"));
                }
                b'{' => depth += 1,
                b'}' if depth > 0 => depth -= 1,
                _ if c == close && depth == 0 => {
                    let s = &self.src[start..self.pos];
                    self.pos += 1;
                    return Ok(s);
                }
                b'}' => return Err(format!("unbalanced '}}' at byte {}", self.pos)),
                _ => {}
            }
            self.pos += 1;
        }
        self.pos = self.pos.min(self.b.len());
        Err(format!("unterminated value starting at byte {open_at}"))
    }
}
