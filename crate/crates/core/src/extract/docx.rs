//! Paragraph text from Office Open XML documents.

use std::io::{Cursor, Read};

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{Error, Result};

/// Text of every `w:p` in `word/document.xml`, runs concatenated, in
/// document order. Table cells come out row by row since that is their
/// order in the XML.
pub fn extract_docx_text(bytes: &[u8]) -> Result<Vec<String>> {
    let mut archive =
        zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| Error::CorruptArchive(e.to_string()))?;
    let mut xml = String::new();
    {
        let mut part = match archive.by_name("word/document.xml") {
            Ok(p) => p,
            Err(zip::result::ZipError::FileNotFound) => return Err(Error::MissingDocumentPart),
            Err(e) => return Err(Error::CorruptArchive(e.to_string())),
        };
        part.read_to_string(&mut xml)
            .map_err(|e| Error::CorruptArchive(e.to_string()))?;
    }
    paragraphs(&xml)
}

fn paragraphs(xml: &str) -> Result<Vec<String>> {
    let mut reader = Reader::from_str(xml);
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    let mut in_text = false;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => match e.local_name().as_ref() {
                b"p" => current = Some(String::new()),
                b"t" => in_text = true,
                b"tab" => push(&mut current, "\t"),
                _ => {}
            },
            Ok(Event::Empty(e)) => match e.local_name().as_ref() {
                b"p" => out.push(String::new()),
                b"tab" => push(&mut current, "\t"),
                b"br" => push(&mut current, " "),
                _ => {}
            },
            Ok(Event::End(e)) => match e.local_name().as_ref() {
                b"p" => {
                    if let Some(p) = current.take() {
                        out.push(p);
                    }
                }
                b"t" => in_text = false,
                _ => {}
            },
            Ok(Event::Text(t)) if in_text => {
                let s = t.unescape().map_err(|e| Error::CorruptArchive(e.to_string()))?;
                push(&mut current, &s);
            }
            Ok(Event::CData(t)) if in_text => {
                push(&mut current, &String::from_utf8_lossy(&t));
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(Error::CorruptArchive(e.to_string())),
        }
    }
    Ok(out)
}

fn push(current: &mut Option<String>, s: &str) {
    if let Some(p) = current.as_mut() {
        p.push_str(s);
    }
}

/// Build a minimal `.docx` holding the given paragraphs. Used by tests and
/// fixture generation.
pub fn build_docx(paragraphs: &[&str]) -> Vec<u8> {
    use std::io::Write;
    let mut body = String::new();
    for p in paragraphs {
        body.push_str("<w:p><w:r><w:t xml:space=\"preserve\">");
        body.push_str(&quick_xml::escape::escape(*p));
        body.push_str("</w:t></w:r></w:p>");
    }
    let doc = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n<w:document xmlns:w=\"http://schemas.openxmlformats.org/wordprocessingml/2006/main\"><w:body>{body}</w:body></w:document>"
    );
    let mut buf = Cursor::new(Vec::new());
    {
        let mut zw = zip::ZipWriter::new(&mut buf);
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated)
            .last_modified_time(zip::DateTime::default());
        zw.start_file("[Content_Types].xml", opts).unwrap();
        zw.write_all(CONTENT_TYPES.as_bytes()).unwrap();
        zw.start_file("word/document.xml", opts).unwrap();
        zw.write_all(doc.as_bytes()).unwrap();
        zw.finish().unwrap();
    }
    buf.into_inner()
}

const CONTENT_TYPES: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?><Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\"><Default Extension=\"xml\" ContentType=\"application/xml\"/><Override PartName=\"/word/document.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.wordprocessingml.document.main+xml\"/></Types>";
