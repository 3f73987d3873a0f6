//! arXiv `/api/query` Atom feed.
//!
//! Fields read per `<entry>`: `id` (abs URL carrying the versioned id),
//! `title`, `published`, `author/name`, `arxiv:doi`, `arxiv:journal_ref`.
//! Entries whose id points at `/api/errors` are skipped.

use quick_xml::events::Event;
use quick_xml::Reader;

use super::transport::Request;
use super::{
    check_response, first_year, make_record, malformed, run_step, CandidateRecord, FailureClass, IdKind,
    ManifestationKind, Query, QueryKind, RelatedId, SourceConfig, SourceName, Step, Transport,
};
use crate::extract::normalize::parse_name;

fn phrase(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() || c == ' ' || c == '-' { c } else { ' ' })
        .collect();
    crate::text::squash_whitespace(&cleaned)
}

pub fn search_query(query: &Query) -> Option<String> {
    Some(match query.kind {
        QueryKind::DoiLookup | QueryKind::PmidLookup | QueryKind::ArxivLookup => return None,
        QueryKind::TitleSearch => format!("ti:\"{}\"", phrase(&query.text)),
        QueryKind::TitleAuthorSearch => match &query.author {
            Some(a) => format!("ti:\"{}\" AND au:{}", phrase(&query.text), phrase(a).replace(' ', "_")),
            None => format!("ti:\"{}\"", phrase(&query.text)),
        },
        QueryKind::RelaxedSearch => phrase(&query.text)
            .split(' ')
            .filter(|w| !w.is_empty())
            .map(|w| format!("ti:{w}"))
            .collect::<Vec<_>>()
            .join(" AND "),
    })
}

pub fn build_request(query: &Query, cfg: &SourceConfig) -> Option<Request> {
    let base = cfg.base_url(SourceName::Arxiv);
    let req = Request::new(SourceName::Arxiv, base, "/api/query");
    Some(match query.kind {
        QueryKind::ArxivLookup => {
            let (id, _) = crate::ids::normalize_arxiv(&query.text)?;
            req.param("id_list", id).param("max_results", "1")
        }
        _ => req
            .param("search_query", search_query(query)?)
            .param("start", "0")
            .param("max_results", query.limit().to_string()),
    })
}

pub(crate) fn run(query: &Query, cfg: &SourceConfig, t: &dyn Transport) -> (Result<Vec<CandidateRecord>, FailureClass>, Vec<Step>) {
    let Some(req) = build_request(query, cfg) else {
        return (Ok(Vec::new()), Vec::new());
    };
    let step = run_step(t, &req);
    let result = check_response(&step).and_then(|b| parse_feed(b, &step.key));
    (result, vec![step])
}

#[derive(Default)]
struct EntryAcc {
    id: String,
    title: String,
    published: String,
    authors: Vec<String>,
    doi: String,
    journal_ref: String,
}

pub fn parse_feed(body: &[u8], provenance: &str) -> Result<Vec<CandidateRecord>, FailureClass> {
    let text = std::str::from_utf8(body).map_err(|e| malformed(format!("arxiv: {e}")))?;
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<String> = Vec::new();
    let mut saw_feed = false;
    let mut current: Option<EntryAcc> = None;
    let mut entries = Vec::new();
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if stack.is_empty() {
                    if name != "feed" {
                        return Err(malformed("arxiv: root element is not <feed>"));
                    }
                    saw_feed = true;
                }
                if name == "entry" {
                    current = Some(EntryAcc::default());
                }
                stack.push(name);
            }
            Ok(Event::End(_)) => {
                if stack.pop().as_deref() == Some("entry") {
                    if let Some(acc) = current.take() {
                        entries.push(acc);
                    }
                }
            }
            Ok(Event::Empty(e)) => {
                if stack.is_empty() {
                    return Err(malformed("arxiv: root element is not <feed>"));
                }
                let _ = e;
            }
            Ok(Event::Text(t)) => {
                let s = t.unescape().map_err(|e| malformed(format!("arxiv xml: {e}")))?;
                if let Some(acc) = current.as_mut() {
                    let n = stack.len();
                    let leaf = stack.last().map(String::as_str);
                    let parent = if n >= 2 { Some(stack[n - 2].as_str()) } else { None };
                    match (parent, leaf) {
                        (Some("entry"), Some("id")) => acc.id.push_str(&s),
                        (Some("entry"), Some("title")) => acc.title.push_str(&s),
                        (Some("entry"), Some("published")) => acc.published.push_str(&s),
                        (Some("entry"), Some("doi")) => acc.doi.push_str(&s),
                        (Some("entry"), Some("journal_ref")) => acc.journal_ref.push_str(&s),
                        (Some("author"), Some("name")) => acc.authors.push(s.trim().to_string()),
                        _ => {}
                    }
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(malformed(format!("arxiv xml: {e}"))),
        }
    }
    if !saw_feed || !stack.is_empty() {
        return Err(malformed("arxiv: truncated or missing <feed>"));
    }
    let mut out = Vec::new();
    for acc in entries {
        if acc.id.contains("/api/errors") {
            continue;
        }
        let Some((id, _)) = crate::ids::normalize_arxiv(acc.id.trim()) else {
            continue;
        };
        let authors = acc.authors.iter().filter_map(|a| parse_name(a)).collect();
        let venue = (!acc.journal_ref.trim().is_empty()).then(|| acc.journal_ref.trim().to_string());
        let mut rec = make_record(
            SourceName::Arxiv,
            id.clone(),
            &acc.title,
            authors,
            first_year(&acc.published),
            venue,
            None,
            None,
            Some(&id),
            ManifestationKind::Preprint,
            provenance,
        );
        if let Some(r) = RelatedId::new(IdKind::Doi, acc.doi.trim()) {
            rec.related_ids.push(r);
        }
        out.push(rec);
    }
    Ok(out)
}
