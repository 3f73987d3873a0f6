//! Crossref REST `/works` route.
//!
//! Fields read from each work: `DOI`, `title[0]`, `author[].family/given/name`,
//! `issued.date-parts[0][0]` (falling back to `published-print`,
//! `published-online`), `container-title[0]`, `type`, `volume`, `page`,
//! and `relation` entries whose `id-type` is `doi` or `arxiv`.

use serde_json::Value;

use super::transport::{encode_path, Request};
use super::{
    check_response, make_record, malformed, run_step, CandidateRecord, FailureClass, IdKind, ManifestationKind,
    Query, QueryKind, RelatedId, SourceConfig, SourceName, Step, Transport,
};
use crate::extract::Author;

pub fn build_request(query: &Query, cfg: &SourceConfig) -> Option<Request> {
    let base = cfg.base_url(SourceName::Crossref);
    let mut req = match query.kind {
        QueryKind::DoiLookup => Request::new(SourceName::Crossref, base, format!("/works/{}", encode_path(&query.text))),
        QueryKind::TitleSearch | QueryKind::RelaxedSearch | QueryKind::TitleAuthorSearch => {
            let mut text = query.text.clone();
            if let Some(y) = query.year {
                text.push_str(&format!(" {y}"));
            }
            let mut r = Request::new(SourceName::Crossref, base, "/works")
                .param("query.bibliographic", text)
                .param("rows", query.limit().to_string());
            if query.kind == QueryKind::TitleAuthorSearch {
                if let Some(a) = &query.author {
                    r = r.param("query.author", a.clone());
                }
            }
            r
        }
        QueryKind::PmidLookup | QueryKind::ArxivLookup => return None,
    };
    if let Some(m) = &cfg.crossref_mailto {
        req.secret_params.push(("mailto".into(), m.clone()));
        req.headers.push((
            "User-Agent".into(),
            format!("citecheck/{} (mailto:{m})", env!("CARGO_PKG_VERSION")),
        ));
    }
    Some(req)
}

pub(crate) fn run(query: &Query, cfg: &SourceConfig, t: &dyn Transport) -> (Result<Vec<CandidateRecord>, FailureClass>, Vec<Step>) {
    let Some(req) = build_request(query, cfg) else {
        return (Ok(Vec::new()), Vec::new());
    };
    let step = run_step(t, &req);
    let result = check_response(&step).and_then(|body| parse(body, &step.key, query.kind == QueryKind::DoiLookup));
    (result, vec![step])
}

pub fn parse(body: &[u8], provenance: &str, single: bool) -> Result<Vec<CandidateRecord>, FailureClass> {
    let v: Value = serde_json::from_slice(body).map_err(|e| malformed(format!("crossref json: {e}")))?;
    let message = v.get("message").ok_or_else(|| malformed("crossref: missing `message`"))?;
    let works: Vec<&Value> = if single {
        vec![message]
    } else {
        message
            .get("items")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("crossref: missing `message.items`"))?
            .iter()
            .collect()
    };
    let mut out = Vec::new();
    for w in works {
        if !w.is_object() {
            return Err(malformed("crossref: work is not an object"));
        }
        if let Some(r) = parse_work(w, provenance) {
            out.push(r);
        }
    }
    Ok(out)
}

fn first_str(v: &Value, key: &str) -> Option<String> {
    match v.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Array(a) => a.first().and_then(Value::as_str).map(str::to_owned),
        _ => None,
    }
}

fn date_year(v: &Value) -> Option<i32> {
    for key in ["issued", "published-print", "published-online", "published"] {
        let y = v
            .get(key)
            .and_then(|d| d.get("date-parts"))
            .and_then(|p| p.get(0))
            .and_then(|p| p.get(0))
            .and_then(Value::as_i64);
        if let Some(y) = y {
            return Some(y as i32);
        }
    }
    None
}

pub fn kind_for_type(ty: &str) -> ManifestationKind {
    match ty {
        "journal-article" => ManifestationKind::Journal,
        "proceedings-article" => ManifestationKind::Conference,
        "posted-content" => ManifestationKind::Preprint,
        _ => ManifestationKind::Unknown,
    }
}

fn parse_work(w: &Value, provenance: &str) -> Option<CandidateRecord> {
    let doi = w.get("DOI").and_then(Value::as_str)?;
    let title = first_str(w, "title").unwrap_or_default();
    let authors = w
        .get("author")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|p| {
                    let family = p.get("family").and_then(Value::as_str);
                    let given = p.get("given").and_then(Value::as_str);
                    match (family, p.get("name").and_then(Value::as_str)) {
                        (Some(f), _) => Some(Author::new(f, given)),
                        (None, Some(n)) => Some(Author::new(n, None)),
                        _ => None,
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let ty = w.get("type").and_then(Value::as_str).unwrap_or("");
    let mut rec = make_record(
        SourceName::Crossref,
        String::new(),
        &title,
        authors,
        date_year(w),
        first_str(w, "container-title"),
        Some(doi),
        None,
        None,
        kind_for_type(ty),
        provenance,
    );
    rec.source_id = rec.doi.clone()?;
    rec.volume = w.get("volume").and_then(Value::as_str).map(str::to_owned);
    rec.pages = w.get("page").and_then(Value::as_str).map(str::to_owned);
    if let Some(rel) = w.get("relation").and_then(Value::as_object) {
        for links in rel.values() {
            for l in links.as_array().into_iter().flatten() {
                let id = l.get("id").and_then(Value::as_str).unwrap_or("");
                let kind = match l.get("id-type").and_then(Value::as_str) {
                    Some("doi") => IdKind::Doi,
                    Some("arxiv") => IdKind::Arxiv,
                    _ => continue,
                };
                if let Some(r) = RelatedId::new(kind, id) {
                    if !rec.related_ids.contains(&r) && rec.doi.as_deref() != Some(r.value.as_str()) {
                        rec.related_ids.push(r);
                    }
                }
            }
        }
    }
    rec.related_ids.sort();
    Some(rec)
}
