//! PubMed E-utilities: `esearch.fcgi` for ids, then `esummary.fcgi` for records.
//!
//! Fields read: `esearchresult.idlist`; from each `result.<uid>`: `title`,
//! `authors[].name` (Vancouver "Family AB"), `pubdate`, `fulljournalname`
//! (else `source`), `volume`, `pages`, `articleids[]` with `idtype` doi/pmid.

use serde_json::Value;

use super::transport::Request;
use super::{
    check_response, first_year, make_record, malformed, run_step, CandidateRecord, FailureClass,
    ManifestationKind, Query, QueryKind, SourceConfig, SourceName, Step, Transport,
};
use crate::extract::normalize::parse_name;

const ESEARCH: &str = "/entrez/eutils/esearch.fcgi";
const ESUMMARY: &str = "/entrez/eutils/esummary.fcgi";

fn with_key(mut req: Request, cfg: &SourceConfig) -> Request {
    if let Some(k) = &cfg.pubmed_api_key {
        req.secret_params.push(("api_key".into(), k.clone()));
    }
    req
}

/// esearch term for the query, or `None` for lookups that skip the search step.
pub fn search_term(query: &Query) -> Option<String> {
    let t = query.text.replace('"', "");
    Some(match query.kind {
        QueryKind::PmidLookup | QueryKind::ArxivLookup => return None,
        QueryKind::DoiLookup => format!("{t}[doi]"),
        QueryKind::TitleSearch => format!("{t}[ti]"),
        QueryKind::TitleAuthorSearch => match &query.author {
            Some(a) => format!("{t}[ti] AND {a}[au]"),
            None => format!("{t}[ti]"),
        },
        QueryKind::RelaxedSearch => t,
    })
}

pub fn esearch_request(query: &Query, cfg: &SourceConfig) -> Option<Request> {
    let term = search_term(query)?;
    Some(with_key(
        Request::new(SourceName::Pubmed, cfg.base_url(SourceName::Pubmed), ESEARCH)
            .param("db", "pubmed")
            .param("term", term)
            .param("retmode", "json")
            .param("retmax", query.limit().to_string()),
        cfg,
    ))
}

pub fn esummary_request(ids: &[String], cfg: &SourceConfig) -> Request {
    with_key(
        Request::new(SourceName::Pubmed, cfg.base_url(SourceName::Pubmed), ESUMMARY)
            .param("db", "pubmed")
            .param("id", ids.join(","))
            .param("retmode", "json"),
        cfg,
    )
}

pub(crate) fn run(query: &Query, cfg: &SourceConfig, t: &dyn Transport) -> (Result<Vec<CandidateRecord>, FailureClass>, Vec<Step>) {
    let mut steps = Vec::new();
    let ids: Vec<String> = if query.kind == QueryKind::PmidLookup {
        match crate::ids::normalize_pmid(&query.text) {
            Some(p) => vec![p],
            None => return (Ok(Vec::new()), steps),
        }
    } else {
        let Some(req) = esearch_request(query, cfg) else {
            return (Ok(Vec::new()), steps);
        };
        let step = run_step(t, &req);
        let parsed = check_response(&step).and_then(parse_esearch);
        steps.push(step);
        match parsed {
            Ok(ids) => ids,
            Err(f) => return (Err(f), steps),
        }
    };
    if ids.is_empty() {
        return (Ok(Vec::new()), steps);
    }
    let step = run_step(t, &esummary_request(&ids, cfg));
    let result = check_response(&step).and_then(|b| parse_esummary(b, &step.key));
    steps.push(step);
    (result, steps)
}

pub fn parse_esearch(body: &[u8]) -> Result<Vec<String>, FailureClass> {
    let v: Value = serde_json::from_slice(body).map_err(|e| malformed(format!("pubmed esearch json: {e}")))?;
    let list = v
        .get("esearchresult")
        .and_then(|r| r.get("idlist"))
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("pubmed: missing `esearchresult.idlist`"))?;
    Ok(list.iter().filter_map(Value::as_str).map(str::to_owned).collect())
}

pub fn parse_esummary(body: &[u8], provenance: &str) -> Result<Vec<CandidateRecord>, FailureClass> {
    let v: Value = serde_json::from_slice(body).map_err(|e| malformed(format!("pubmed esummary json: {e}")))?;
    let result = v.get("result").ok_or_else(|| malformed("pubmed: missing `result`"))?;
    let uids = result
        .get("uids")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("pubmed: missing `result.uids`"))?;
    let mut out = Vec::new();
    for uid in uids.iter().filter_map(Value::as_str) {
        let Some(doc) = result.get(uid) else {
            return Err(malformed(format!("pubmed: uid {uid} listed without a record")));
        };
        if doc.get("error").is_some() {
            continue;
        }
        let title = doc.get("title").and_then(Value::as_str).unwrap_or("");
        if title.is_empty() {
            continue;
        }
        let authors = doc
            .get("authors")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter(|p| p.get("authtype").and_then(Value::as_str).is_none_or(|t| t == "Author"))
                    .filter_map(|p| p.get("name").and_then(Value::as_str))
                    .filter_map(parse_name)
                    .collect()
            })
            .unwrap_or_default();
        let mut doi = None;
        for a in doc.get("articleids").and_then(Value::as_array).into_iter().flatten() {
            if a.get("idtype").and_then(Value::as_str) == Some("doi") {
                doi = a.get("value").and_then(Value::as_str);
            }
        }
        let venue = doc
            .get("fulljournalname")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .or_else(|| doc.get("source").and_then(Value::as_str))
            .map(str::to_owned);
        let year = doc.get("pubdate").and_then(Value::as_str).and_then(first_year);
        let mut rec = make_record(
            SourceName::Pubmed,
            uid.to_string(),
            title,
            authors,
            year,
            venue,
            doi,
            Some(uid),
            None,
            ManifestationKind::Journal,
            provenance,
        );
        rec.volume = doc.get("volume").and_then(Value::as_str).filter(|s| !s.is_empty()).map(str::to_owned);
        rec.pages = doc.get("pages").and_then(Value::as_str).filter(|s| !s.is_empty()).map(str::to_owned);
        out.push(rec);
    }
    Ok(out)
}
