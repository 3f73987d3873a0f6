//! Semantic Scholar Graph API: `/graph/v1/paper/{id}` and `/graph/v1/paper/search`.
//!
//! Fields read: `paperId`, `title`, `authors[].name`, `year`, `venue`,
//! `journal.name/volume/pages`, `externalIds.DOI/ArXiv/PubMed`,
//! `publicationTypes`.

use serde_json::Value;

use super::transport::{encode_path, Request};
use super::{
    check_response, make_record, malformed, run_step, CandidateRecord, FailureClass, ManifestationKind, Query,
    QueryKind, SourceConfig, SourceName, Step, Transport,
};
use crate::extract::normalize::parse_name;

pub const FIELDS: &str = "title,authors,year,venue,journal,externalIds,publicationTypes";

pub fn build_request(query: &Query, cfg: &SourceConfig) -> Option<Request> {
    let base = cfg.base_url(SourceName::SemanticScholar);
    let lookup = |prefix: &str, id: &str| {
        Request::new(
            SourceName::SemanticScholar,
            base,
            format!("/graph/v1/paper/{}", encode_path(&format!("{prefix}:{id}"))),
        )
        .param("fields", FIELDS)
    };
    let mut req = match query.kind {
        QueryKind::DoiLookup => lookup("DOI", &query.text),
        QueryKind::PmidLookup => lookup("PMID", &query.text),
        QueryKind::ArxivLookup => lookup("ARXIV", &crate::ids::normalize_arxiv(&query.text)?.0),
        QueryKind::TitleSearch | QueryKind::TitleAuthorSearch | QueryKind::RelaxedSearch => {
            let mut text = query.text.clone();
            if query.kind == QueryKind::TitleAuthorSearch {
                if let Some(a) = &query.author {
                    text.push(' ');
                    text.push_str(a);
                }
            }
            let mut r = Request::new(SourceName::SemanticScholar, base, "/graph/v1/paper/search")
                .param("query", text)
                .param("limit", query.limit().to_string())
                .param("fields", FIELDS);
            if let Some(y) = query.year {
                r = r.param("year", format!("{}-{}", y - 1, y + 1));
            }
            r
        }
    };
    if let Some(k) = &cfg.s2_api_key {
        req.headers.push(("x-api-key".into(), k.clone()));
    }
    Some(req)
}

pub(crate) fn run(query: &Query, cfg: &SourceConfig, t: &dyn Transport) -> (Result<Vec<CandidateRecord>, FailureClass>, Vec<Step>) {
    let Some(req) = build_request(query, cfg) else {
        return (Ok(Vec::new()), Vec::new());
    };
    let step = run_step(t, &req);
    let result = check_response(&step).and_then(|b| parse(b, &step.key, query.kind.is_lookup()));
    (result, vec![step])
}

pub fn parse(body: &[u8], provenance: &str, single: bool) -> Result<Vec<CandidateRecord>, FailureClass> {
    let v: Value = serde_json::from_slice(body).map_err(|e| malformed(format!("semantic scholar json: {e}")))?;
    let papers: Vec<&Value> = if single {
        if v.get("paperId").is_none() {
            return Err(malformed("semantic scholar: missing `paperId`"));
        }
        vec![&v]
    } else {
        match v.get("data") {
            Some(Value::Array(a)) => a.iter().collect(),
            None if v.get("total").and_then(Value::as_i64) == Some(0) => Vec::new(),
            _ => return Err(malformed("semantic scholar: missing `data`")),
        }
    };
    let mut out = Vec::new();
    for p in papers {
        let Some(id) = p.get("paperId").and_then(Value::as_str) else {
            continue;
        };
        let title = p.get("title").and_then(Value::as_str).unwrap_or("");
        let authors = p
            .get("authors")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(|x| x.get("name").and_then(Value::as_str))
                    .filter_map(parse_name)
                    .collect()
            })
            .unwrap_or_default();
        let ext = p.get("externalIds");
        let ext_str = |k: &str| -> Option<String> {
            match ext?.get(k)? {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            }
        };
        let journal = p.get("journal");
        let venue = journal
            .and_then(|j| j.get("name"))
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .or_else(|| p.get("venue").and_then(Value::as_str))
            .map(str::to_owned);
        let types: Vec<&str> = p
            .get("publicationTypes")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        let kind = if types.contains(&"JournalArticle") {
            ManifestationKind::Journal
        } else if types.contains(&"Conference") {
            ManifestationKind::Conference
        } else if venue.as_deref().is_some_and(|v| v.to_lowercase().contains("arxiv")) {
            ManifestationKind::Preprint
        } else {
            ManifestationKind::Unknown
        };
        let doi = ext_str("DOI");
        let pmid = ext_str("PubMed");
        let arxiv = ext_str("ArXiv");
        let mut rec = make_record(
            SourceName::SemanticScholar,
            id.to_string(),
            title,
            authors,
            p.get("year").and_then(Value::as_i64).map(|y| y as i32),
            venue,
            doi.as_deref(),
            pmid.as_deref(),
            arxiv.as_deref(),
            kind,
            provenance,
        );
        rec.volume = journal.and_then(|j| j.get("volume")).and_then(Value::as_str).map(|s| s.trim().to_string());
        rec.pages = journal.and_then(|j| j.get("pages")).and_then(Value::as_str).map(|s| s.trim().to_string());
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_lookup() {
        let body = br#"{"paperId":"abc","title":"Deep Things","authors":[{"name":"Jane Doe"}],"year":2020,"venue":"NeurIPS","externalIds":{"DOI":"10.1/X","ArXiv":"2001.00001","CorpusId":5},"publicationTypes":["Conference"],"journal":null}"#;
        let r = &parse(body, "k", true).unwrap()[0];
        assert_eq!(r.doi.as_deref(), Some("10.1/x"));
        assert_eq!(r.arxiv_id.as_deref(), Some("2001.00001"));
        assert_eq!(r.manifestation_kind, ManifestationKind::Conference);
        assert_eq!(r.venue.as_deref(), Some("NeurIPS"));
    }

    #[test]
    fn search_shapes() {
        assert!(parse(br#"{"total":0}"#, "k", false).unwrap().is_empty());
        assert!(parse(br#"{"total":3,"data":"x"}"#, "k", false).is_err());
        assert!(parse(br#"{"error":"x"}"#, "k", true).is_err());
    }

    #[test]
    fn lookup_paths() {
        let cfg = SourceConfig::default();
        let r = build_request(&Query::new(QueryKind::DoiLookup, "10.1/x"), &cfg).unwrap();
        assert!(r.request_key().starts_with("semantic_scholar /graph/v1/paper/DOI:10.1/x?fields="));
    }
}
