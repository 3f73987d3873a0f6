//! In-process stand-in for the four metadata services, backed by a small
//! catalog. Used to record the bundled fixtures and to inject faults.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use percent_encoding::percent_decode_str;
use serde::Deserialize;
use serde_json::{json, Value};

use citecheck::SourceName;

#[derive(Debug, Clone, Deserialize)]
pub struct CatalogRecord {
    pub title: String,
    /// `[family, given]` pairs.
    pub authors: Vec<(String, String)>,
    pub year: i32,
    pub venue: String,
    /// journal, conference or preprint
    pub kind: String,
    #[serde(default)]
    pub doi: Option<String>,
    #[serde(default)]
    pub pmid: Option<String>,
    #[serde(default)]
    pub arxiv: Option<String>,
    #[serde(default)]
    pub volume: Option<String>,
    #[serde(default)]
    pub pages: Option<String>,
    /// DOIs or arXiv ids of other manifestations.
    #[serde(default)]
    pub links: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Status(u16),
    /// A well-formed response whose body stops halfway.
    Truncated,
}

struct Shared {
    catalog: Vec<CatalogRecord>,
    faults: BTreeMap<SourceName, Fault>,
}

pub struct Stub {
    pub port: u16,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Stub {
    pub fn start(catalog: Vec<CatalogRecord>, faults: BTreeMap<SourceName, Fault>) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let port = listener.local_addr().unwrap().port();
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(Shared { catalog, faults });
        let stop2 = stop.clone();
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let shared = shared.clone();
                std::thread::spawn(move || {
                    let _ = serve_one(stream, &shared);
                });
            }
        });
        Stub {
            port,
            stop,
            handle: Some(handle),
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(("127.0.0.1", self.port));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// A localhost URL nothing listens on.
pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port();
    drop(l);
    format!("http://127.0.0.1:{port}")
}

struct Response {
    status: u16,
    content_type: &'static str,
    body: Vec<u8>,
}

impl Response {
    fn json(status: u16, v: Value) -> Self {
        Response {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(&v).unwrap(),
        }
    }
}

fn serve_one(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h == "\r\n" || h == "\n" {
            break;
        }
    }
    let target = line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let (path, query) = target.split_once('?').unwrap_or((&target, ""));
    let params: BTreeMap<String, String> = query
        .split('&')
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (k, v) = p.split_once('=').unwrap_or((p, ""));
            (decode(k), decode(v))
        })
        .collect();
    let source = if path.starts_with("/works") {
        Some(SourceName::Crossref)
    } else if path.starts_with("/entrez") {
        Some(SourceName::Pubmed)
    } else if path.starts_with("/api/query") {
        Some(SourceName::Arxiv)
    } else if path.starts_with("/graph") {
        Some(SourceName::SemanticScholar)
    } else {
        None
    };
    let fault = source.and_then(|s| shared.faults.get(&s).copied());
    let mut resp = match (fault, source) {
        (Some(Fault::Status(code)), _) => Response {
            status: code,
            content_type: "text/plain",
            body: format!("stub fault {code}").into_bytes(),
        },
        (_, Some(SourceName::Crossref)) => crossref(path, &params, &shared.catalog),
        (_, Some(SourceName::Pubmed)) => pubmed(path, &params, &shared.catalog),
        (_, Some(SourceName::Arxiv)) => arxiv(&params, &shared.catalog),
        (_, Some(SourceName::SemanticScholar)) => s2(path, &params, &shared.catalog),
        (_, None) => Response::json(404, json!({"error": "no route"})),
    };
    if fault == Some(Fault::Truncated) {
        resp.body.truncate(resp.body.len() / 2);
    }
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {} X\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        resp.status,
        resp.content_type,
        resp.body.len()
    )?;
    out.write_all(&resp.body)?;
    out.flush()?;
    let _ = out.shutdown(Shutdown::Write);
    // drain so the client never sees a reset
    let _ = reader.read_to_end(&mut Vec::new());
    Ok(())
}

fn decode(s: &str) -> String {
    percent_decode_str(&s.replace('+', " ")).decode_utf8_lossy().into_owned()
}

fn tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Share of the record's title words present in the query, when at least half.
fn title_score(query: &str, title: &str) -> Option<f64> {
    let q = tokens(query);
    let t = tokens(title);
    if t.is_empty() {
        return None;
    }
    let hit = t.iter().filter(|w| q.contains(w)).count();
    let s = hit as f64 / t.len() as f64;
    (s >= 0.5).then_some(s)
}

fn search<'a>(catalog: &'a [CatalogRecord], text: &str, keep: impl Fn(&CatalogRecord) -> bool, limit: usize) -> Vec<&'a CatalogRecord> {
    let mut hits: Vec<(f64, usize)> = catalog
        .iter()
        .enumerate()
        .filter(|(_, r)| keep(r))
        .filter_map(|(i, r)| title_score(text, &r.title).map(|s| (s, i)))
        .collect();
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    hits.into_iter().take(limit).map(|(_, i)| &catalog[i]).collect()
}

fn limit_of(params: &BTreeMap<String, String>, key: &str) -> usize {
    params.get(key).and_then(|v| v.parse().ok()).unwrap_or(5)
}

fn is_arxiv_link(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_digit()) && !s.starts_with("10.")
}

fn same_id(a: &Option<String>, b: &str) -> bool {
    a.as_deref().is_some_and(|x| x.eq_ignore_ascii_case(b.trim()))
}

fn crossref_work(r: &CatalogRecord) -> Value {
    let ty = match r.kind.as_str() {
        "journal" => "journal-article",
        "conference" => "proceedings-article",
        _ => "posted-content",
    };
    let mut w = json!({
        "DOI": r.doi,
        "title": [r.title],
        "author": r.authors.iter().map(|(f, g)| json!({"family": f, "given": g})).collect::<Vec<_>>(),
        "issued": {"date-parts": [[r.year]]},
        "container-title": [r.venue],
        "type": ty,
    });
    if let Some(v) = &r.volume {
        w["volume"] = json!(v);
    }
    if let Some(p) = &r.pages {
        w["page"] = json!(p);
    }
    if !r.links.is_empty() {
        let rel: Vec<Value> = r
            .links
            .iter()
            .map(|l| {
                if is_arxiv_link(l) {
                    json!({"id-type": "arxiv", "id": l, "asserted-by": "subject"})
                } else {
                    json!({"id-type": "doi", "id": l, "asserted-by": "subject"})
                }
            })
            .collect();
        w["relation"] = json!({"has-preprint": rel});
    }
    w
}

fn crossref(path: &str, params: &BTreeMap<String, String>, catalog: &[CatalogRecord]) -> Response {
    if let Some(doi) = path.strip_prefix("/works/") {
        let doi = decode(doi);
        return match catalog.iter().find(|r| same_id(&r.doi, &doi)) {
            Some(r) => Response::json(200, json!({"status": "ok", "message-type": "work", "message": crossref_work(r)})),
            None => Response {
                status: 404,
                content_type: "text/plain",
                body: b"Resource not found.".to_vec(),
            },
        };
    }
    let text = params.get("query.bibliographic").cloned().unwrap_or_default();
    let items: Vec<Value> = search(catalog, &text, |r| r.doi.is_some(), limit_of(params, "rows"))
        .into_iter()
        .map(crossref_work)
        .collect();
    Response::json(
        200,
        json!({"status": "ok", "message-type": "work-list", "message": {"total-results": items.len(), "items": items}}),
    )
}

fn initials(given: &str) -> String {
    given
        .split(|c: char| c.is_whitespace() || c == '.' || c == '-')
        .filter_map(|p| p.chars().next())
        .collect()
}

fn pubmed(path: &str, params: &BTreeMap<String, String>, catalog: &[CatalogRecord]) -> Response {
    if path.ends_with("esearch.fcgi") {
        let term = params.get("term").cloned().unwrap_or_default();
        let limit = limit_of(params, "retmax");
        let ids: Vec<String> = if let Some(doi) = term.strip_suffix("[doi]") {
            catalog
                .iter()
                .filter(|r| r.pmid.is_some() && same_id(&r.doi, doi))
                .filter_map(|r| r.pmid.clone())
                .collect()
        } else {
            let (title, author) = match term.split_once("[ti]") {
                Some((t, rest)) => (t.to_string(), rest.trim().strip_prefix("AND ").and_then(|a| a.strip_suffix("[au]")).map(str::to_owned)),
                None => (term.clone(), None),
            };
            search(
                catalog,
                &title,
                |r| {
                    r.pmid.is_some()
                        && author.as_deref().is_none_or(|a| {
                            r.authors.iter().any(|(f, _)| tokens(a).contains(&f.to_lowercase()))
                        })
                },
                limit,
            )
            .into_iter()
            .filter_map(|r| r.pmid.clone())
            .collect()
        };
        return Response::json(
            200,
            json!({"header": {"type": "esearch", "version": "0.3"}, "esearchresult": {"count": ids.len().to_string(), "retmax": ids.len().to_string(), "retstart": "0", "idlist": ids}}),
        );
    }
    let ids: Vec<&str> = params.get("id").map(|s| s.split(',').collect()).unwrap_or_default();
    let mut result = serde_json::Map::new();
    result.insert("uids".into(), json!(ids));
    for id in &ids {
        let doc = match catalog.iter().find(|r| same_id(&r.pmid, id)) {
            Some(r) => {
                let mut articleids = vec![json!({"idtype": "pubmed", "idtypen": 1, "value": id})];
                if let Some(d) = &r.doi {
                    articleids.push(json!({"idtype": "doi", "idtypen": 3, "value": d}));
                }
                json!({
                    "uid": id,
                    "pubdate": r.year.to_string(),
                    "source": r.venue,
                    "fulljournalname": r.venue,
                    "title": format!("{}.", r.title),
                    "volume": r.volume.clone().unwrap_or_default(),
                    "pages": r.pages.clone().unwrap_or_default(),
                    "authors": r.authors.iter().map(|(f, g)| json!({"name": format!("{f} {}", initials(g)), "authtype": "Author"})).collect::<Vec<_>>(),
                    "articleids": articleids,
                })
            }
            None => json!({"uid": id, "error": "cannot get document summary"}),
        };
        result.insert((*id).to_string(), doc);
    }
    Response::json(200, json!({"header": {"type": "esummary", "version": "0.3"}, "result": result}))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn arxiv(params: &BTreeMap<String, String>, catalog: &[CatalogRecord]) -> Response {
    let hits: Vec<&CatalogRecord> = if let Some(id) = params.get("id_list") {
        catalog.iter().filter(|r| same_id(&r.arxiv, id)).collect()
    } else {
        let q = params.get("search_query").cloned().unwrap_or_default();
        let mut title = String::new();
        for part in q.split(" AND ") {
            if let Some(t) = part.strip_prefix("ti:") {
                title.push_str(t.trim_matches('"'));
                title.push(' ');
            }
        }
        search(catalog, &title, |r| r.arxiv.is_some(), limit_of(params, "max_results"))
    };
    let mut body = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<feed xmlns=\"http://www.w3.org/2005/Atom\" xmlns:arxiv=\"http://arxiv.org/schemas/atom\">\n  <title>arXiv Query</title>\n",
    );
    for r in hits {
        body.push_str("  <entry>\n");
        body.push_str(&format!("    <id>http://arxiv.org/abs/{}v1</id>\n", r.arxiv.as_deref().unwrap()));
        body.push_str(&format!("    <published>{}-01-15T00:00:00Z</published>\n", r.year));
        body.push_str(&format!("    <title>{}</title>\n", xml_escape(&r.title)));
        for (f, g) in &r.authors {
            body.push_str(&format!("    <author><name>{} {}</name></author>\n", xml_escape(g), xml_escape(f)));
        }
        if let Some(doi) = r.links.iter().find(|l| !is_arxiv_link(l)) {
            body.push_str(&format!("    <arxiv:doi>{}</arxiv:doi>\n", xml_escape(doi)));
        }
        body.push_str("  </entry>\n");
    }
    body.push_str("</feed>\n");
    Response {
        status: 200,
        content_type: "application/atom+xml",
        body: body.into_bytes(),
    }
}

fn s2_paper(i: usize, r: &CatalogRecord) -> Value {
    let mut ext = serde_json::Map::new();
    if let Some(d) = &r.doi {
        ext.insert("DOI".into(), json!(d));
    }
    if let Some(p) = &r.pmid {
        ext.insert("PubMed".into(), json!(p));
    }
    if let Some(a) = &r.arxiv {
        ext.insert("ArXiv".into(), json!(a));
    }
    let types = match r.kind.as_str() {
        "journal" => json!(["JournalArticle"]),
        "conference" => json!(["Conference"]),
        _ => json!([]),
    };
    json!({
        "paperId": format!("{:040x}", i + 1),
        "title": r.title,
        "authors": r.authors.iter().map(|(f, g)| json!({"name": format!("{g} {f}")})).collect::<Vec<_>>(),
        "year": r.year,
        "venue": r.venue,
        "journal": {"name": r.venue, "volume": r.volume, "pages": r.pages},
        "externalIds": ext,
        "publicationTypes": types,
    })
}

fn s2(path: &str, params: &BTreeMap<String, String>, catalog: &[CatalogRecord]) -> Response {
    if path == "/graph/v1/paper/search" {
        let text = params.get("query").cloned().unwrap_or_default();
        let data: Vec<Value> = search(catalog, &text, |_| true, limit_of(params, "limit"))
            .into_iter()
            .map(|r| {
                let i = catalog.iter().position(|c| std::ptr::eq(c, r)).unwrap();
                s2_paper(i, r)
            })
            .collect();
        return Response::json(200, json!({"total": data.len(), "offset": 0, "data": data}));
    }
    let id = decode(path.trim_start_matches("/graph/v1/paper/"));
    let (kind, value) = id.split_once(':').unwrap_or(("", ""));
    let found = catalog.iter().enumerate().find(|(_, r)| match kind {
        "DOI" => same_id(&r.doi, value),
        "PMID" => same_id(&r.pmid, value),
        "ARXIV" => same_id(&r.arxiv, value),
        _ => false,
    });
    match found {
        Some((i, r)) => Response::json(200, s2_paper(i, r)),
        None => Response::json(404, json!({"error": format!("Paper with id {id} not found")})),
    }
}
