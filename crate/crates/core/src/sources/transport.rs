//! HTTP exchange, fixture recording and byte-exact replay.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use base64::Engine;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{FailureClass, FailureKind, SourceName};

/// Unreserved characters per RFC 3986 stay literal.
const QUERY_ENCODE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');
const PATH_ENCODE: &AsciiSet = &QUERY_ENCODE.remove(b'/').remove(b':');

pub fn encode_component(s: &str) -> String {
    utf8_percent_encode(s, QUERY_ENCODE).to_string()
}

pub fn encode_path(s: &str) -> String {
    utf8_percent_encode(s, PATH_ENCODE).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Live,
    Replay,
    Record,
}

impl TransportMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Some(Self::Live),
            "replay" => Some(Self::Replay),
            "record" => Some(Self::Record),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Live => "live",
            Self::Replay => "replay",
            Self::Record => "record",
        }
    }
}

/// One outbound GET. `secret_params` and `headers` never enter the request key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub source: SourceName,
    pub base_url: String,
    /// Already percent-encoded.
    pub path: String,
    pub params: Vec<(String, String)>,
    pub secret_params: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
}

impl Request {
    pub fn new(source: SourceName, base_url: &str, path: impl Into<String>) -> Self {
        Request {
            source,
            base_url: base_url.trim_end_matches('/').to_string(),
            path: path.into(),
            params: Vec::new(),
            secret_params: Vec::new(),
            headers: Vec::new(),
        }
    }

    pub fn param(mut self, k: &str, v: impl Into<String>) -> Self {
        self.params.push((k.to_string(), v.into()));
        self
    }

    fn encoded_pairs(pairs: &[(String, String)]) -> Vec<String> {
        pairs
            .iter()
            .map(|(k, v)| format!("{}={}", encode_component(k), encode_component(v)))
            .collect()
    }

    /// `source path?sorted-params`; stable under parameter reordering.
    pub fn request_key(&self) -> String {
        let mut pairs = Self::encoded_pairs(&self.params);
        pairs.sort();
        if pairs.is_empty() {
            format!("{} {}", self.source.as_str(), self.path)
        } else {
            format!("{} {}?{}", self.source.as_str(), self.path, pairs.join("&"))
        }
    }

    pub fn url(&self) -> String {
        let mut pairs = Self::encoded_pairs(&self.params);
        pairs.extend(Self::encoded_pairs(&self.secret_params));
        if pairs.is_empty() {
            format!("{}{}", self.base_url, self.path)
        } else {
            format!("{}{}?{}", self.base_url, self.path, pairs.join("&"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub status: u16,
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchFailure {
    Io(String),
    FixtureMissing(String),
}

pub trait Transport: Send + Sync {
    fn fetch(&self, req: &Request) -> std::result::Result<RawResponse, FetchFailure>;
    fn mode(&self) -> TransportMode;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyState {
    Ok,
    Malformed,
    Empty,
}

/// Map abnormal exchange signals to a failure class; `None` when nothing is abnormal.
pub fn classify_failure(status: Option<u16>, body_state: BodyState, io_error: Option<&str>) -> Option<FailureClass> {
    let (kind, detail) = if let Some(e) = io_error {
        (FailureKind::Transport, e.to_string())
    } else {
        match status {
            Some(s @ (401 | 403)) => (FailureKind::Authentication, format!("HTTP {s}")),
            Some(429) => (FailureKind::RateLimit, "HTTP 429".to_string()),
            Some(404) => (FailureKind::NotFound, "HTTP 404".to_string()),
            Some(s) if s >= 500 => (FailureKind::Transport, format!("HTTP {s}")),
            Some(s) if !(200..300).contains(&s) => (FailureKind::Transport, format!("HTTP {s}")),
            _ => match body_state {
                BodyState::Malformed => (FailureKind::PayloadShape, "response body did not match the expected shape".into()),
                BodyState::Empty => (FailureKind::NotFound, "empty result set".into()),
                BodyState::Ok => return None,
            },
        }
    };
    Some(FailureClass::new(kind, detail))
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Full jitter: uniform in [0, base * 2^attempt).
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let cap = self.base_backoff.as_millis() as u64 * (1u64 << attempt.min(16));
        if cap == 0 {
            return Duration::ZERO;
        }
        Duration::from_millis(rng.random_range(0..cap))
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpTransport {
    pub fn new(timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("citecheck/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        HttpTransport { agent, retry }
    }

    fn once(&self, req: &Request) -> std::result::Result<RawResponse, FetchFailure> {
        let start = Instant::now();
        let mut call = self.agent.get(&req.url());
        for (k, v) in &req.headers {
            call = call.header(k, v);
        }
        let mut resp = call.call().map_err(|e| FetchFailure::Io(e.to_string()))?;
        let status = resp.status().as_u16();
        let mut headers = BTreeMap::new();
        if let Some(ct) = resp.headers().get("content-type").and_then(|v| v.to_str().ok()) {
            headers.insert("content-type".to_string(), ct.to_string());
        }
        let mut body = Vec::new();
        resp.body_mut()
            .as_reader()
            .read_to_end(&mut body)
            .map_err(|e| FetchFailure::Io(e.to_string()))?;
        Ok(RawResponse {
            status,
            headers,
            body,
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    }
}

impl Transport for HttpTransport {
    fn fetch(&self, req: &Request) -> std::result::Result<RawResponse, FetchFailure> {
        let mut rng = rand::rng();
        let mut attempt = 0;
        loop {
            let result = self.once(req);
            let retryable = match &result {
                Ok(r) => r.status == 429 || r.status >= 500,
                Err(FetchFailure::Io(_)) => true,
                Err(_) => false,
            };
            if !retryable || attempt >= self.retry.max_retries {
                return result;
            }
            std::thread::sleep(self.retry.delay(attempt, &mut rng));
            attempt += 1;
        }
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Live
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub request_key: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub status: Option<u16>,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub body: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub body_base64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub io_error: Option<String>,
}

/// One JSON file per request key, named by the key's SHA-256.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    pub dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn file_for(&self, request_key: &str) -> PathBuf {
        let digest = Sha256::digest(request_key.as_bytes());
        self.dir.join(format!("{}.json", hex::encode(digest)))
    }

    pub fn load(&self, request_key: &str) -> Result<Option<Fixture>> {
        let path = self.file_for(request_key);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, fixture: &Fixture) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.file_for(&fixture.request_key);
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(fixture)?;
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn record(&self, request_key: &str, result: &std::result::Result<RawResponse, FetchFailure>) -> Result<()> {
        let fixture = match result {
            Ok(r) => {
                let (body, body_base64) = match std::str::from_utf8(&r.body) {
                    Ok(s) => (Some(s.to_string()), None),
                    Err(_) => (None, Some(base64::engine::general_purpose::STANDARD.encode(&r.body))),
                };
                Fixture {
                    request_key: request_key.to_string(),
                    status: Some(r.status),
                    headers: r.headers.clone(),
                    body,
                    body_base64,
                    io_error: None,
                }
            }
            Err(FetchFailure::Io(e)) => Fixture {
                request_key: request_key.to_string(),
                status: None,
                headers: BTreeMap::new(),
                body: None,
                body_base64: None,
                io_error: Some(e.clone()),
            },
            Err(FetchFailure::FixtureMissing(_)) => return Ok(()),
        };
        self.save(&fixture)
    }
}

pub fn fixture_to_response(f: &Fixture) -> std::result::Result<RawResponse, FetchFailure> {
    if let Some(e) = &f.io_error {
        return Err(FetchFailure::Io(e.clone()));
    }
    let body = match (&f.body, &f.body_base64) {
        (Some(s), _) => s.as_bytes().to_vec(),
        (None, Some(b)) => base64::engine::general_purpose::STANDARD
            .decode(b)
            .map_err(|e| FetchFailure::Io(format!("fixture body_base64 undecodable: {e}")))?,
        (None, None) => Vec::new(),
    };
    Ok(RawResponse {
        status: f.status.unwrap_or(200),
        headers: f.headers.clone(),
        body,
        elapsed_ms: 0,
    })
}

pub struct ReplayTransport {
    pub store: FixtureStore,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayTransport {
            store: FixtureStore::new(dir),
        }
    }
}

/// Replay-only lookup, surfaced as a typed error.
pub fn transport_fetch_replay(store: &FixtureStore, request_key: &str) -> Result<RawResponse> {
    match store.load(request_key)? {
        Some(f) => fixture_to_response(&f).map_err(|e| match e {
            FetchFailure::Io(m) => Error::Io(std::io::Error::other(m)),
            FetchFailure::FixtureMissing(k) => Error::FixtureMissing { request_key: k },
        }),
        None => Err(Error::FixtureMissing {
            request_key: request_key.to_string(),
        }),
    }
}

impl Transport for ReplayTransport {
    fn fetch(&self, req: &Request) -> std::result::Result<RawResponse, FetchFailure> {
        let key = req.request_key();
        match self.store.load(&key) {
            Ok(Some(f)) => fixture_to_response(&f),
            Ok(None) => Err(FetchFailure::FixtureMissing(key)),
            Err(e) => Err(FetchFailure::Io(format!("fixture unreadable for {key}: {e}"))),
        }
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Replay
    }
}

pub struct RecordTransport {
    pub inner: HttpTransport,
    pub store: FixtureStore,
}

impl Transport for RecordTransport {
    fn fetch(&self, req: &Request) -> std::result::Result<RawResponse, FetchFailure> {
        let result = self.inner.fetch(req);
        if let Err(e) = self.store.record(&req.request_key(), &result) {
            return Err(FetchFailure::Io(format!("failed to persist fixture: {e}")));
        }
        result
    }

    fn mode(&self) -> TransportMode {
        TransportMode::Record
    }
}

pub fn build_transport(mode: TransportMode, fixtures: Option<&Path>, timeout: Duration, retry: RetryPolicy) -> Result<Box<dyn Transport>> {
    let need_dir = || {
        fixtures
            .map(Path::to_path_buf)
            .ok_or_else(|| Error::InvalidArgument(format!("{} transport needs a fixtures directory", mode.as_str())))
    };
    Ok(match mode {
        TransportMode::Live => Box::new(HttpTransport::new(timeout, retry)),
        TransportMode::Replay => Box::new(ReplayTransport::new(need_dir()?)),
        TransportMode::Record => Box::new(RecordTransport {
            inner: HttpTransport::new(timeout, retry),
            store: FixtureStore::new(need_dir()?),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_order_independent_and_hides_secrets() {
        let mut a = Request::new(SourceName::Crossref, "https://api.crossref.org", "/works")
            .param("rows", "5")
            .param("query.bibliographic", "deep learning");
        a.secret_params.push(("mailto".into(), "me@example.org".into()));
        let b = Request::new(SourceName::Crossref, "https://other", "/works")
            .param("query.bibliographic", "deep learning")
            .param("rows", "5");
        assert_eq!(a.request_key(), b.request_key());
        assert_eq!(a.request_key(), "crossref /works?query.bibliographic=deep%20learning&rows=5");
        assert!(a.url().contains("mailto=me%40example.org"));
    }

    #[test]
    fn classification_table() {
        let c = |s, b, e| classify_failure(s, b, e).unwrap().class;
        assert_eq!(c(Some(401), BodyState::Ok, None), FailureKind::Authentication);
        assert_eq!(c(Some(403), BodyState::Ok, None), FailureKind::Authentication);
        assert_eq!(c(Some(429), BodyState::Ok, None), FailureKind::RateLimit);
        assert_eq!(c(Some(200), BodyState::Malformed, None), FailureKind::PayloadShape);
        assert_eq!(c(Some(200), BodyState::Empty, None), FailureKind::NotFound);
        assert_eq!(c(Some(404), BodyState::Ok, None), FailureKind::NotFound);
        assert_eq!(c(Some(503), BodyState::Ok, None), FailureKind::Transport);
        let refused = classify_failure(None, BodyState::Ok, Some("connection refused")).unwrap();
        assert_eq!(refused.class, FailureKind::Transport);
        assert!(refused.retryable);
        assert!(classify_failure(Some(429), BodyState::Ok, None).unwrap().retryable);
        assert!(!classify_failure(Some(200), BodyState::Malformed, None).unwrap().retryable);
        assert!(!classify_failure(Some(401), BodyState::Ok, None).unwrap().retryable);
        assert!(classify_failure(Some(200), BodyState::Ok, None).is_none());
    }

    #[test]
    fn replay_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        let body = "{\"a\": \"caf\u{e9}\"}\n  ".as_bytes().to_vec();
        let resp = RawResponse {
            status: 200,
            headers: BTreeMap::new(),
            body: body.clone(),
            elapsed_ms: 12,
        };
        store.record("crossref /works/x", &Ok(resp)).unwrap();
        let binary = vec![0u8, 159, 146, 150];
        store
            .record(
                "crossref /bin",
                &Ok(RawResponse {
                    status: 200,
                    headers: BTreeMap::new(),
                    body: binary.clone(),
                    elapsed_ms: 0,
                }),
            )
            .unwrap();
        for _ in 0..3 {
            let got = transport_fetch_replay(&store, "crossref /works/x").unwrap();
            assert_eq!(got.body, body);
            assert_eq!(got.elapsed_ms, 0);
        }
        assert_eq!(transport_fetch_replay(&store, "crossref /bin").unwrap().body, binary);
    }

    #[test]
    fn replay_missing_names_key() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        match transport_fetch_replay(&store, "arxiv /api/query?id_list=1") {
            Err(Error::FixtureMissing { request_key }) => assert_eq!(request_key, "arxiv /api/query?id_list=1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn recorded_io_error_replays() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(dir.path());
        store.record("k", &Err(FetchFailure::Io("connection reset".into()))).unwrap();
        let t = ReplayTransport { store };
        let req = Request::new(SourceName::Arxiv, "http://x", "k");
        // request_key of this request differs from "k"; look it up directly
        assert!(matches!(t.fetch(&req), Err(FetchFailure::FixtureMissing(_))));
        let f = t.store.load("k").unwrap().unwrap();
        assert_eq!(fixture_to_response(&f), Err(FetchFailure::Io("connection reset".into())));
    }

    #[test]
    fn backoff_bounds() {
        let p = RetryPolicy::default();
        let mut rng = rand::rng();
        for attempt in 0..3 {
            for _ in 0..50 {
                let d = p.delay(attempt, &mut rng);
                assert!(d < Duration::from_millis(500 << attempt));
            }
        }
        let zero = RetryPolicy {
            max_retries: 2,
            base_backoff: Duration::ZERO,
        };
        assert_eq!(zero.delay(1, &mut rng), Duration::ZERO);
    }
}
