//! Scholarly metadata sources behind a pluggable transport.

pub mod arxiv;
pub mod crossref;
pub mod pubmed;
pub mod semantic_scholar;
pub mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::Author;
use crate::ids;
pub use transport::{
    classify_failure, BodyState, FetchFailure, FixtureStore, RawResponse, Request, RetryPolicy, Transport,
    TransportMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceName {
    Crossref,
    Pubmed,
    Arxiv,
    SemanticScholar,
}

impl SourceName {
    /// Also the manifestation tie-break order.
    pub const ALL: [SourceName; 4] = [Self::Crossref, Self::Pubmed, Self::Arxiv, Self::SemanticScholar];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Crossref => "crossref",
            Self::Pubmed => "pubmed",
            Self::Arxiv => "arxiv",
            Self::SemanticScholar => "semantic_scholar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crossref" => Some(Self::Crossref),
            "pubmed" => Some(Self::Pubmed),
            "arxiv" => Some(Self::Arxiv),
            "semantic_scholar" | "semanticscholar" | "s2" => Some(Self::SemanticScholar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    DoiLookup,
    PmidLookup,
    ArxivLookup,
    TitleSearch,
    TitleAuthorSearch,
    RelaxedSearch,
}

impl QueryKind {
    pub fn is_lookup(self) -> bool {
        matches!(self, Self::DoiLookup | Self::PmidLookup | Self::ArxivLookup)
    }
}

pub const DEFAULT_LIMIT: u32 = 5;
pub const MAX_LIMIT: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub author: Option<String>,
    pub year: Option<i32>,
    pub limit: u32,
}

impl Query {
    pub fn new(kind: QueryKind, text: impl Into<String>) -> Self {
        Query {
            kind,
            text: text.into(),
            author: None,
            year: None,
            limit: DEFAULT_LIMIT,
        }
    }

    pub fn with_year(mut self, year: Option<i32>) -> Self {
        self.year = year;
        self
    }

    pub fn with_author(mut self, author: Option<String>) -> Self {
        self.author = author;
        self
    }

    pub fn limit(&self) -> u32 {
        self.limit.clamp(1, MAX_LIMIT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestationKind {
    Unknown,
    Preprint,
    Conference,
    Journal,
}

impl ManifestationKind {
    pub fn preference(self) -> u8 {
        match self {
            Self::Journal => 3,
            Self::Conference => 2,
            Self::Preprint => 1,
            Self::Unknown => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdKind {
    Doi,
    Pmid,
    Arxiv,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelatedId {
    pub kind: IdKind,
    pub value: String,
}

impl RelatedId {
    /// Normalized form, or `None` when the value is not a valid identifier.
    pub fn new(kind: IdKind, raw: &str) -> Option<Self> {
        let value = match kind {
            IdKind::Doi => ids::normalize_doi(raw)?,
            IdKind::Pmid => ids::normalize_pmid(raw)?,
            IdKind::Arxiv => ids::normalize_arxiv(raw)?.0,
        };
        Some(RelatedId { kind, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub source: SourceName,
    pub source_id: String,
    pub title: String,
    pub authors: Vec<Author>,
    pub year: Option<i32>,
    pub venue: Option<String>,
    pub doi: Option<String>,
    pub pmid: Option<String>,
    pub arxiv_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub volume: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pages: Option<String>,
    pub manifestation_kind: ManifestationKind,
    pub related_ids: Vec<RelatedId>,
    pub raw_provenance: String,
}

impl CandidateRecord {
    /// Own identifiers first, then related ones, deduplicated.
    pub fn all_ids(&self) -> BTreeSet<RelatedId> {
        let mut out: BTreeSet<RelatedId> = self.related_ids.iter().cloned().collect();
        out.extend(self.own_ids());
        out
    }

    pub fn own_ids(&self) -> Vec<RelatedId> {
        let mut out = Vec::new();
        if let Some(d) = &self.doi {
            out.push(RelatedId { kind: IdKind::Doi, value: d.clone() });
        }
        if let Some(p) = &self.pmid {
            out.push(RelatedId { kind: IdKind::Pmid, value: p.clone() });
        }
        if let Some(a) = &self.arxiv_id {
            out.push(RelatedId { kind: IdKind::Arxiv, value: a.clone() });
        }
        out
    }

    pub fn sort_key(&self) -> (&'static str, &str) {
        (self.source.as_str(), self.source_id.as_str())
    }
}

pub fn sort_candidates(records: &mut [CandidateRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    Authentication,
    RateLimit,
    PayloadShape,
    NotFound,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Transport => "transport",
            Self::Authentication => "authentication",
            Self::RateLimit => "rate_limit",
            Self::PayloadShape => "payload_shape",
            Self::NotFound => "not_found",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureClass {
    pub class: FailureKind,
    pub detail: String,
    pub retryable: bool,
}

impl FailureClass {
    pub fn new(class: FailureKind, detail: impl Into<String>) -> Self {
        FailureClass {
            class,
            detail: detail.into(),
            retryable: matches!(class, FailureKind::Transport | FailureKind::RateLimit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryResult {
    Records(Vec<CandidateRecord>),
    Failure(FailureClass),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub source: SourceName,
    pub query: Query,
    pub result: QueryResult,
    pub latency_ms: u64,
    pub request_keys: Vec<String>,
}

impl QueryOutcome {
    pub fn records(&self) -> &[CandidateRecord] {
        match &self.result {
            QueryResult::Records(r) => r,
            QueryResult::Failure(_) => &[],
        }
    }

    pub fn failure(&self) -> Option<&FailureClass> {
        match &self.result {
            QueryResult::Failure(f) => Some(f),
            QueryResult::Records(_) => None,
        }
    }

    /// A failure that is not the empty-result signal.
    pub fn is_hard_failure(&self) -> bool {
        self.failure().is_some_and(|f| f.class != FailureKind::NotFound)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceHealth {
    pub source: SourceName,
    pub enabled: bool,
    pub attempted: u32,
    pub succeeded: u32,
    pub failures_by_class: BTreeMap<FailureKind, u32>,
}

pub const CROSSREF_BASE: &str = "https://api.crossref.org";
pub const PUBMED_BASE: &str = "https://eutils.ncbi.nlm.nih.gov";
pub const ARXIV_BASE: &str = "https://export.arxiv.org";
pub const S2_BASE: &str = "https://api.semanticscholar.org";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceConfig {
    pub enabled: BTreeSet<SourceName>,
    pub base_urls: BTreeMap<SourceName, String>,
    pub crossref_mailto: Option<String>,
    pub pubmed_api_key: Option<String>,
    pub s2_api_key: Option<String>,
    pub transport: TransportMode,
    pub fixtures_dir: Option<PathBuf>,
    pub timeout: Duration,
    pub base_backoff: Duration,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            enabled: [SourceName::Crossref, SourceName::Pubmed, SourceName::Arxiv].into_iter().collect(),
            base_urls: BTreeMap::new(),
            crossref_mailto: None,
            pubmed_api_key: None,
            s2_api_key: None,
            transport: TransportMode::Live,
            fixtures_dir: None,
            timeout: Duration::from_secs(20),
            base_backoff: Duration::from_millis(500),
        }
    }
}

pub fn parse_source_list(s: &str) -> Result<BTreeSet<SourceName>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| SourceName::parse(p).ok_or_else(|| Error::InvalidArgument(format!("unknown source `{p}`"))))
        .collect()
}

impl SourceConfig {
    /// Defaults overridden by `CITECHECK_*` variables from `lookup`.
    pub fn from_env_with(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = SourceConfig::default();
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(list) = get("CITECHECK_ENABLED_SOURCES") {
            cfg.enabled = parse_source_list(&list)?;
        }
        if let Some(t) = get("CITECHECK_TRANSPORT") {
            cfg.transport = TransportMode::parse(&t)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown transport `{t}`")))?;
        }
        cfg.fixtures_dir = get("CITECHECK_FIXTURES_DIR").map(PathBuf::from);
        cfg.crossref_mailto = get("CITECHECK_CROSSREF_MAILTO");
        cfg.pubmed_api_key = get("CITECHECK_PUBMED_API_KEY");
        cfg.s2_api_key = get("CITECHECK_S2_API_KEY");
        for (source, var) in [
            (SourceName::Crossref, "CITECHECK_CROSSREF_URL"),
            (SourceName::Pubmed, "CITECHECK_PUBMED_URL"),
            (SourceName::Arxiv, "CITECHECK_ARXIV_URL"),
            (SourceName::SemanticScholar, "CITECHECK_S2_URL"),
        ] {
            if let Some(u) = get(var) {
                cfg.base_urls.insert(source, u);
            }
        }
        Ok(cfg)
    }

    pub fn from_env() -> Result<Self> {
        Self::from_env_with(|k| std::env::var(k).ok())
    }

    pub fn base_url(&self, source: SourceName) -> &str {
        self.base_urls.get(&source).map(String::as_str).unwrap_or(match source {
            SourceName::Crossref => CROSSREF_BASE,
            SourceName::Pubmed => PUBMED_BASE,
            SourceName::Arxiv => ARXIV_BASE,
            SourceName::SemanticScholar => S2_BASE,
        })
    }

    pub fn is_enabled(&self, source: SourceName) -> bool {
        self.enabled.contains(&source)
    }

    pub fn build_transport(&self) -> Result<Box<dyn Transport>> {
        transport::build_transport(
            self.transport,
            self.fixtures_dir.as_deref(),
            self.timeout,
            RetryPolicy {
                max_retries: 2,
                base_backoff: self.base_backoff,
            },
        )
    }
}

/// Shared, read-only handle used by verification workers.
#[derive(Clone)]
pub struct Connectors {
    pub config: Arc<SourceConfig>,
    pub transport: Arc<dyn Transport>,
}

impl Connectors {
    pub fn new(config: SourceConfig, transport: Arc<dyn Transport>) -> Self {
        Connectors {
            config: Arc::new(config),
            transport,
        }
    }

    pub fn from_config(config: SourceConfig) -> Result<Self> {
        let transport: Arc<dyn Transport> = Arc::from(config.build_transport()?);
        Ok(Self::new(config, transport))
    }

    pub fn enabled_sources(&self) -> Vec<SourceName> {
        SourceName::ALL.into_iter().filter(|s| self.config.is_enabled(*s)).collect()
    }
}

pub fn supports(source: SourceName, kind: QueryKind) -> bool {
    match source {
        SourceName::Crossref => kind != QueryKind::PmidLookup && kind != QueryKind::ArxivLookup,
        SourceName::Pubmed => kind != QueryKind::ArxivLookup,
        SourceName::Arxiv => kind != QueryKind::DoiLookup && kind != QueryKind::PmidLookup,
        SourceName::SemanticScholar => true,
    }
}

/// Result of one HTTP step inside a connector.
pub(crate) struct Step {
    pub response: std::result::Result<RawResponse, FetchFailure>,
    pub key: String,
}

pub(crate) fn run_step(transport: &dyn Transport, req: &Request) -> Step {
    Step {
        key: req.request_key(),
        response: transport.fetch(req),
    }
}

/// Turn an exchange into either its body or a failure class.
pub(crate) fn check_response(step: &Step) -> std::result::Result<&[u8], FailureClass> {
    match &step.response {
        Err(FetchFailure::Io(e)) => Err(classify_failure(None, BodyState::Ok, Some(e)).unwrap()),
        Err(FetchFailure::FixtureMissing(k)) => Err(FailureClass::new(
            FailureKind::Transport,
            format!("no recorded fixture for request key `{k}`"),
        )),
        Ok(r) => match classify_failure(Some(r.status), BodyState::Ok, None) {
            Some(f) => Err(f),
            None => Ok(&r.body),
        },
    }
}

pub(crate) fn malformed(detail: impl std::fmt::Display) -> FailureClass {
    let mut f = classify_failure(Some(200), BodyState::Malformed, None).unwrap();
    f.detail = format!("{}: {detail}", f.detail);
    f
}

pub(crate) fn empty() -> FailureClass {
    classify_failure(Some(200), BodyState::Empty, None).unwrap()
}

/// Run one query against one source. Remote problems become failure values;
/// only querying a disabled source is an error.
pub fn query_source(source: SourceName, query: &Query, connectors: &Connectors) -> Result<QueryOutcome> {
    if !connectors.config.is_enabled(source) {
        return Err(Error::DisabledSource(source.as_str().to_string()));
    }
    let cfg = &*connectors.config;
    let t = &*connectors.transport;
    let (result, steps) = match source {
        SourceName::Crossref => crossref::run(query, cfg, t),
        SourceName::Pubmed => pubmed::run(query, cfg, t),
        SourceName::Arxiv => arxiv::run(query, cfg, t),
        SourceName::SemanticScholar => semantic_scholar::run(query, cfg, t),
    };
    let latency_ms = steps
        .iter()
        .map(|s| s.response.as_ref().map(|r| r.elapsed_ms).unwrap_or(0))
        .sum();
    let result = match result {
        Ok(mut records) if !records.is_empty() => {
            sort_candidates(&mut records);
            records.dedup_by(|a, b| a.sort_key() == b.sort_key());
            records.truncate(query.limit() as usize);
            QueryResult::Records(records)
        }
        Ok(_) => QueryResult::Failure(empty()),
        Err(f) => QueryResult::Failure(f),
    };
    Ok(QueryOutcome {
        source,
        query: query.clone(),
        result,
        latency_ms,
        request_keys: steps.into_iter().map(|s| s.key).collect(),
    })
}

/// One entry per source, disabled ones included with zero counts.
pub fn summarize_health<'a>(outcomes: impl IntoIterator<Item = &'a QueryOutcome>, enabled: &BTreeSet<SourceName>) -> Vec<SourceHealth> {
    let mut map: BTreeMap<SourceName, SourceHealth> = SourceName::ALL
        .into_iter()
        .map(|s| {
            (
                s,
                SourceHealth {
                    source: s,
                    enabled: enabled.contains(&s),
                    attempted: 0,
                    succeeded: 0,
                    failures_by_class: BTreeMap::new(),
                },
            )
        })
        .collect();
    for o in outcomes {
        let h = map.get_mut(&o.source).expect("all sources present");
        h.attempted += 1;
        match o.failure() {
            Some(f) if f.class != FailureKind::NotFound => *h.failures_by_class.entry(f.class).or_insert(0) += 1,
            _ => h.succeeded += 1,
        }
    }
    map.into_values().collect()
}

/// Shared helper: build a record with normalized identifiers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn make_record(
    source: SourceName,
    source_id: String,
    title: &str,
    authors: Vec<Author>,
    year: Option<i32>,
    venue: Option<String>,
    doi: Option<&str>,
    pmid: Option<&str>,
    arxiv: Option<&str>,
    kind: ManifestationKind,
    provenance: &str,
) -> CandidateRecord {
    CandidateRecord {
        source,
        source_id,
        title: crate::text::squash_whitespace(title).trim_end_matches('.').to_string(),
        authors,
        year: year.filter(|y| (crate::extract::normalize::YEAR_MIN..=crate::extract::normalize::YEAR_MAX).contains(y)),
        venue: venue.map(|v| crate::text::squash_whitespace(&v)).filter(|v| !v.is_empty()),
        doi: doi.and_then(ids::normalize_doi),
        pmid: pmid.and_then(ids::normalize_pmid),
        arxiv_id: arxiv.and_then(ids::normalize_arxiv).map(|(id, _)| id),
        volume: None,
        pages: None,
        manifestation_kind: kind,
        related_ids: Vec::new(),
        raw_provenance: provenance.to_string(),
    }
}

pub(crate) fn first_year(s: &str) -> Option<i32> {
    crate::extract::normalize::find_year(s)
}
