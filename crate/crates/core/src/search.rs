//! Search leads for failures no rule covers.
//!
//! Keywords come from the last error-bearing log line; the query goes to a
//! pluggable backend (`GET {base}/search?q=...` returning a ranked JSON
//! array of `{url, title}`), and results are filtered to community forums.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::logpipe::{tail_error_log, tokenize, DEFAULT_TAIL_LINES};

/// Env var naming the search backend base URL.
pub const SEARCH_URL_ENV: &str = "DOCKWRIGHT_SEARCH_URL";

pub const MAX_RESULTS: usize = 5;
pub const MAX_KEYWORDS: usize = 12;

/// Leading term of every query string.
pub const QUERY_PREFIX: &str = "dockerfile";

pub const DEFAULT_ERROR_MARKERS: &[&str] = &["error", "fatal", "unable", "failed", "cannot"];

pub const DEFAULT_ALLOWLIST: &[&str] = &[
    "stackoverflow.com",
    "forums.docker.com",
    "github.com/*/issues",
    "serverfault.com",
    "superuser.com",
];

/// Dropped from keyword lists. `e` and `w` are apt's message prefixes.
pub const STOP_WORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "if", "then", "else", "of", "to", "in", "on", "at", "by", "for",
    "with", "from", "as", "is", "are", "was", "were", "be", "been", "this", "that", "these", "those", "it",
    "its", "your", "you", "we", "our", "not", "no", "can", "could", "should", "would", "will", "do",
    "does", "did", "has", "have", "had", "e", "w",
];

#[derive(Debug, Error)]
pub enum SearchError {
    /// Connection failure, timeout, or 5xx. Safe to retry.
    #[error("search backend unreachable: {0}")]
    Transport(String),
    #[error("search backend protocol error: {0}")]
    Protocol(String),
    #[error("bad allowlist entry {0:?}")]
    Allowlist(String),
}

impl SearchError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, SearchError::Transport(_))
    }
}

fn is_path_like(word: &str) -> bool {
    word.contains('/') || word.contains('\\') || word.starts_with('~')
}

fn is_hex_blob(token: &str) -> bool {
    token.len() >= 6
        && token.chars().all(|c| c.is_ascii_hexdigit())
        && token.chars().any(|c| c.is_ascii_digit())
}

/// Picks the line keywords are taken from: scanning the tail upward, the
/// first line containing an error marker, else the last non-blank line.
pub fn error_line<'a>(log: &'a str, markers: &[&str]) -> Option<&'a str> {
    let lines: Vec<&str> = log.lines().filter(|l| !l.trim().is_empty()).collect();
    lines
        .iter()
        .rev()
        .find(|l| {
            let lower = l.to_ascii_lowercase();
            markers.iter().any(|m| lower.contains(m))
        })
        .or(lines.last())
        .copied()
}

pub fn extract_keywords(stderr_log: &str, max_k: usize) -> Vec<String> {
    extract_keywords_with(stderr_log, max_k, DEFAULT_ERROR_MARKERS)
}

pub fn extract_keywords_with(log: &str, max_k: usize, markers: &[&str]) -> Vec<String> {
    assert!(max_k >= 1, "max_k must be at least 1");
    let tail = tail_error_log(log, "", DEFAULT_TAIL_LINES);
    let Some(line) = error_line(&tail.text, markers) else {
        return Vec::new();
    };
    let mut out: Vec<String> = Vec::new();
    for word in line.split_whitespace().filter(|w| !is_path_like(w)) {
        let bare = word.trim_matches(|c: char| !c.is_ascii_alphanumeric());
        if is_hex_blob(&bare.to_ascii_lowercase()) {
            continue;
        }
        for tok in tokenize(word).tokens {
            if !tok.chars().any(|c| c.is_ascii_alphanumeric())
                || STOP_WORDS.contains(&tok.as_str())
                || tok.chars().all(|c| c.is_ascii_digit())
                || is_hex_blob(&tok)
                || out.contains(&tok)
            {
                continue;
            }
            out.push(tok);
        }
    }
    out.truncate(max_k);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub keywords: Vec<String>,
    pub query_string: String,
}

impl SearchQuery {
    /// `None` when there are no keywords; more than [`MAX_KEYWORDS`] are cut.
    pub fn new(mut keywords: Vec<String>) -> Option<Self> {
        keywords.truncate(MAX_KEYWORDS);
        if keywords.is_empty() {
            return None;
        }
        let query_string = std::iter::once(QUERY_PREFIX)
            .chain(keywords.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ");
        Some(Self {
            keywords,
            query_string,
        })
    }

    pub fn from_log(log: &str) -> Option<Self> {
        Self::new(extract_keywords(log, MAX_KEYWORDS))
    }
}

/// One backend hit before filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub source_domain: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DomainRule {
    host: String,
    path_glob: Option<String>,
}

/// Domains (optionally with a `*`-glob path prefix) results must come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allowlist {
    rules: Vec<DomainRule>,
    entries: Vec<String>,
}

impl Default for Allowlist {
    fn default() -> Self {
        Self::new(DEFAULT_ALLOWLIST.iter().copied()).expect("default allowlist is valid")
    }
}

fn glob_match(pattern: &[u8], text: &[u8]) -> bool {
    match pattern.split_first() {
        None => text.is_empty(),
        Some((b'*', rest)) => (0..=text.len()).any(|i| glob_match(rest, &text[i..])),
        Some((&c, rest)) => text.first() == Some(&c) && glob_match(rest, &text[1..]),
    }
}

impl Allowlist {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = S>) -> Result<Self, SearchError> {
        let mut rules = Vec::new();
        let mut kept = Vec::new();
        for e in entries {
            let e = e.as_ref().trim();
            let (host, path) = match e.split_once('/') {
                Some((h, p)) => (h, Some(format!("/{}", p.trim_end_matches('/')))),
                None => (e, None),
            };
            if host.is_empty() || host.contains('*') {
                return Err(SearchError::Allowlist(e.to_string()));
            }
            rules.push(DomainRule {
                host: host.to_ascii_lowercase(),
                path_glob: path,
            });
            kept.push(e.to_string());
        }
        Ok(Self { rules, entries: kept })
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Host of `url` when it is allowed.
    pub fn admit(&self, url: &str) -> Option<String> {
        let parsed = Url::parse(url).ok()?;
        let host = parsed.host_str()?.to_ascii_lowercase();
        let path = parsed.path();
        let ok = self.rules.iter().any(|r| {
            let host_ok = host == r.host || host.ends_with(&format!(".{}", r.host));
            host_ok
                && r.path_glob.as_ref().is_none_or(|g| {
                    // Prefix match on whole path segments.
                    let g = g.as_bytes();
                    glob_match(g, path.as_bytes())
                        || path
                            .match_indices('/')
                            .any(|(i, _)| i > 0 && glob_match(g, &path.as_bytes()[..i]))
                })
        });
        ok.then_some(host)
    }
}

/// Keeps allowlisted hits in backend order, at most five.
pub fn filter_top5(hits: impl IntoIterator<Item = RawHit>, allowlist: &Allowlist) -> Vec<SearchResult> {
    hits.into_iter()
        .filter_map(|h| {
            allowlist.admit(&h.url).map(|domain| SearchResult {
                url: h.url,
                title: h.title,
                source_domain: domain,
            })
        })
        .take(MAX_RESULTS)
        .collect()
}

pub trait SearchBackend: Send + Sync {
    /// Ranked hits for `query`, best first.
    fn search(&self, query: &str) -> Result<Vec<RawHit>, SearchError>;
}

pub fn search_top5(
    query: &SearchQuery,
    backend: &dyn SearchBackend,
    allowlist: &Allowlist,
) -> Result<Vec<SearchResult>, SearchError> {
    Ok(filter_top5(backend.search(&query.query_string)?, allowlist))
}

/// HTTP client for the search backend wire format.
pub struct HttpSearchBackend {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpSearchBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: format!("{}/search", base_url.trim_end_matches('/')),
            agent,
        }
    }

    /// Uses `DOCKWRIGHT_SEARCH_URL` when set.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        std::env::var(SEARCH_URL_ENV)
            .ok()
            .filter(|u| !u.is_empty())
            .map(|u| Self::new(&u, timeout))
    }
}

impl SearchBackend for HttpSearchBackend {
    fn search(&self, query: &str) -> Result<Vec<RawHit>, SearchError> {
        let mut resp = self
            .agent
            .get(&self.endpoint)
            .query("q", query)
            .call()
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(SearchError::Transport(format!("status {status}")));
        }
        if status != 200 {
            return Err(SearchError::Protocol(format!("status {status}")));
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| SearchError::Protocol(e.to_string()))
    }
}

/// Backend plus allowlist: what the repair fallback and the workbench use.
pub struct Searcher {
    backend: Box<dyn SearchBackend>,
    allowlist: Allowlist,
}

impl Searcher {
    pub fn new(backend: Box<dyn SearchBackend>, allowlist: Allowlist) -> Self {
        Self { backend, allowlist }
    }

    pub fn allowlist(&self) -> &Allowlist {
        &self.allowlist
    }

    /// Query built from `log` and its filtered results. No keywords means
    /// no query and no results.
    pub fn leads(&self, log: &str) -> Result<(Option<SearchQuery>, Vec<SearchResult>), SearchError> {
        match SearchQuery::from_log(log) {
            None => Ok((None, Vec::new())),
            Some(q) => {
                let results = search_top5(&q, self.backend.as_ref(), &self.allowlist)?;
                Ok((Some(q), results))
            }
        }
    }
}
