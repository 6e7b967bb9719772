//! Glue from a corpus to clusters: tail, tokenize and embed the logs of
//! failing records, then grid-search HDBSCAN over the embeddings.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{extract_clusters, grid_search, hdbscan, ClusterAssignment, ClusterError, ClusteringParams, GridSearchReport};
use crate::corpus::BuildRecord;
use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::logpipe::{tail_error_log, tokenize, LogSource, TokenSequence, DEFAULT_TAIL_LINES};
use crate::search::STOP_WORDS;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed assignment file {path}: {message}")]
    Format { path: String, message: String },
}

/// Token sequence of a record's log tail, and whether stdout stood in
/// for an empty stderr.
pub fn record_tokens(record: &BuildRecord, tail_lines: usize) -> (TokenSequence, LogSource) {
    let tail = tail_error_log(&record.stderr_log, &record.stdout_log, tail_lines);
    (tokenize(&tail.text).with_origin(&record.record_id), tail.source)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedLogs {
    pub record_ids: Vec<String>,
    pub vectors: Vec<EmbeddingVector>,
    /// Records whose tail came from stdout because stderr was empty.
    pub stdout_fallback: Vec<String>,
}

/// Embeds the log tails of the failing records, in corpus order.
pub fn embed_failures(records: &[BuildRecord], embedder: &dyn Embedder) -> Result<EmbeddedLogs, EmbedError> {
    let mut record_ids = Vec::new();
    let mut batch = Vec::new();
    let mut stdout_fallback = Vec::new();
    for r in records.iter().filter(|r| r.is_failure()) {
        let (tokens, source) = record_tokens(r, DEFAULT_TAIL_LINES);
        if source == LogSource::Stdout {
            stdout_fallback.push(r.record_id.clone());
        }
        record_ids.push(r.record_id.clone());
        batch.push(tokens);
    }
    let vectors = embedder.embed_batch(&batch)?;
    Ok(EmbeddedLogs {
        record_ids,
        vectors,
        stdout_fallback,
    })
}

/// Clusters of the failing records of a corpus. `assignment.labels[i]`
/// belongs to `record_ids[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub record_ids: Vec<String>,
    pub assignment: ClusterAssignment,
    pub grid: GridSearchReport,
    #[serde(default)]
    pub stdout_fallback: Vec<String>,
}

impl ClusterRun {
    pub fn label_of(&self, record_id: &str) -> Option<i64> {
        let i = self.record_ids.iter().position(|id| id == record_id)?;
        Some(self.assignment.labels[i])
    }

    pub fn members(&self, cluster_id: i64) -> Vec<&str> {
        self.record_ids
            .iter()
            .zip(&self.assignment.labels)
            .filter(|(_, &l)| l == cluster_id)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// The run's records in run order, looked up in `records`. Records
    /// missing from `records` are skipped and reported.
    pub fn aligned<'a>(&self, records: &'a [BuildRecord]) -> (Vec<&'a BuildRecord>, Vec<String>) {
        let by_id: HashMap<&str, &BuildRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
        let mut out = Vec::with_capacity(self.record_ids.len());
        let mut missing = Vec::new();
        for id in &self.record_ids {
            match by_id.get(id.as_str()) {
                Some(r) => out.push(*r),
                None => missing.push(id.clone()),
            }
        }
        (out, missing)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("cluster runs always serialize");
        fs::write(path, text + "\n").map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Embeds the failing records, grid-searches the parameters and returns
/// the clustering of the winning configuration.
pub fn cluster_failures(
    records: &[BuildRecord],
    embedder: &dyn Embedder,
    grid: &[ClusteringParams],
) -> Result<ClusterRun, PipelineError> {
    let logs = embed_failures(records, embedder)?;
    let report = grid_search(&logs.vectors, grid)?;
    let best = report.best_entry();
    let assignment = if best.skipped.is_some() {
        extract_clusters(logs.vectors.len(), &[], &best.params)
    } else {
        hdbscan(&logs.vectors, &best.params)?
    };
    Ok(ClusterRun {
        record_ids: logs.record_ids,
        assignment,
        grid: report,
        stdout_fallback: logs.stdout_fallback,
    })
}

/// Most frequent tail tokens across `records`, ignoring stop words,
/// numbers and one-letter tokens. Ties break alphabetically.
pub fn top_terms<'a>(records: impl IntoIterator<Item = &'a BuildRecord>, n: usize) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        let (tokens, _) = record_tokens(r, DEFAULT_TAIL_LINES);
        let mut seen = std::collections::HashSet::new();
        for t in tokens.tokens {
            if t.len() < 2 || STOP_WORDS.contains(&t.as_str()) || t.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            // Document frequency: one count per record.
            if seen.insert(t.clone()) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut terms: Vec<_> = counts.into_iter().collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    terms.into_iter().take(n).map(|(t, _)| t).collect()
}
