//! Build records, corpus files, and outcome classification.
//!
//! A corpus file is UTF-8 JSON Lines: one [`BuildRecord`] object per line.
//! Lines that fail to decode or violate a record invariant are collected
//! into a [`Reject`] list instead of aborting the whole ingest.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Build time limit used when nothing else is configured (30 minutes).
pub const DEFAULT_TIMEOUT_LIMIT_S: f64 = 1800.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("duplicate record id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("timeout limit must be positive, got {0}")]
    InvalidTimeoutLimit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildOutcome {
    Success,
    Failure,
    Timeout,
    Undetermined,
}

impl BuildOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            BuildOutcome::Success => "success",
            BuildOutcome::Failure => "failure",
            BuildOutcome::Timeout => "timeout",
            BuildOutcome::Undetermined => "undetermined",
        }
    }
}

impl fmt::Display for BuildOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuildOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "success" => Ok(BuildOutcome::Success),
            "failure" => Ok(BuildOutcome::Failure),
            "timeout" => Ok(BuildOutcome::Timeout),
            "undetermined" => Ok(BuildOutcome::Undetermined),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// One Dockerfile build attempt.
///
/// Field names on the wire are fixed by the corpus format and differ from
/// the Rust names in a few places (`id`, `repo`, `dockerfile`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildRecord {
    #[serde(rename = "id")]
    pub record_id: String,
    #[serde(rename = "repo")]
    pub repo_ref: String,
    pub dockerfile_path: String,
    #[serde(rename = "dockerfile")]
    pub dockerfile_text: String,
    #[serde(rename = "stdout")]
    pub stdout_log: String,
    #[serde(rename = "stderr")]
    pub stderr_log: String,
    pub outcome: BuildOutcome,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub captured_at: DateTime<FixedOffset>,
    pub meta: BTreeMap<String, String>,
}

impl BuildRecord {
    /// Checks the per-record invariants that serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        if self.record_id.is_empty() {
            return Err("empty record id".into());
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(format!("duration must be a non-negative number, got {}", self.duration));
        }
        if self.outcome != BuildOutcome::Undetermined && self.dockerfile_text.is_empty() {
            return Err(format!("empty dockerfile for outcome {}", self.outcome));
        }
        Ok(())
    }

    pub fn is_failure(&self) -> bool {
        self.outcome == BuildOutcome::Failure
    }
}

/// A corpus line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the corpus file.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<BuildRecord>,
    pub rejects: Vec<Reject>,
}

/// Reads a corpus file. Blank lines are skipped.
pub fn ingest_corpus(path: impl AsRef<Path>) -> Result<Ingested, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    ingest_reader(BufReader::new(file)).map_err(|e| match e {
        IngestError::Io(source) => io_err(source),
        IngestError::Corpus(e) => e,
    })
}

enum IngestError {
    Io(io::Error),
    Corpus(CorpusError),
}

fn ingest_reader(reader: impl BufRead) -> Result<Ingested, IngestError> {
    let mut out = Ingested::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(IngestError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: BuildRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject {
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if let Err(reason) = record.validate() {
            out.rejects.push(Reject { line: line_no, reason });
            continue;
        }
        if let Some(&first_line) = seen.get(&record.record_id) {
            return Err(IngestError::Corpus(CorpusError::DuplicateId {
                id: record.record_id,
                first_line,
                second_line: line_no,
            }));
        }
        seen.insert(record.record_id.clone(), line_no);
        out.records.push(record);
    }
    Ok(out)
}

/// Parses corpus text already held in memory.
pub fn ingest_str(text: &str) -> Result<Ingested, CorpusError> {
    ingest_reader(text.as_bytes()).map_err(|e| match e {
        IngestError::Io(source) => CorpusError::Io {
            path: PathBuf::from("<memory>"),
            source,
        },
        IngestError::Corpus(e) => e,
    })
}

pub fn to_line(record: &BuildRecord) -> String {
    serde_json::to_string(record).expect("build records always serialize")
}

/// Writes `records` to `path`, replacing any existing file.
pub fn persist_corpus(records: &[BuildRecord], path: impl AsRef<Path>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", to_line(r))?;
    }
    w.flush()
}

/// Append-only corpus writer shared by concurrent producers.
///
/// Every append is a complete line followed by a flush, so a crash leaves
/// at worst the records that had not been appended yet.
pub struct CorpusWriter {
    inner: Mutex<BufWriter<File>>,
}

impl CorpusWriter {
    pub fn append_to(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, record: &BuildRecord) -> io::Result<()> {
        let mut w = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(w, "{}", to_line(record))?;
        w.flush()
    }
}

/// Decides the outcome of a finished (or killed) build.
///
/// Precedence: timeout, then daemon error, then exit code. A build with no
/// exit code that neither timed out nor hit a daemon error is undetermined.
pub fn classify_outcome(
    exit_code: Option<i32>,
    duration_s: f64,
    daemon_error: bool,
    timeout_limit_s: f64,
) -> Result<BuildOutcome, CorpusError> {
    if !(timeout_limit_s > 0.0) {
        return Err(CorpusError::InvalidTimeoutLimit(timeout_limit_s));
    }
    Ok(if duration_s >= timeout_limit_s {
        BuildOutcome::Timeout
    } else if daemon_error {
        BuildOutcome::Undetermined
    } else {
        match exit_code {
            Some(0) => BuildOutcome::Success,
            Some(_) => BuildOutcome::Failure,
            None => BuildOutcome::Undetermined,
        }
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub successes: usize,
    pub failures: usize,
    pub timeouts: usize,
    pub undetermined: usize,
    /// Failures over total. Timeouts and undetermined builds count as not broken.
    pub breakage_rate: f64,
}

pub fn corpus_stats(records: &[BuildRecord]) -> CorpusStats {
    stats_from_outcomes(records.iter().map(|r| r.outcome))
}

pub fn stats_from_outcomes(outcomes: impl IntoIterator<Item = BuildOutcome>) -> CorpusStats {
    let mut s = CorpusStats::default();
    for o in outcomes {
        s.total += 1;
        match o {
            BuildOutcome::Success => s.successes += 1,
            BuildOutcome::Failure => s.failures += 1,
            BuildOutcome::Timeout => s.timeouts += 1,
            BuildOutcome::Undetermined => s.undetermined += 1,
        }
    }
    s.breakage_rate = if s.total == 0 {
        0.0
    } else {
        s.failures as f64 / s.total as f64
    };
    s
}


#[cfg(test)]
mod tests {
    use super::test_support::record;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ingest_three_lines_in_order() {
        let text: String = ["a", "b", "c"]
            .iter()
            .map(|id| to_line(&record(id, BuildOutcome::Failure)) + "\n")
            .collect();
        let got = ingest_str(&text).unwrap();
        let ids: Vec<_> = got.records.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(got.rejects.is_empty());
    }

    #[test]
    fn malformed_line_goes_to_rejects() {
        let text = format!(
            "{}\n{}\n{{\"id\": \"broken\"\n",
            to_line(&record("a", BuildOutcome::Success)),
            to_line(&record("b", BuildOutcome::Failure)),
        );
        let got = ingest_str(&text).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.rejects.len(), 1);
        assert_eq!(got.rejects[0].line, 3);
    }

    #[test]
    fn empty_file_is_empty() {
        let got = ingest_str("").unwrap();
        assert!(got.records.is_empty() && got.rejects.is_empty());
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let mut neg = record("neg", BuildOutcome::Failure);
        neg.duration = -1.0;
        let mut empty = record("empty", BuildOutcome::Failure);
        empty.dockerfile_text.clear();
        let mut undetermined = record("undet", BuildOutcome::Undetermined);
        undetermined.dockerfile_text.clear();
        let text = [neg, empty, undetermined]
            .iter()
            .map(|r| to_line(r) + "\n")
            .collect::<String>();
        let got = ingest_str(&text).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.records[0].record_id, "undet");
        assert_eq!(got.rejects.iter().map(|r| r.line).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn unknown_outcome_and_extra_fields_are_rejected() {
        let line = to_line(&record("x", BuildOutcome::Failure));
        let bad_outcome = line.replace("\"failure\"", "\"exploded\"");
        let extra = line.replacen('{', "{\"bogus\":1,", 1);
        let got = ingest_str(&format!("{bad_outcome}\n{extra}\n")).unwrap();
        assert!(got.records.is_empty());
        assert_eq!(got.rejects.len(), 2);
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let l = to_line(&record("dup", BuildOutcome::Failure));
        let other = to_line(&record("other", BuildOutcome::Failure));
        let err = ingest_str(&format!("{l}\n{other}\n{l}\n")).unwrap_err();
        match err {
            CorpusError::DuplicateId {
                id,
                first_line,
                second_line,
            } => {
                assert_eq!(id, "dup");
                assert_eq!((first_line, second_line), (1, 3));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn wire_field_names() {
        let v: serde_json::Value = serde_json::from_str(&to_line(&record("a", BuildOutcome::Timeout))).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "captured_at",
                "dockerfile",
                "dockerfile_path",
                "duration_s",
                "id",
                "meta",
                "outcome",
                "repo",
                "stderr",
                "stdout"
            ]
        );
        assert_eq!(v["outcome"], "timeout");
    }

    #[test]
    fn classify_branch_table() {
        use BuildOutcome::*;
        let lim = DEFAULT_TIMEOUT_LIMIT_S;
        assert_eq!(classify_outcome(Some(0), 60.0, false, lim).unwrap(), Success);
        assert_eq!(classify_outcome(None, 1800.0, false, lim).unwrap(), Timeout);
        assert_eq!(classify_outcome(Some(1), 40.0, true, lim).unwrap(), Undetermined);
        assert_eq!(classify_outcome(Some(2), 40.0, false, lim).unwrap(), Failure);
        assert_eq!(classify_outcome(None, 40.0, false, lim).unwrap(), Undetermined);
        // timeout wins over everything else
        assert_eq!(classify_outcome(Some(0), 1800.0, true, lim).unwrap(), Timeout);
        assert_eq!(classify_outcome(Some(0), 1799.999, false, lim).unwrap(), Success);
        assert!(classify_outcome(Some(0), 1.0, false, 0.0).is_err());
        assert!(classify_outcome(Some(0), 1.0, false, -5.0).is_err());
    }

    #[test]
    fn stats_examples() {
        use BuildOutcome::*;
        let mut outcomes = vec![Success; 12];
        outcomes.extend([Failure; 5]);
        outcomes.push(Timeout);
        outcomes.extend([Undetermined; 2]);
        let s = stats_from_outcomes(outcomes);
        assert_eq!((s.total, s.successes, s.failures, s.timeouts, s.undetermined), (20, 12, 5, 1, 2));
        assert_eq!(s.breakage_rate, 0.25);

        assert_eq!(stats_from_outcomes(vec![Success; 7]).breakage_rate, 0.0);
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }

    #[test]
    fn persist_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut a = record("a", BuildOutcome::Failure);
        a.stderr_log = "E: Unable to locate package python-pip\n\u{1b}[0m naïve \"quoted\"".into();
        a.meta.insert("stars".into(), "42".into());
        a.captured_at = DateTime::parse_from_rfc3339("2020-08-14T09:30:00-03:00").unwrap();
        let records = vec![a, record("b", BuildOutcome::Timeout)];
        persist_corpus(&records, &path).unwrap();
        assert_eq!(ingest_corpus(&path).unwrap().records, records);

        let w = CorpusWriter::append_to(&path).unwrap();
        w.append(&record("c", BuildOutcome::Success)).unwrap();
        assert_eq!(ingest_corpus(&path).unwrap().records.len(), 3);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            ingest_corpus("/nonexistent/corpus.jsonl"),
            Err(CorpusError::Io { .. })
        ));
    }

    fn outcome() -> impl Strategy<Value = BuildOutcome> {
        prop_oneof![
            Just(BuildOutcome::Success),
            Just(BuildOutcome::Failure),
            Just(BuildOutcome::Timeout),
            Just(BuildOutcome::Undetermined),
        ]
    }

    proptest! {
        #[test]
        fn stats_partition_total(outcomes in proptest::collection::vec(outcome(), 0..200)) {
            let s = stats_from_outcomes(outcomes.iter().copied());
            prop_assert_eq!(s.successes + s.failures + s.timeouts + s.undetermined, s.total);
            prop_assert_eq!(s.total, outcomes.len());
            prop_assert!((0.0..=1.0).contains(&s.breakage_rate));
        }

        #[test]
        fn classify_is_total_and_ordered(
            exit in proptest::option::of(-3i32..300),
            duration in 0.0f64..4000.0,
            daemon in any::<bool>(),
            limit in 1.0f64..3000.0,
        ) {
            let o = classify_outcome(exit, duration, daemon, limit).unwrap();
            let expected = if duration >= limit {
                BuildOutcome::Timeout
            } else if daemon {
                BuildOutcome::Undetermined
            } else if exit == Some(0) {
                BuildOutcome::Success
            } else if exit.is_some() {
                BuildOutcome::Failure
            } else {
                BuildOutcome::Undetermined
            };
            prop_assert_eq!(o, expected);
        }
    }
}
