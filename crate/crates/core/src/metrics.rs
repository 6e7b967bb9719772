//! Evaluation quantities: how far each repair generalizes across clusters,
//! what share of each cluster gets a repair or a suggestion, and whether a
//! generated repair matches the fix a developer actually made.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffTag};
use thiserror::Error;

use crate::cluster::ClusterAssignment;
use crate::corpus::BuildRecord;
use crate::dockerfile::{parse, InstructionKind, SourceSpan};
use crate::rules::{classify, match_log, match_rule, repair, Binding, OutcomeKind, RepairOutcome, RuleDb, Suggestion};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{labels} cluster labels for {records} records")]
    LengthMismatch { labels: usize, records: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub rule_id: String,
    /// Clusters with at least one matching member.
    pub cluster_count: usize,
    /// Matched fraction of the rule's parent cluster; absent when the rule
    /// declares no parent or an id the assignment does not have.
    pub parent_coverage: Option<f64>,
    /// Mean matched fraction over the clusters counted in `cluster_count`.
    pub average_coverage: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProportion {
    pub cluster_id: i64,
    pub size: usize,
    pub repaired_frac: f64,
    pub suggested_frac: f64,
    pub unknown_frac: f64,
}

/// Record indices per cluster id, noise excluded.
fn clusters_of(assignment: &ClusterAssignment, records: &[BuildRecord]) -> Result<BTreeMap<i64, Vec<usize>>, MetricsError> {
    if assignment.labels.len() != records.len() {
        return Err(MetricsError::LengthMismatch {
            labels: assignment.labels.len(),
            records: records.len(),
        });
    }
    let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in assignment.labels.iter().enumerate() {
        if label >= 0 {
            out.entry(label).or_default().push(i);
        }
    }
    Ok(out)
}

/// Per repair rule: how much of each cluster its pattern matches.
///
/// `assignment.labels[i]` labels `records[i]`. Only failing members can
/// match; the denominator of a cluster's fraction is its full size.
pub fn repair_coverage(
    db: &RuleDb,
    assignment: &ClusterAssignment,
    records: &[BuildRecord],
) -> Result<CoverageReport, MetricsError> {
    let clusters = clusters_of(assignment, records)?;
    let logs: Vec<String> = records.iter().map(match_log).collect();
    let mut report = CoverageReport::default();
    for rule in &db.repairs {
        let mut fractions: BTreeMap<i64, f64> = BTreeMap::new();
        for (&cid, members) in &clusters {
            let matched = members
                .iter()
                .filter(|&&i| {
                    records[i].is_failure()
                        && match_rule(&rule.pattern, &records[i].dockerfile_text, &logs[i]).is_some()
                })
                .count();
            fractions.insert(cid, matched as f64 / members.len() as f64);
        }
        let hit: Vec<f64> = fractions.values().copied().filter(|&f| f > 0.0).collect();
        if hit.is_empty() {
            continue;
        }
        let parent_coverage = match rule.parent_cluster {
            Some(p) => match fractions.get(&p) {
                Some(&f) => Some(f),
                None => {
                    report
                        .warnings
                        .push(format!("rule {}: parent cluster {p} is not in the assignment", rule.id));
                    None
                }
            },
            None => {
                report
                    .warnings
                    .push(format!("rule {}: no parent cluster declared", rule.id));
                None
            }
        };
        report.rows.push(CoverageRow {
            rule_id: rule.id.clone(),
            cluster_count: hit.len(),
            parent_coverage,
            average_coverage: hit.iter().sum::<f64>() / hit.len() as f64,
        });
    }
    Ok(report)
}

/// Share of repaired / suggested / unknown members per non-singleton
/// cluster, using the same precedence as [`repair`](crate::rules::repair).
/// Members that are not failures count as unknown.
pub fn solution_proportions(
    db: &RuleDb,
    assignment: &ClusterAssignment,
    records: &[BuildRecord],
) -> Result<Vec<ClusterProportion>, MetricsError> {
    let clusters = clusters_of(assignment, records)?;
    let mut out = Vec::new();
    for (cid, members) in clusters {
        if members.len() < 2 {
            continue;
        }
        let (mut repaired, mut suggested) = (0usize, 0usize);
        for &i in &members {
            match classify(&records[i], db) {
                Ok(OutcomeKind::Repaired) => repaired += 1,
                Ok(OutcomeKind::Suggested) => suggested += 1,
                Ok(OutcomeKind::Unknown) | Err(_) => {}
            }
        }
        let size = members.len();
        let n = size as f64;
        out.push(ClusterProportion {
            cluster_id: cid,
            size,
            repaired_frac: repaired as f64 / n,
            suggested_frac: suggested as f64 / n,
            unknown_frac: (size - repaired - suggested) as f64 / n,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceTag {
    IdenticalRepair,
    SuggestionMatch,
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub tag: EquivalenceTag,
    pub detail: String,
}

impl EquivalenceVerdict {
    fn new(tag: EquivalenceTag, detail: impl Into<String>) -> Self {
        Self {
            tag,
            detail: detail.into(),
        }
    }
}

/// Instruction keys compared for equivalence: kind plus whitespace-
/// normalized arguments. Comments do not take part.
fn instruction_keys(text: &str) -> (Vec<(InstructionKind, String)>, Vec<SourceSpan>) {
    parse(text)
        .instructions
        .iter()
        .filter(|i| i.kind != InstructionKind::Comment)
        .map(|i| ((i.kind, i.normalized_args()), i.span))
        .unzip()
}

/// What a developer's edit touched in the broken file.
struct Touched {
    /// Spans of broken-file instructions that were removed or rewritten.
    spans: Vec<SourceSpan>,
    /// Kinds of removed, rewritten, or added instructions.
    kinds: BTreeSet<InstructionKind>,
}

fn touched(broken: &str, developer: &str) -> Touched {
    let (old, old_spans) = instruction_keys(broken);
    let (new, _) = instruction_keys(developer);
    let mut t = Touched {
        spans: Vec::new(),
        kinds: BTreeSet::new(),
    };
    for op in capture_diff_slices(Algorithm::Myers, &old, &new) {
        let (tag, old_range, new_range) = op.as_tag_tuple();
        if tag == DiffTag::Equal {
            continue;
        }
        for i in old_range {
            t.spans.push(old_spans[i]);
            t.kinds.insert(old[i].0);
        }
        for j in new_range {
            t.kinds.insert(new[j].0);
        }
    }
    t
}

/// A suggestion that fired on the broken file, with its binding.
pub struct FiredSuggestion<'a> {
    pub suggestion: &'a Suggestion,
    pub binding: &'a Binding,
}

/// Compares a generated repair (if any) and a fired suggestion (if any)
/// against the developer's fixed file.
///
/// Identical repair: the generated variant and the developer file have
/// the same instruction sequence, comparing kinds and whitespace-normalized
/// arguments. Suggestion match: the developer's change removes or rewrites
/// the instruction holding the suggestion's Dockerfile match, or, for
/// log-only suggestions, touches an instruction of the kind the suggestion
/// names.
pub fn patch_equivalence(
    broken_text: &str,
    generated_variant: Option<&str>,
    developer_text: &str,
    fired: Option<FiredSuggestion<'_>>,
) -> EquivalenceVerdict {
    use EquivalenceTag::*;
    if let Some(generated) = generated_variant {
        if instruction_keys(generated).0 == instruction_keys(developer_text).0 {
            return EquivalenceVerdict::new(IdenticalRepair, "generated variant equals the developer's file");
        }
    }
    let Some(fired) = fired else {
        return EquivalenceVerdict::new(NoMatch, "no repair equals the developer's file and no suggestion fired");
    };
    let t = touched(broken_text, developer_text);
    let id = &fired.suggestion.id;
    if let Some(m) = fired.binding.static_match {
        return if t.spans.iter().any(|s| s.touches(&m)) {
            EquivalenceVerdict::new(SuggestionMatch, format!("developer changed the instruction {id} points at"))
        } else {
            EquivalenceVerdict::new(NoMatch, format!("developer left the instruction {id} points at unchanged"))
        };
    }
    match fired.suggestion.instruction_kind {
        Some(kind) if t.kinds.contains(&kind) => {
            EquivalenceVerdict::new(SuggestionMatch, format!("developer changed a {kind} instruction, as {id} advises"))
        }
        Some(kind) => EquivalenceVerdict::new(NoMatch, format!("developer changed no {kind} instruction")),
        None => EquivalenceVerdict::new(NoMatch, format!("{id} names no instruction to compare with")),
    }
}

/// Runs the rule database on a broken record and compares the result with
/// the file the developer committed later.
pub fn time_travel(broken: &BuildRecord, developer_text: &str, db: &RuleDb) -> EquivalenceVerdict {
    let outcome = match repair(broken, db, None) {
        Ok(o) => o,
        Err(e) => return EquivalenceVerdict::new(EquivalenceTag::NoMatch, e.to_string()),
    };
    match &outcome {
        RepairOutcome::Repaired { rule_id, variants, .. } => {
            for v in variants {
                let verdict = patch_equivalence(&broken.dockerfile_text, Some(&v.text), developer_text, None);
                if verdict.tag == EquivalenceTag::IdenticalRepair {
                    return EquivalenceVerdict::new(
                        EquivalenceTag::IdenticalRepair,
                        format!("{rule_id} solution {} equals the developer's file", v.solution_index + 1),
                    );
                }
            }
            EquivalenceVerdict::new(EquivalenceTag::NoMatch, format!("no variant of {rule_id} equals the developer's file"))
        }
        RepairOutcome::Suggested {
            suggestion_id, binding, ..
        } => {
            let suggestion = db.suggestion(suggestion_id).expect("fired suggestion is in the database");
            patch_equivalence(
                &broken.dockerfile_text,
                None,
                developer_text,
                Some(FiredSuggestion { suggestion, binding }),
            )
        }
        RepairOutcome::SearchFallback { .. } => {
            EquivalenceVerdict::new(EquivalenceTag::NoMatch, "no repair or suggestion applies")
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeTravelSummary {
    pub total: usize,
    pub identical: usize,
    pub suggestion_match: usize,
    pub no_match: usize,
}

impl TimeTravelSummary {
    pub fn add(&mut self, tag: EquivalenceTag) {
        self.total += 1;
        match tag {
            EquivalenceTag::IdenticalRepair => self.identical += 1,
            EquivalenceTag::SuggestionMatch => self.suggestion_match += 1,
            EquivalenceTag::NoMatch => self.no_match += 1,
        }
    }

    /// Share of pairs with either an identical repair or a matching
    /// suggestion; `None` when empty.
    pub fn covered_fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| (self.identical + self.suggestion_match) as f64 / self.total as f64)
    }
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl io::Write) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn pct(f: f64) -> String {
    format!("{:.2}%", f * 100.0)
}

pub fn render_coverage(report: &CoverageReport) -> String {
    let mut s = format!("{:<12} {:>8} {:>10} {:>10}\n", "rule", "clusters", "parent", "average");
    for r in &report.rows {
        let parent = r.parent_coverage.map_or_else(|| "-".to_string(), pct);
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>10} {:>10}",
            r.rule_id,
            r.cluster_count,
            parent,
            pct(r.average_coverage)
        );
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn render_proportions(rows: &[ClusterProportion]) -> String {
    let mut s = format!("{:>8} {:>5} {:>10} {:>10} {:>10}\n", "cluster", "size", "repaired", "suggested", "unknown");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>5} {:>10} {:>10} {:>10}",
            r.cluster_id,
            r.size,
            pct(r.repaired_frac),
            pct(r.suggested_frac),
            pct(r.unknown_frac)
        );
    }
    s
}
