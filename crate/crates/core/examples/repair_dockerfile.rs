//! Match the bundled rules against a broken Dockerfile and its log, and
//! print every repair variant as a diff.
//!
//!     cargo run --example repair_dockerfile [Dockerfile build.log]

use std::collections::BTreeMap;

use dockwright::corpus::{BuildOutcome, BuildRecord};
use dockwright::rules::{repair, RepairOutcome, RuleDb};

fn main() {
    let mut args = std::env::args().skip(1);
    let (dockerfile, log) = match (args.next(), args.next()) {
        (Some(d), Some(l)) => (std::fs::read_to_string(d).unwrap(), std::fs::read_to_string(l).unwrap()),
        _ => (
            "FROM ruby:2.3\nWORKDIR /site\nCOPY . .\nRUN bundle exec jekyll build\n".to_string(),
            "ArgumentError: invalid byte sequence in US-ASCII\n".to_string(),
        ),
    };
    let record = BuildRecord {
        record_id: "example".into(),
        repo_ref: String::new(),
        dockerfile_path: "Dockerfile".into(),
        dockerfile_text: dockerfile.clone(),
        stdout_log: String::new(),
        stderr_log: log,
        outcome: BuildOutcome::Failure,
        duration: 0.0,
        captured_at: chrono::Utc::now().fixed_offset(),
        meta: BTreeMap::new(),
    };
    let db = RuleDb::shipped();
    println!("{} repairs, {} suggestions loaded", db.repairs.len(), db.suggestions.len());
    match repair(&record, &db, None).unwrap() {
        RepairOutcome::Repaired { rule_id, variants, .. } => {
            println!("rule {rule_id} produced {} variant(s)", variants.len());
            for v in &variants {
                print!("{}", v.diff(&dockerfile, "Dockerfile"));
            }
        }
        RepairOutcome::Suggested { suggestion_id, message, .. } => println!("{suggestion_id}: {message}"),
        RepairOutcome::SearchFallback { query, .. } => {
            println!("no rule applies; a forum search would use {:?}", query.map(|q| q.query_string));
        }
    }
}
