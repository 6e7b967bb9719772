//! Per-rule coverage and per-cluster solution proportions for a corpus.
//!
//!     cargo run --example coverage_report [corpus.jsonl]

use dockwright::cluster::default_grid;
use dockwright::corpus::ingest_corpus;
use dockwright::embed::{EmbedderConfig, HashedNgramEmbedder};
use dockwright::metrics::{render_coverage, render_proportions, repair_coverage, solution_proportions, write_csv};
use dockwright::pipeline::cluster_failures;
use dockwright::rules::RuleDb;

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus.jsonl").into());
    let records = ingest_corpus(&path).expect("corpus").records;
    let emb = HashedNgramEmbedder::new(EmbedderConfig::default()).unwrap();
    let run = cluster_failures(&records, &emb, &default_grid()).unwrap();
    let aligned: Vec<_> = run.aligned(&records).0.into_iter().cloned().collect();

    let db = RuleDb::shipped();
    let coverage = repair_coverage(&db, &run.assignment, &aligned).unwrap();
    println!("{}", render_coverage(&coverage));
    let proportions = solution_proportions(&db, &run.assignment, &aligned).unwrap();
    println!("{}", render_proportions(&proportions));
    println!("as CSV:");
    write_csv(&proportions, std::io::stdout()).unwrap();
}
