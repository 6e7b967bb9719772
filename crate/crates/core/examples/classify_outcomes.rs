//! Outcome classification and corpus statistics.
//!
//!     cargo run --example classify_outcomes [corpus.jsonl]

use dockwright::corpus::{classify_outcome, corpus_stats, ingest_corpus, DEFAULT_TIMEOUT_LIMIT_S};

fn main() {
    let cases = [
        ("exit 0 after a minute", Some(0), 60.0, false),
        ("exit 1", Some(1), 95.0, false),
        ("killed at the limit", None, DEFAULT_TIMEOUT_LIMIT_S, false),
        ("daemon error", Some(1), 4.0, true),
    ];
    for (what, code, secs, daemon) in cases {
        let outcome = classify_outcome(code, secs, daemon, DEFAULT_TIMEOUT_LIMIT_S).unwrap();
        println!("{what:<22} -> {outcome}");
    }

    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus.jsonl").into());
    let ingested = ingest_corpus(&path).expect("corpus file");
    let stats = corpus_stats(&ingested.records);
    println!(
        "\n{path}: {} records, breakage rate {:.1}% ({} rejected lines)",
        stats.total,
        stats.breakage_rate * 100.0,
        ingested.rejects.len()
    );
}
