//! Cluster the failing builds of a corpus and show each cluster's most
//! common terms.
//!
//!     cargo run --example cluster_failures [corpus.jsonl]

use dockwright::cluster::default_grid;
use dockwright::corpus::ingest_corpus;
use dockwright::embed::{EmbedderConfig, HashedNgramEmbedder};
use dockwright::pipeline::{cluster_failures, top_terms};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus.jsonl").into());
    let records = ingest_corpus(&path).expect("corpus").records;
    let emb = HashedNgramEmbedder::new(EmbedderConfig::default()).unwrap();
    let run = cluster_failures(&records, &emb, &default_grid()).expect("clustering");

    let best = run.grid.best_entry();
    println!(
        "{} configurations tried; best min_cluster_size={} min_samples={} ({:.0}% clustered)",
        run.grid.evaluated.len(),
        best.params.min_cluster_size,
        best.params.min_samples,
        best.clustered_fraction * 100.0
    );
    let (aligned, _) = run.aligned(&records);
    for cid in 0..run.assignment.cluster_count() as i64 {
        let members: Vec<_> = aligned
            .iter()
            .copied()
            .filter(|r| run.label_of(&r.record_id) == Some(cid))
            .collect();
        let ids: Vec<&str> = members.iter().map(|r| r.record_id.as_str()).collect();
        println!("cluster {cid} {:?}\n  terms: {:?}", ids, top_terms(members, 6));
    }
    println!("noise: {:?}", run.members(-1));
}
