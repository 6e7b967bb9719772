//! Hashed n-gram embeddings and how close different failures land.
//!
//!     cargo run --example embed_logs

use dockwright::embed::{cosine, Embedder, EmbedderConfig, HashedNgramEmbedder};
use dockwright::logpipe::tokenize;

fn main() {
    let logs = [
        "E: Unable to locate package python-pip",
        "E: Unable to locate package curl",
        "Your Ruby version is 2.6.3, but your Gemfile specified 2.6.5",
        "Your Ruby version is 2.5.1, but your Gemfile specified 2.5.8",
    ];
    let emb = HashedNgramEmbedder::new(EmbedderConfig::default()).unwrap();
    let vectors: Vec<_> = logs.iter().map(|l| emb.embed(&tokenize(l)).unwrap()).collect();
    println!("dimension {}, norms {:?}", emb.dim(), vectors.iter().map(|v| format!("{:.6}", v.norm())).collect::<Vec<_>>());
    print!("{:>8}", "");
    for j in 0..logs.len() {
        print!("{:>8}", format!("log{j}"));
    }
    println!();
    for (i, a) in vectors.iter().enumerate() {
        print!("{:>8}", format!("log{i}"));
        for b in &vectors {
            print!("{:>8.3}", cosine(a, b).unwrap());
        }
        println!();
    }
}
