//! Serve the rule-authoring API over the fixture corpus until Ctrl-C.
//!
//!     cargo run --example workbench_server
//!     curl localhost:7341/clusters

use dockwright::workbench::{serve, WorkbenchConfig};

#[tokio::main]
async fn main() {
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let scratch = std::env::temp_dir().join("dockwright-example-rules.json");
    let cfg = WorkbenchConfig {
        corpus: format!("{fixtures}/corpus.jsonl").into(),
        // Saved rules go to a scratch file, not the repository.
        rules: scratch.clone(),
        grid: "mcs=2,3;k=1,2".into(),
        ..WorkbenchConfig::default()
    };
    println!("rules are saved to {}", scratch.display());
    if let Err(e) = serve(cfg).await {
        eprintln!("{e}");
        std::process::exit(2);
    }
}
