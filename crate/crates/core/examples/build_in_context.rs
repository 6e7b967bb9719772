//! Build one Dockerfile with its repository as the build context and print
//! the resulting record. Needs a container engine (`docker` by default,
//! or whatever `DOCKWRIGHT_ENGINE` names).
//!
//!     cargo run --example build_in_context -- <repo dir or git URL> [Dockerfile path]

use dockwright::builder::{probe_engine, run_build, BuildJob, BuilderConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(repo) = args.next() else {
        eprintln!("usage: build_in_context <repo> [dockerfile]");
        std::process::exit(2);
    };
    let dockerfile = args.next().unwrap_or_else(|| "Dockerfile".into());
    let cfg = BuilderConfig::default().with_env();
    if let Err(e) = probe_engine(&cfg) {
        eprintln!("{e}");
        std::process::exit(2);
    }
    let mut job = BuildJob::new(repo, dockerfile);
    job.timeout_limit_s = 600.0;
    let record = run_build(&job, &cfg).expect("build ran");
    println!("{} in {:.1}s", record.outcome, record.duration);
    for (k, v) in &record.meta {
        println!("  {k}: {v}");
    }
    let tail: Vec<&str> = record.stderr_log.lines().rev().take(5).collect();
    for line in tail.iter().rev() {
        println!("  | {line}");
    }
}
