//! Log tail selection, normalization and tokenization.
//!
//!     cargo run --example tokenize_logs [build.log]

use dockwright::logpipe::{normalize, tail_error_log, tokenize, DEFAULT_TAIL_LINES};

const LOG: &str = "Step 1/3 : FROM ubuntu:latest\n ---> 4e5021d210f6\nStep 3/3 : RUN apt-get -y install python-pip\n ---> Running in 7d8c2f3a9b1e\nReading package lists...\nE: Unable to locate package python-pip\nThe command '/bin/sh -c apt-get -y install python-pip' returned a non-zero code: 100\n";

fn main() {
    let log = std::env::args()
        .nth(1)
        .map(|p| std::fs::read_to_string(p).expect("readable log"))
        .unwrap_or_else(|| LOG.to_string());
    let tail = tail_error_log(&log, "", DEFAULT_TAIL_LINES);
    println!("tail ({:?}):\n{}\n", tail.source, tail.text);
    println!("normalized:\n{}\n", normalize(&tail.text));
    println!("tokens: {:?}", tokenize(&tail.text).tokens);
}
