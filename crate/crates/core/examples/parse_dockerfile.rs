//! Parse a Dockerfile, list its instructions, and patch one span without
//! touching any other byte.
//!
//!     cargo run --example parse_dockerfile [path/to/Dockerfile]

use dockwright::dockerfile::{parse, serialize, splice, InstructionKind, SpanEdit};

const SAMPLE: &str = "# build stage\nFROM ubuntu:latest AS build\nRUN apt-get update \\\n    && apt-get install -y python-pip\nCOPY . /src\n";

fn main() {
    let text = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(&p).expect("readable Dockerfile"),
        None => SAMPLE.to_string(),
    };
    let ast = parse(&text);
    for ins in &ast.instructions {
        println!("{:>4}..{:<4} {:<8} {}", ins.span.start, ins.span.end, ins.kind, ins.normalized_args());
    }
    assert_eq!(serialize(&ast), text.as_bytes(), "parsing is lossless");

    if let Some(from) = ast.first_of(InstructionKind::From) {
        let patched = splice(&ast, &[SpanEdit::new(from.span, "FROM ubuntu:18.04 AS build")]).unwrap();
        println!("\n--- with the base image pinned ---\n{}", String::from_utf8_lossy(&patched));
    }
}
