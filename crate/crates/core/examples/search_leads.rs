//! Keyword extraction and allowlist filtering of search results, using an
//! in-process backend in place of a real search service.
//!
//!     cargo run --example search_leads

use dockwright::search::{Allowlist, RawHit, SearchBackend, SearchError, Searcher, DEFAULT_ALLOWLIST};

struct Canned;

impl SearchBackend for Canned {
    fn search(&self, query: &str) -> Result<Vec<RawHit>, SearchError> {
        println!("backend asked for: {query}");
        let hit = |url: &str| RawHit { url: url.into(), title: String::new() };
        Ok(vec![
            hit("https://stackoverflow.com/questions/27273412"),
            hit("https://blog.example.com/fixing-docker"),
            hit("https://github.com/docker-library/python/issues/376"),
            hit("https://github.com/docker-library/python/blob/master/Dockerfile"),
            hit("https://forums.docker.com/t/pip-not-found/1"),
        ])
    }
}

fn main() {
    let log = "Step 3/3 : RUN pip install -r /tmp/requirements.txt\n/bin/sh: 1: pip: not found\nERROR: Service 'web' failed to build";
    let searcher = Searcher::new(Box::new(Canned), Allowlist::new(DEFAULT_ALLOWLIST).unwrap());
    let (query, results) = searcher.leads(log).unwrap();
    println!("keywords: {:?}", query.map(|q| q.keywords));
    for (i, r) in results.iter().enumerate() {
        println!("{}. {} ({})", i + 1, r.url, r.source_domain);
    }
}
