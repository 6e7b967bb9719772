//! Shared helpers for the integration tests: fixture paths, reference
//! implementations used as oracles, a stub search server, and the golden
//! transcript runner.

#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;

use dockwright::corpus::{ingest_corpus, BuildRecord};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_corpus() -> Vec<BuildRecord> {
    let ingested = ingest_corpus(fixtures().join("corpus.jsonl")).expect("fixture corpus loads");
    assert!(ingested.rejects.is_empty());
    ingested.records
}

pub fn dockerfile_fixtures() -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(fixtures().join("dockerfiles"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// Labels renumbered by first appearance, so two labelings that differ only
/// in cluster ids compare equal. Noise stays -1.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Brute-force HDBSCAN.
///
/// Works on the full mutual reachability matrix and derives the hierarchy
/// from connected components of threshold graphs (all pairs with
/// reachability at most a level), never building a spanning tree. A split
/// level of a point set is the smallest level at which it is connected;
/// just below it the set falls apart into the components joined by strictly
/// shorter edges.
pub mod oracle {
    pub fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    pub fn core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
        let n = points.len();
        (0..n)
            .map(|i| {
                let mut d: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { dist(&points[i], &points[j]) }).collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d[k.min(n - 1)]
            })
            .collect()
    }

    fn mreach(points: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
        let core = core_distances(points, k);
        let n = points.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m[i][j] = dist(&points[i], &points[j]).max(core[i]).max(core[j]);
                }
            }
        }
        m
    }

    /// Components of `set` using edges accepted by `keep`.
    fn components(set: &[usize], m: &[Vec<f64>], keep: impl Fn(f64) -> bool) -> Vec<Vec<usize>> {
        let mut seen = vec![false; set.len()];
        let mut out = Vec::new();
        for s in 0..set.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![set[s]];
            let mut stack = vec![s];
            while let Some(x) = stack.pop() {
                for y in 0..set.len() {
                    if !seen[y] && keep(m[set[x]][set[y]]) {
                        seen[y] = true;
                        comp.push(set[y]);
                        stack.push(y);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn split_level(set: &[usize], m: &[Vec<f64>]) -> f64 {
        let mut levels: Vec<f64> = Vec::new();
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                levels.push(m[i][j]);
            }
        }
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.dedup();
        let (mut lo, mut hi) = (0, levels.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if components(set, m, |w| w <= levels[mid]).len() == 1 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        levels[lo]
    }

    struct Node {
        parent: Option<usize>,
        stability: f64,
        children: Vec<usize>,
    }

    pub fn hdbscan(points: &[Vec<f64>], mcs: usize, k: usize) -> Vec<i64> {
        let n = points.len();
        if n < mcs || n == 0 {
            return vec![-1; n];
        }
        let m = mreach(points, k);
        let mut nodes = vec![Node {
            parent: None,
            stability: 0.0,
            children: Vec::new(),
        }];
        let mut fell_from = vec![usize::MAX; n];
        // (point set, node, birth lambda)
        let mut work = vec![((0..n).collect::<Vec<_>>(), 0usize, 0.0f64)];
        while let Some((set, node, birth)) = work.pop() {
            if set.len() == 1 {
                fell_from[set[0]] = node;
                continue;
            }
            let eps = split_level(&set, &m);
            let lambda = 1.0 / eps.max(1e-12);
            let parts = components(&set, &m, |w| w < eps);
            let big: Vec<&Vec<usize>> = parts.iter().filter(|p| p.len() >= mcs).collect();
            for p in parts.iter().filter(|p| p.len() < mcs) {
                for &x in p {
                    fell_from[x] = node;
                }
                nodes[node].stability += p.len() as f64 * (lambda - birth);
            }
            if big.len() == 1 {
                work.push((big[0].clone(), node, birth));
            } else if big.len() >= 2 {
                for p in big {
                    nodes[node].stability += p.len() as f64 * (lambda - birth);
                    let id = nodes.len();
                    nodes.push(Node {
                        parent: Some(node),
                        stability: 0.0,
                        children: Vec::new(),
                    });
                    nodes[node].children.push(id);
                    work.push((p.clone(), id, lambda));
                }
            }
        }

        // Excess of mass. The root competes only when it never splits.
        let mut selected = vec![false; nodes.len()];
        if nodes[0].children.is_empty() {
            selected[0] = true;
        } else {
            fn best(c: usize, nodes: &[Node], selected: &mut Vec<bool>) -> f64 {
                if nodes[c].children.is_empty() {
                    selected[c] = true;
                    return nodes[c].stability;
                }
                let kids: f64 = nodes[c].children.iter().map(|&k| best(k, nodes, selected)).sum();
                if nodes[c].stability >= kids {
                    fn clear(c: usize, nodes: &[Node], selected: &mut Vec<bool>) {
                        for &k in &nodes[c].children {
                            selected[k] = false;
                            clear(k, nodes, selected);
                        }
                    }
                    clear(c, nodes, selected);
                    selected[c] = true;
                    nodes[c].stability
                } else {
                    kids
                }
            }
            for &c in &nodes[0].children.clone() {
                best(c, &nodes, &mut selected);
            }
        }
        let labels: Vec<i64> = (0..n)
            .map(|p| {
                let mut c = Some(fell_from[p]);
                while let Some(x) = c {
                    if selected[x] {
                        return x as i64;
                    }
                    c = nodes[x].parent;
                }
                -1
            })
            .collect();
        super::canonical(&labels)
    }
}

/// Reference for the hashed n-gram embedder, written from its description:
/// character 3- to 5-grams of the space-joined tokens plus whole tokens,
/// each distinct feature hashed with 64-bit FNV-1a into `hash mod 256`,
/// signed by the top hash bit, weighted by ln(1 + count), L2-normalized.
pub fn reference_embedding(tokens: &[&str]) -> Vec<f64> {
    let joined = tokens.join(" ");
    let chars: Vec<char> = joined.chars().collect();
    let mut counts: HashMap<String, u32> = HashMap::new();
    for n in 3..=5 {
        if chars.len() >= n {
            for i in 0..=chars.len() - n {
                *counts.entry(chars[i..i + n].iter().collect()).or_default() += 1;
            }
        }
    }
    for t in tokens.iter().filter(|t| !t.is_empty()) {
        *counts.entry(t.to_string()).or_default() += 1;
    }
    let mut v = vec![0.0; 256];
    for (f, c) in counts {
        let mut h: u64 = 14695981039346656037;
        for b in f.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(1099511628211);
        }
        let sign = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
        v[(h % 256) as usize] += sign * (1.0 + c as f64).ln();
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Tiny HTTP server answering every request with `body` as JSON. Returns
/// its base URL. The thread lives until the test process exits.
pub fn stub_search_server(body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            // Request line and headers; requests carry no body.
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
            }
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.flush();
            let mut sink = [0u8; 64];
            let _ = stream.read(&mut sink);
        }
    });
    format!("http://{addr}")
}

/// Eight ranked hits, five of them on allowlisted domains.
pub const STUB_HITS: &str = r#"[
  {"url": "https://stackoverflow.com/questions/1/unable-to-locate-package", "title": "Unable to locate package"},
  {"url": "https://spam.example.com/docker-tips", "title": "Tips"},
  {"url": "https://forums.docker.com/t/apt-get-fails/2", "title": "apt-get fails"},
  {"url": "https://github.com/moby/moby/issues/3", "title": "issue 3"},
  {"url": "https://github.com/moby/moby/pull/4", "title": "a pull request"},
  {"url": "https://serverfault.com/questions/5", "title": "sf 5"},
  {"url": "https://superuser.com/questions/6", "title": "su 6"},
  {"url": "https://stackoverflow.com/questions/7", "title": "so 7"}
]"#;

/// One recorded CLI invocation: arguments use `{fixtures}` and `{tmp}`
/// placeholders, which are also substituted back in the output.
pub struct GoldenCase {
    pub name: &'static str,
    pub args: &'static [&'static str],
}

pub const GOLDEN_CASES: &[GoldenCase] = &[
    GoldenCase { name: "ingest_ok", args: &["ingest", "--corpus", "{fixtures}/corpus.jsonl"] },
    GoldenCase { name: "ingest_rejects", args: &["ingest", "--corpus", "{fixtures}/corpus_rejects.jsonl", "--out", "{tmp}/clean.jsonl"] },
    GoldenCase { name: "ingest_duplicate", args: &["ingest", "--corpus", "{fixtures}/corpus_duplicate.jsonl"] },
    GoldenCase { name: "ingest_empty", args: &["ingest", "--corpus", "{fixtures}/corpus_empty.jsonl"] },
    GoldenCase { name: "ingest_missing", args: &["ingest", "--corpus", "{fixtures}/does-not-exist.jsonl"] },
    GoldenCase { name: "unknown_flag", args: &["ingest", "--corpus", "{fixtures}/corpus.jsonl", "--frobnicate"] },
    GoldenCase { name: "unknown_subcommand", args: &["explode"] },
    GoldenCase { name: "cluster", args: &["cluster", "--corpus", "{fixtures}/corpus.jsonl", "--grid", "mcs=2,3;k=1,2", "--out", "{tmp}/assignment.json"] },
    GoldenCase { name: "cluster_bad_grid", args: &["cluster", "--corpus", "{fixtures}/corpus.jsonl", "--grid", "mcs=1;k=1", "--out", "{tmp}/a.json"] },
    GoldenCase { name: "repair_ubuntu", args: &["repair", "--corpus", "{fixtures}/corpus.jsonl", "--record", "ubuntu-0", "--out-dir", "{tmp}"] },
    GoldenCase { name: "repair_files", args: &["repair", "--dockerfile", "{tmp}/ubuntu/Dockerfile", "--log", "{tmp}/ubuntu/build.log"] },
    GoldenCase { name: "repair_ruby", args: &["repair", "--corpus", "{fixtures}/corpus.jsonl", "--record", "ruby-0", "--out-dir", "{tmp}"] },
    GoldenCase { name: "repair_unknown_record", args: &["repair", "--corpus", "{fixtures}/corpus.jsonl", "--record", "nope"] },
    GoldenCase { name: "repair_missing_rules", args: &["repair", "--corpus", "{fixtures}/corpus.jsonl", "--record", "ruby-0", "--rules", "{tmp}/none.json"] },
    GoldenCase { name: "search_unconfigured", args: &["search", "--corpus", "{fixtures}/corpus.jsonl", "--record", "odd-1"] },
    GoldenCase { name: "report_breakage", args: &["report", "--corpus", "{fixtures}/corpus.jsonl", "--breakage"] },
    GoldenCase { name: "report_time_travel", args: &["report", "--corpus", "{fixtures}/corpus.jsonl", "--time-travel", "{fixtures}/time_travel.jsonl"] },
    GoldenCase { name: "report_no_kind", args: &["report", "--corpus", "{fixtures}/corpus.jsonl"] },
];

pub struct Transcript {
    pub code: i32,
    pub text: String,
}

/// Runs the binary for `case` in a fresh temp dir and renders the
/// transcript with paths replaced by placeholders.
pub fn run_golden(case: &GoldenCase) -> Transcript {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    std::fs::create_dir_all(tmp.path().join("ubuntu")).unwrap();
    for f in ["Dockerfile", "build.log"] {
        std::fs::copy(fx.join("ubuntu").join(f), tmp.path().join("ubuntu").join(f)).unwrap();
    }
    let fx_s = fx.display().to_string();
    let tmp_s = tmp.path().display().to_string();
    let args: Vec<String> = case
        .args
        .iter()
        .map(|a| a.replace("{fixtures}", &fx_s).replace("{tmp}", &tmp_s))
        .collect();
    let output = Command::new(env!("CARGO_BIN_EXE_dockwright"))
        .args(&args)
        .env_remove("DOCKWRIGHT_SEARCH_URL")
        .env_remove("RUST_LOG")
        .output()
        .unwrap();
    let code = output.status.code().unwrap_or(-1);
    let clean = |b: &[u8]| String::from_utf8_lossy(b).replace(&tmp_s, "{tmp}").replace(&fx_s, "{fixtures}");
    let text = format!(
        "$ dockwright {}\nexit: {code}\n--- stdout\n{}--- stderr\n{}",
        case.args.join(" "),
        clean(&output.stdout),
        clean(&output.stderr)
    );
    Transcript { code, text }
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"))
}

/// Compares `case` against its stored transcript. With
/// `DOCKWRIGHT_BLESS=1` the transcript is (re)written instead.
pub fn check_golden(case: &GoldenCase) -> Result<(), String> {
    let got = run_golden(case);
    let path = golden_path(case.name);
    if std::env::var("DOCKWRIGHT_BLESS").as_deref() == Ok("1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &got.text).unwrap();
        return Ok(());
    }
    let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want == got.text {
        Ok(())
    } else {
        Err(format!("{} differs:\n--- want\n{want}\n--- got\n{}", case.name, got.text))
    }
}
