//! Drives the workbench over HTTP against the fixture corpus: the rule
//! authoring loop from cluster selection to a repair that uses the new rule.

mod common;

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use dockwright::rules::load_rules;
use dockwright::workbench::{serve_on, Workbench, WorkbenchConfig};

struct Server {
    base: String,
    agent: ureq::Agent,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
    _dir: tempfile::TempDir,
    rules_path: std::path::PathBuf,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.thread.take().unwrap().join().unwrap();
    }
}

impl Server {
    /// Opens the fixture config from a scratch copy, so rule saves land in
    /// a temp dir. The bundled rules minus the ubuntu repair are the
    /// starting database.
    fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let fx = common::fixtures();
        std::fs::copy(fx.join("corpus.jsonl"), dir.path().join("corpus.jsonl")).unwrap();
        std::fs::copy(fx.join("workbench.toml"), dir.path().join("workbench.toml")).unwrap();
        let mut db = dockwright::rules::RuleDb::shipped();
        db.repairs.retain(|r| r.id != "r5");
        let rules_path = dir.path().join("rules.json");
        dockwright::rules::save_rules(&mut db, &rules_path).unwrap();

        let cfg = WorkbenchConfig::load(dir.path().join("workbench.toml")).unwrap();
        let wb = Arc::new(Workbench::open(&cfg).unwrap());
        let (stop, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve_on(wb, listener, async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv_timeout(Duration::from_secs(10)).unwrap();
        Server {
            base: format!("http://{addr}"),
            agent: ureq::Agent::config_builder().http_status_as_error(false).build().into(),
            stop: Some(stop),
            thread: Some(thread),
            _dir: dir,
            rules_path,
        }
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, resp.into_body().read_json().unwrap())
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self.agent.post(format!("{}{path}", self.base)).send_json(body).unwrap();
        let status = resp.status().as_u16();
        (status, resp.into_body().read_json().unwrap())
    }
}

fn ubuntu_rule(static_re: &str, dynamic_re: &str) -> Value {
    json!({
        "id": "ubuntu-latest-pin",
        "static_re": static_re,
        "dynamic_re": dynamic_re,
        "solutions": [
            [{"op": "replace", "target": "$0", "text": ":18.04"}],
            [{"op": "insert_after", "target": "$0", "text": "\nARG DEBIAN_FRONTEND=noninteractive"}]
        ],
        "notes": "apt on newer ubuntu images lacks the python 2 packages",
    })
}

#[test]
fn authoring_loop_on_the_fixture_corpus() {
    let s = Server::start();

    // Pick the cluster holding the apt failures.
    let (status, clusters) = s.get("/clusters");
    assert_eq!(status, 200);
    assert_eq!(clusters["stale"], false);
    let list = clusters["clusters"].as_array().unwrap();
    assert_eq!(list.len(), 3, "{clusters}");
    let mut ubuntu_cluster = None;
    for c in list {
        let id = c["cluster_id"].as_i64().unwrap();
        let (_, detail) = s.get(&format!("/clusters/{id}"));
        if detail["members"].as_array().unwrap().iter().any(|m| m == "ubuntu-0") {
            assert!(detail["tails"].as_array().unwrap().len() <= 5);
            assert!(c["top_terms"].as_array().unwrap().iter().any(|t| t == "locate"), "{c}");
            ubuntu_cluster = Some(id);
        }
    }
    let cid = ubuntu_cluster.expect("a cluster holds the apt failures");

    let (_, before) = s.post("/repair/ubuntu-0", json!(null));
    assert_eq!(before["kind"], "search_fallback");

    // A literal package name covers only part of the cluster; generalizing
    // the capture covers all of it.
    let narrow = ubuntu_rule("(?m)^FROM ubuntu(:latest)$", "unable to locate package python-pip");
    let (status, dry) = s.post("/rules/dry-run", json!({"kind": "repair", "rule": narrow, "cluster_id": cid}));
    assert_eq!(status, 200, "{dry}");
    assert_eq!(dry["total"], 6);
    assert_eq!(dry["matched_ids"].as_array().unwrap().len(), 3);
    let general = ubuntu_rule("(?m)^FROM ubuntu(:latest)$", "unable to locate package (\\S+)");
    let (_, dry) = s.post("/rules/dry-run", json!({"kind": "repair", "rule": general, "cluster_id": cid}));
    assert!(dry["fraction"].as_f64().unwrap() >= 0.8, "{dry}");
    let version = dry["rules_version"].as_u64().unwrap();
    assert_eq!(s.get("/rules").1["version"], version, "dry runs leave the database alone");

    let invalid = ubuntu_rule("(?m)^FROM ubuntu(:latest$", "x");
    let (status, err) = s.post("/rules", json!({"kind": "repair", "rule": invalid}));
    assert_eq!(status, 400, "{err}");
    let (status, _) = s.post("/rules/dry-run", json!({"kind": "repair", "rule": general, "cluster_id": 42}));
    assert_eq!(status, 404);

    let (status, saved) = s.post("/rules", json!({"kind": "repair", "rule": general}));
    assert_eq!(status, 200, "{saved}");
    assert_eq!(saved["version"], version + 1);

    // Read-your-writes: the next repair uses the saved rule.
    let (status, after) = s.post("/repair/ubuntu-3", json!(null));
    assert_eq!(status, 200);
    assert_eq!(after["kind"], "repaired", "{after}");
    assert_eq!(after["rule_id"], "ubuntu-latest-pin");
    let variants = after["variants"].as_array().unwrap();
    assert_eq!(variants.len(), 2);
    assert!(variants[0]["diff"].as_str().unwrap().contains("+FROM ubuntu:18.04"));

    // What a restart would load is what the service holds.
    let on_disk = load_rules(&s.rules_path).unwrap();
    assert_eq!(on_disk.version, version + 1);
    assert!(on_disk.repair("ubuntu-latest-pin").is_some());
    assert_eq!(serde_json::to_value(on_disk.to_file()).unwrap(), s.get("/rules").1);
}

#[test]
fn records_search_and_errors() {
    let s = Server::start();
    let (status, r) = s.get("/records/encoding-1");
    assert_eq!(status, 200);
    assert_eq!(r["record"]["outcome"], "failure");
    assert!(r["tail"].as_str().unwrap().contains("invalid byte sequence"));
    assert!(r["cluster_id"].as_i64().unwrap() >= 0);
    let (_, ok) = s.get("/records/ok-1");
    assert_eq!(ok["cluster_id"], Value::Null, "successes are not clustered");
    assert_eq!(s.get("/records/missing").0, 404);
    assert_eq!(s.get("/search?record=odd-1").0, 503, "no backend in the fixture config");
    assert_eq!(s.post("/repair/slow-1", json!(null)).0, 422);
    let (_, ruby) = s.post("/repair/ruby-1", json!(null));
    assert_eq!(ruby["rule_id"], "r6");
}
