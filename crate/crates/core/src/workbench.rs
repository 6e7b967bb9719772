//! HTTP service for the human in the loop: browse clusters, inspect
//! records, dry-run draft rules against a cluster, save rules, search
//! forums, and preview repairs as diffs.
//!
//! Reads work on snapshots (`Arc` swaps), rule saves go through one
//! commit lock, and re-clustering runs in the background while cluster
//! reads report `stale: true`.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::cluster::{parse_grid, ClusterError, ClusteringParams};
use crate::corpus::{ingest_corpus, BuildRecord, CorpusError};
use crate::embed::{EmbedError, Embedder, EmbedderConfig};
use crate::logpipe::{tail_error_log, DEFAULT_TAIL_LINES};
use crate::pipeline::{cluster_failures, top_terms, ClusterRun, PipelineError};
use crate::rules::{
    dry_run, load_rules, repair, save_rules, RepairOutcome, RepairRule, RepairSpec, RuleDb, RuleError, Suggestion,
    SuggestionSpec,
};
use crate::search::{Allowlist, HttpSearchBackend, SearchError, Searcher, DEFAULT_ALLOWLIST};

pub const DEFAULT_PORT: u16 = 7341;

/// Member tails shown per cluster.
const REPRESENTATIVE_TAILS: usize = 5;
const TOP_TERMS: usize = 8;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Grid(#[from] ClusterError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Search backend base URL; search is disabled when unset.
    pub url: Option<String>,
    pub allowlist: Vec<String>,
    pub timeout_s: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            url: None,
            allowlist: DEFAULT_ALLOWLIST.iter().map(|s| s.to_string()).collect(),
            timeout_s: 10.0,
        }
    }
}

impl SearchConfig {
    pub fn searcher(&self) -> Result<Option<Searcher>, SearchError> {
        let Some(url) = self.url.as_deref().filter(|u| !u.is_empty()) else {
            return Ok(None);
        };
        let backend = HttpSearchBackend::new(url, Duration::from_secs_f64(self.timeout_s));
        Ok(Some(Searcher::new(Box::new(backend), Allowlist::new(&self.allowlist)?)))
    }
}

/// Workbench configuration file (TOML). Relative paths are resolved
/// against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub corpus: PathBuf,
    /// Rule file; the bundled rules are used until the first save when it
    /// does not exist yet.
    pub rules: PathBuf,
    /// Precomputed clustering; computed at startup when absent.
    pub assignment: Option<PathBuf>,
    pub bind: String,
    pub port: u16,
    pub grid: String,
    pub embedder: EmbedderConfig,
    pub search: SearchConfig,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            rules: PathBuf::from("rules.json"),
            assignment: None,
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            grid: "default".into(),
            embedder: EmbedderConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

impl WorkbenchConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorkbenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorkbenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| WorkbenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.corpus);
        rebase(&mut cfg.rules);
        if let Some(a) = cfg.assignment.as_mut() {
            rebase(a);
        }
        Ok(cfg)
    }
}

struct ClusterSnapshot {
    run: Arc<ClusterRun>,
    stale: bool,
    generation: u64,
    last_error: Option<String>,
}

pub struct Workbench {
    records: Vec<BuildRecord>,
    by_id: HashMap<String, usize>,
    clusters: RwLock<ClusterSnapshot>,
    rules: RwLock<Arc<RuleDb>>,
    rules_path: PathBuf,
    /// Serializes rule commits.
    commit: Mutex<()>,
    searcher: Option<Searcher>,
    embedder: Box<dyn Embedder>,
    grid: Vec<ClusteringParams>,
}

impl Workbench {
    /// Loads the corpus and rules and computes (or loads) the clustering.
    pub fn open(cfg: &WorkbenchConfig) -> Result<Self, WorkbenchError> {
        let ingested = ingest_corpus(&cfg.corpus)?;
        for r in &ingested.rejects {
            log::warn!("corpus line {} rejected: {}", r.line, r.reason);
        }
        let rules = if cfg.rules.exists() {
            load_rules(&cfg.rules)?
        } else {
            info!("{} does not exist; starting from the bundled rules", cfg.rules.display());
            RuleDb::shipped()
        };
        let embedder = cfg.embedder.build()?;
        let grid = parse_grid(&cfg.grid)?;
        let run = match &cfg.assignment {
            Some(p) if p.exists() => ClusterRun::load(p)?,
            _ => cluster_failures(&ingested.records, embedder.as_ref(), &grid)?,
        };
        Self::new(ingested.records, run, rules, cfg.rules.clone(), cfg.search.searcher()?, embedder, grid)
    }

    pub fn new(
        records: Vec<BuildRecord>,
        run: ClusterRun,
        rules: RuleDb,
        rules_path: PathBuf,
        searcher: Option<Searcher>,
        embedder: Box<dyn Embedder>,
        grid: Vec<ClusteringParams>,
    ) -> Result<Self, WorkbenchError> {
        let by_id = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.record_id.clone(), i))
            .collect::<HashMap<_, _>>();
        if let Some(missing) = run.record_ids.iter().find(|id| !by_id.contains_key(*id)) {
            return Err(WorkbenchError::Config(format!(
                "clustering refers to record {missing:?}, which is not in the corpus"
            )));
        }
        Ok(Self {
            records,
            by_id,
            clusters: RwLock::new(ClusterSnapshot {
                run: Arc::new(run),
                stale: false,
                generation: 1,
                last_error: None,
            }),
            rules: RwLock::new(Arc::new(rules)),
            rules_path,
            commit: Mutex::new(()),
            searcher,
            embedder,
            grid,
        })
    }

    pub fn rules(&self) -> Arc<RuleDb> {
        Arc::clone(&self.rules.read().unwrap())
    }

    pub fn record(&self, id: &str) -> Option<&BuildRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    fn run(&self) -> (Arc<ClusterRun>, bool, u64) {
        let c = self.clusters.read().unwrap();
        (Arc::clone(&c.run), c.stale, c.generation)
    }

    fn members(&self, run: &ClusterRun, cluster_id: i64) -> Vec<&BuildRecord> {
        run.members(cluster_id).into_iter().filter_map(|id| self.record(id)).collect()
    }

    /// Re-clusters the corpus. Reads keep seeing the previous clustering,
    /// flagged stale, until this returns.
    pub fn recompute(&self) -> Result<u64, WorkbenchError> {
        self.clusters.write().unwrap().stale = true;
        let result = cluster_failures(&self.records, self.embedder.as_ref(), &self.grid);
        let mut c = self.clusters.write().unwrap();
        match result {
            Ok(run) => {
                c.run = Arc::new(run);
                c.generation += 1;
                c.stale = false;
                c.last_error = None;
                Ok(c.generation)
            }
            Err(e) => {
                c.last_error = Some(e.to_string());
                Err(e.into())
            }
        }
    }

    /// Adds or replaces a rule and persists the database atomically.
    /// Returns the new version.
    pub fn commit_rule(&self, draft: Draft) -> Result<u64, RuleError> {
        let _guard = self.commit.lock().unwrap();
        let mut next = (*self.rules()).clone();
        match draft {
            Draft::Repair(r) => next.upsert_repair(r)?,
            Draft::Suggestion(s) => next.upsert_suggestion(s)?,
        }
        let version = save_rules(&mut next, &self.rules_path)?;
        *self.rules.write().unwrap() = Arc::new(next);
        Ok(version)
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new()
            .route("/clusters", get(list_clusters))
            .route("/clusters/recompute", post(recompute_clusters))
            .route("/clusters/{id}", get(show_cluster))
            .route("/records/{id}", get(show_record))
            .route("/rules", get(list_rules).post(save_rule))
            .route("/rules/dry-run", post(dry_run_rule))
            .route("/search", get(search_record))
            .route("/repair/{record_id}", post(repair_record))
            .with_state(self)
    }
}

/// A compiled draft rule from a request body.
pub enum Draft {
    Repair(RepairRule),
    Suggestion(Suggestion),
}

impl Draft {
    fn pattern(&self) -> &crate::rules::Pattern {
        match self {
            Draft::Repair(r) => &r.pattern,
            Draft::Suggestion(s) => &s.pattern,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Repair,
    Suggestion,
}

#[derive(Debug, Deserialize)]
struct DraftBody {
    kind: RuleKind,
    rule: Value,
}

impl DraftBody {
    fn compile(self) -> Result<Draft, ApiError> {
        let bad = |e: String| ApiError::new(StatusCode::BAD_REQUEST, e);
        match self.kind {
            RuleKind::Repair => {
                let spec: RepairSpec = serde_json::from_value(self.rule).map_err(|e| bad(e.to_string()))?;
                RepairRule::from_spec(spec).map(Draft::Repair).map_err(|e| bad(e.to_string()))
            }
            RuleKind::Suggestion => {
                let spec: SuggestionSpec = serde_json::from_value(self.rule).map_err(|e| bad(e.to_string()))?;
                Suggestion::from_spec(spec).map(Draft::Suggestion).map_err(|e| bad(e.to_string()))
            }
        }
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Shared = State<Arc<Workbench>>;
type ApiResult = Result<Json<Value>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn list_clusters(State(wb): Shared) -> ApiResult {
    let (run, stale, generation) = wb.run();
    let mut clusters = Vec::new();
    for cid in 0..run.assignment.cluster_count() as i64 {
        let members = wb.members(&run, cid);
        clusters.push(json!({
            "cluster_id": cid,
            "size": members.len(),
            "stability": run.assignment.stabilities.get(cid as usize),
            "top_terms": top_terms(members.iter().copied(), TOP_TERMS),
        }));
    }
    Ok(Json(json!({
        "stale": stale,
        "generation": generation,
        "params": run.assignment.params,
        "noise": run.assignment.noise_count(),
        "clusters": clusters,
    })))
}

async fn show_cluster(State(wb): Shared, UrlPath(id): UrlPath<i64>) -> ApiResult {
    let (run, stale, generation) = wb.run();
    let members = wb.members(&run, id);
    if members.is_empty() {
        return Err(ApiError::not_found(format!("no cluster {id}")));
    }
    let tails: Vec<_> = members
        .iter()
        .take(REPRESENTATIVE_TAILS)
        .map(|r| {
            json!({
                "record_id": r.record_id,
                "tail": tail_error_log(&r.stderr_log, &r.stdout_log, DEFAULT_TAIL_LINES).text,
            })
        })
        .collect();
    Ok(Json(json!({
        "cluster_id": id,
        "stale": stale,
        "generation": generation,
        "size": members.len(),
        "stability": run.assignment.stabilities.get(id as usize),
        "members": members.iter().map(|r| &r.record_id).collect::<Vec<_>>(),
        "tails": tails,
    })))
}

async fn show_record(State(wb): Shared, UrlPath(id): UrlPath<String>) -> ApiResult {
    let record = wb.record(&id).ok_or_else(|| ApiError::not_found(format!("no record {id}")))?;
    let (run, _, _) = wb.run();
    Ok(Json(json!({
        "record": record,
        "cluster_id": run.label_of(&id),
        "tail": tail_error_log(&record.stderr_log, &record.stdout_log, DEFAULT_TAIL_LINES).text,
    })))
}

async fn recompute_clusters(State(wb): Shared) -> Response {
    let generation = {
        let mut c = wb.clusters.write().unwrap();
        c.stale = true;
        c.generation
    };
    let worker = Arc::clone(&wb);
    tokio::task::spawn_blocking(move || {
        if let Err(e) = worker.recompute() {
            error!("re-clustering failed: {e}");
        }
    });
    (StatusCode::ACCEPTED, Json(json!({ "stale": true, "generation": generation }))).into_response()
}

async fn list_rules(State(wb): Shared) -> ApiResult {
    let db = wb.rules();
    Ok(Json(serde_json::to_value(db.to_file()).expect("rule files serialize")))
}

#[derive(Debug, Deserialize)]
struct DryRunBody {
    #[serde(flatten)]
    draft: DraftBody,
    #[serde(default)]
    cluster_id: Option<i64>,
    #[serde(default)]
    record_ids: Option<Vec<String>>,
}

async fn dry_run_rule(State(wb): Shared, Json(body): Json<DryRunBody>) -> ApiResult {
    let draft = body.draft.compile()?;
    let version = wb.rules().version;
    let (run, _, _) = wb.run();
    let scope: Vec<String> = match (body.cluster_id, body.record_ids) {
        (Some(cid), _) => {
            let ids: Vec<String> = run.members(cid).into_iter().map(String::from).collect();
            if ids.is_empty() {
                return Err(ApiError::not_found(format!("no cluster {cid}")));
            }
            ids
        }
        (None, Some(ids)) => ids,
        (None, None) => wb.records.iter().filter(|r| r.is_failure()).map(|r| r.record_id.clone()).collect(),
    };
    if let Some(unknown) = scope.iter().find(|id| wb.record(id).is_none()) {
        return Err(ApiError::not_found(format!("no record {unknown}")));
    }
    let worker = Arc::clone(&wb);
    let report = blocking(move || {
        let records: Vec<&BuildRecord> = scope.iter().filter_map(|id| worker.record(id)).collect();
        dry_run(draft.pattern(), records)
    })
    .await?;
    Ok(Json(json!({
        "matched_ids": report.matched_ids,
        "total": report.total,
        "fraction": report.fraction,
        "rules_version": version,
    })))
}

async fn save_rule(State(wb): Shared, Json(body): Json<DraftBody>) -> ApiResult {
    let kind = body.kind;
    let draft = body.compile()?;
    let id = match &draft {
        Draft::Repair(r) => r.id.clone(),
        Draft::Suggestion(s) => s.id.clone(),
    };
    let worker = Arc::clone(&wb);
    let version = blocking(move || worker.commit_rule(draft)).await?.map_err(|e| match e {
        RuleError::DuplicateId(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
        RuleError::Invalid { .. } => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    })?;
    Ok(Json(json!({ "id": id, "kind": kind, "version": version })))
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    record: String,
}

async fn search_record(State(wb): Shared, Query(q): Query<SearchParams>) -> ApiResult {
    if wb.record(&q.record).is_none() {
        return Err(ApiError::not_found(format!("no record {}", q.record)));
    }
    if wb.searcher.is_none() {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no search backend configured"));
    }
    let worker = Arc::clone(&wb);
    let result = blocking(move || {
        let r = worker.record(&q.record).expect("checked above");
        let searcher = worker.searcher.as_ref().expect("checked above");
        searcher.leads(&format!("{}\n{}", r.stdout_log, r.stderr_log))
    })
    .await?;
    let (query, results) = result.map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()))?;
    Ok(Json(json!({ "query": query, "results": results })))
}

async fn repair_record(State(wb): Shared, UrlPath(record_id): UrlPath<String>) -> ApiResult {
    let Some(record) = wb.record(&record_id) else {
        return Err(ApiError::not_found(format!("no record {record_id}")));
    };
    if !record.is_failure() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("record {record_id} has outcome {}; only failures are repaired", record.outcome),
        ));
    }
    let db = wb.rules();
    let worker = Arc::clone(&wb);
    let outcome = blocking(move || {
        let r = worker.record(&record_id).expect("checked above");
        repair(r, &db, worker.searcher.as_ref()).map(|o| (o, db.version))
    })
    .await?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let (outcome, version) = outcome;
    let name = Path::new(&record.dockerfile_path)
        .file_name()
        .map_or_else(|| "Dockerfile".into(), |n| n.to_string_lossy().into_owned());
    let body = match outcome {
        RepairOutcome::Repaired { rule_id, variants, .. } => json!({
            "kind": "repaired",
            "rule_id": rule_id,
            "variants": variants.iter().map(|v| json!({
                "rule_id": v.rule_id,
                "solution_index": v.solution_index,
                "diff": v.diff(&record.dockerfile_text, &name),
            })).collect::<Vec<_>>(),
            "rules_version": version,
        }),
        RepairOutcome::Suggested {
            suggestion_id, message, ..
        } => json!({
            "kind": "suggested",
            "suggestion_id": suggestion_id,
            "message": message,
            "rules_version": version,
        }),
        RepairOutcome::SearchFallback { query, results, error } => json!({
            "kind": "search_fallback",
            "query": query,
            "results": results,
            "error": error,
            "rules_version": version,
        }),
    };
    Ok(Json(body))
}

/// Serves `wb` on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    wb: Arc<Workbench>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), WorkbenchError> {
    axum::serve(listener, wb.router())
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(WorkbenchError::Serve)
}

/// Opens the workbench and serves it until Ctrl-C. Startup problems
/// (missing corpus, bad rules, busy port) are returned before serving.
pub async fn serve(cfg: WorkbenchConfig) -> Result<(), WorkbenchError> {
    let wb = Arc::new(tokio::task::block_in_place(|| Workbench::open(&cfg))?);
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| WorkbenchError::Bind { addr: addr.clone(), source })?;
    let local: SocketAddr = listener.local_addr().map_err(WorkbenchError::Serve)?;
    info!("workbench listening on http://{local}");
    serve_on(wb, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
