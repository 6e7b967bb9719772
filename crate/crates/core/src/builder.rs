//! In-context builds through a container engine CLI.
//!
//! Each job clones (or reuses) a repository, runs
//! `<engine> build <flags> -f <dockerfile> <context>` with the repository
//! as build context, and turns what happened into a [`BuildRecord`].
//! Nothing is thrown away: clone failures and other trivial problems are
//! recorded (as `Undetermined`, or with `trivial=true` in `meta`).

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::Utc;
use fancy_regex::Regex;
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::corpus::{classify_outcome, BuildOutcome, BuildRecord, CorpusWriter, DEFAULT_TIMEOUT_LIMIT_S};
use crate::dockerfile::InstructionKind;
use crate::embed::fnv1a64;

/// Overrides [`BuilderConfig::engine`].
pub const ENGINE_ENV: &str = "DOCKWRIGHT_ENGINE";
pub const DEFAULT_PARALLELISM: usize = 2;

#[derive(Debug, Error)]
pub enum BuilderError {
    #[error("container engine {engine:?} is not usable: {reason}")]
    EngineUnavailable { engine: String, reason: String },
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("cannot write corpus: {0}")]
    Corpus(#[source] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildJob {
    /// Clone URL, or a local directory used in place.
    pub repo_ref: String,
    /// Dockerfile path relative to the repository root.
    pub dockerfile_path: String,
    /// Build context relative to the repository root; the root when absent.
    #[serde(default)]
    pub context_dir: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_limit_s: f64,
    /// Record id to use; derived from repo and path when absent.
    #[serde(default)]
    pub record_id: Option<String>,
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_LIMIT_S
}

impl BuildJob {
    pub fn new(repo_ref: impl Into<String>, dockerfile_path: impl Into<String>) -> Self {
        Self {
            repo_ref: repo_ref.into(),
            dockerfile_path: dockerfile_path.into(),
            context_dir: None,
            timeout_limit_s: DEFAULT_TIMEOUT_LIMIT_S,
            record_id: None,
        }
    }

    pub fn id(&self) -> String {
        self.record_id.clone().unwrap_or_else(|| {
            format!("{:016x}", fnv1a64(format!("{}\0{}", self.repo_ref, self.dockerfile_path).as_bytes()))
        })
    }

    fn validate(&self) -> Result<(), BuilderError> {
        if !(self.timeout_limit_s > 0.0) || !self.timeout_limit_s.is_finite() {
            return Err(BuilderError::InvalidJob(format!(
                "timeout limit must be positive, got {}",
                self.timeout_limit_s
            )));
        }
        if self.dockerfile_path.trim().is_empty() {
            return Err(BuilderError::InvalidJob("empty dockerfile path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    pub engine: String,
    /// Inserted between `build` and `-f`.
    pub extra_flags: Vec<String>,
    /// Arguments of the reachability probe run once per batch.
    pub probe_args: Vec<String>,
    /// Case-insensitive substrings that mark a daemon-internal failure.
    pub daemon_error_patterns: Vec<String>,
    /// Failures in these instructions get `trivial=true` in `meta`.
    pub trivial_kinds: Vec<String>,
    pub vcs: String,
    /// Where repositories are cloned.
    pub work_dir: PathBuf,
    pub keep_checkouts: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            engine: "docker".into(),
            extra_flags: vec!["--no-cache".into(), "--rm".into()],
            probe_args: vec!["version".into()],
            daemon_error_patterns: [
                "error response from daemon",
                "cannot connect to the docker daemon",
                "failed to register layer",
                "layer does not exist",
                "failed to create endpoint",
                "devmapper",
                "context deadline exceeded",
            ]
            .map(String::from)
            .to_vec(),
            trivial_kinds: vec!["COPY".into(), "ADD".into()],
            vcs: "git".into(),
            work_dir: std::env::temp_dir().join("dockwright-builds"),
            keep_checkouts: false,
        }
    }
}

impl BuilderConfig {
    /// Applies the [`ENGINE_ENV`] override.
    pub fn with_env(mut self) -> Self {
        if let Ok(engine) = std::env::var(ENGINE_ENV) {
            if !engine.trim().is_empty() {
                self.engine = engine;
            }
        }
        self
    }

    fn is_daemon_error(&self, stdout: &str, stderr: &str) -> bool {
        let (o, e) = (stdout.to_lowercase(), stderr.to_lowercase());
        self.daemon_error_patterns
            .iter()
            .map(|p| p.to_lowercase())
            .any(|p| o.contains(&p) || e.contains(&p))
    }

    fn trivial_kind_set(&self) -> Vec<InstructionKind> {
        self.trivial_kinds
            .iter()
            .filter_map(|k| InstructionKind::parse_selector(k))
            .collect()
    }
}

/// Runs the probe command; an error means no job can run.
pub fn probe_engine(cfg: &BuilderConfig) -> Result<(), BuilderError> {
    let unavailable = |reason: String| BuilderError::EngineUnavailable {
        engine: cfg.engine.clone(),
        reason,
    };
    let out = Command::new(&cfg.engine)
        .args(&cfg.probe_args)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| unavailable(e.to_string()))?;
    if !out.status.success() {
        return Err(unavailable(format!(
            "probe exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(())
}

struct Captured {
    exit_code: Option<i32>,
    stdout: String,
    stderr: String,
    elapsed: f64,
    killed: bool,
}

/// Copies a pipe into a shared buffer until EOF.
fn drain(mut r: impl Read + Send + 'static) -> (Arc<Mutex<Vec<u8>>>, thread::JoinHandle<()>) {
    let buf = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&buf);
    let handle = thread::spawn(move || {
        let mut chunk = [0u8; 8192];
        while let Ok(n) = r.read(&mut chunk) {
            if n == 0 {
                break;
            }
            sink.lock().unwrap().extend_from_slice(&chunk[..n]);
        }
    });
    (buf, handle)
}

/// How long to wait for pipes to close after a kill. Grandchildren may
/// keep them open; their output past this point is dropped.
const KILL_GRACE: Duration = Duration::from_millis(200);

fn collect(buf: Arc<Mutex<Vec<u8>>>, handle: thread::JoinHandle<()>, wait: bool) -> String {
    if wait {
        let _ = handle.join();
    } else {
        let deadline = Instant::now() + KILL_GRACE;
        while !handle.is_finished() && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(10));
        }
    }
    let bytes = buf.lock().unwrap();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Runs `cmd` with a wall-clock limit, killing it when the limit passes.
fn run_limited(mut cmd: Command, limit: Duration) -> io::Result<Captured> {
    let start = Instant::now();
    let mut child = cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn()?;
    let out = drain(child.stdout.take().expect("piped stdout"));
    let err = drain(child.stderr.take().expect("piped stderr"));
    let (status, killed) = match child.wait_timeout(limit)? {
        Some(status) => (Some(status), false),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(Captured {
        exit_code: status.and_then(|s| s.code()),
        stdout: collect(out.0, out.1, !killed),
        stderr: collect(err.0, err.1, !killed),
        elapsed,
        killed,
    })
}

/// Instruction keyword of the failing step, read from classic
/// (`Step 3/5 : COPY ...`) or BuildKit (`#7 [3/5] COPY ...`) output.
fn failing_kind(stdout: &str, stderr: &str) -> Option<InstructionKind> {
    let step = Regex::new(r"(?m)^(?:Step \d+/\d+ : |#\d+ \[(?:[\w.-]+ )?\d+/\d+\] )([A-Za-z]+)").expect("static regex");
    let failed = Regex::new(r"(?mi)^(COPY|ADD) failed").expect("static regex");
    let mut last = None;
    for text in [stdout, stderr] {
        for caps in step.captures_iter(text).flatten() {
            last = InstructionKind::from_keyword(caps[1].as_bytes()).or(last);
        }
        if let Ok(Some(c)) = failed.captures(text) {
            return InstructionKind::from_keyword(c[1].as_bytes());
        }
    }
    last
}

fn resolve_inside(root: &Path, rel: &str) -> Result<PathBuf, String> {
    let root = root
        .canonicalize()
        .map_err(|e| format!("cannot resolve {}: {e}", root.display()))?;
    let p = root
        .join(rel)
        .canonicalize()
        .map_err(|e| format!("cannot resolve {rel}: {e}"))?;
    if !p.starts_with(&root) {
        return Err(format!("{rel} escapes the repository"));
    }
    Ok(p)
}

struct Checkout {
    root: PathBuf,
    cleanup: bool,
}

fn checkout(job: &BuildJob, cfg: &BuilderConfig, id: &str) -> Result<Checkout, String> {
    let local = Path::new(&job.repo_ref);
    if local.is_dir() {
        return Ok(Checkout {
            root: local.to_path_buf(),
            cleanup: false,
        });
    }
    std::fs::create_dir_all(&cfg.work_dir).map_err(|e| format!("cannot create {}: {e}", cfg.work_dir.display()))?;
    let dest = cfg.work_dir.join(id);
    if dest.exists() {
        let _ = std::fs::remove_dir_all(&dest);
    }
    let out = Command::new(&cfg.vcs)
        .args(["clone", "--depth", "1", "--quiet", &job.repo_ref])
        .arg(&dest)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| format!("cannot run {}: {e}", cfg.vcs))?;
    if !out.status.success() {
        return Err(format!(
            "clone exited with {}\n{}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim_end()
        ));
    }
    Ok(Checkout {
        root: dest,
        cleanup: !cfg.keep_checkouts,
    })
}

fn undetermined(job: &BuildJob, id: String, dockerfile: String, meta: BTreeMap<String, String>) -> BuildRecord {
    BuildRecord {
        record_id: id,
        repo_ref: job.repo_ref.clone(),
        dockerfile_path: job.dockerfile_path.clone(),
        dockerfile_text: dockerfile,
        stdout_log: String::new(),
        stderr_log: String::new(),
        outcome: BuildOutcome::Undetermined,
        duration: 0.0,
        captured_at: Utc::now().fixed_offset(),
        meta,
    }
}

/// Builds one job. Only an invalid job is an error; every problem met
/// while building ends up in the returned record.
pub fn run_build(job: &BuildJob, cfg: &BuilderConfig) -> Result<BuildRecord, BuilderError> {
    job.validate()?;
    let id = job.id();
    let mut meta = BTreeMap::new();
    let co = match checkout(job, cfg, &id) {
        Ok(c) => c,
        Err(log) => {
            meta.insert("clone_log".into(), log);
            return Ok(undetermined(job, id, String::new(), meta));
        }
    };
    let record = build_in(job, cfg, &co.root, id, meta);
    if co.cleanup {
        if let Err(e) = std::fs::remove_dir_all(&co.root) {
            warn!("cannot remove checkout {}: {e}", co.root.display());
        }
    }
    Ok(record)
}

fn build_in(job: &BuildJob, cfg: &BuilderConfig, root: &Path, id: String, mut meta: BTreeMap<String, String>) -> BuildRecord {
    let paths = resolve_inside(root, &job.dockerfile_path).and_then(|df| {
        let ctx = resolve_inside(root, job.context_dir.as_deref().unwrap_or("."))?;
        Ok((df, ctx))
    });
    let (dockerfile, context) = match paths {
        Ok(p) => p,
        Err(e) => {
            meta.insert("error".into(), e);
            return undetermined(job, id, String::new(), meta);
        }
    };
    let text = match std::fs::read(&dockerfile) {
        Ok(b) => String::from_utf8_lossy(&b).into_owned(),
        Err(e) => {
            meta.insert("error".into(), format!("cannot read Dockerfile: {e}"));
            return undetermined(job, id, String::new(), meta);
        }
    };

    let mut cmd = Command::new(&cfg.engine);
    cmd.arg("build").args(&cfg.extra_flags).arg("-f").arg(&dockerfile).arg(&context);
    debug!("{id}: {cmd:?}");
    let limit = Duration::from_secs_f64(job.timeout_limit_s);
    let captured = match run_limited(cmd, limit) {
        Ok(c) => c,
        Err(e) => {
            meta.insert("error".into(), format!("cannot run {}: {e}", cfg.engine));
            return undetermined(job, id, text, meta);
        }
    };
    // A killed build ran at least to the limit, whatever the clock says.
    let duration = if captured.killed {
        captured.elapsed.max(job.timeout_limit_s)
    } else {
        captured.elapsed
    };
    let daemon_error = captured.exit_code != Some(0) && cfg.is_daemon_error(&captured.stdout, &captured.stderr);
    let outcome = classify_outcome(captured.exit_code, duration, daemon_error, job.timeout_limit_s)
        .expect("timeout validated above");
    if let Some(code) = captured.exit_code {
        meta.insert("exit_code".into(), code.to_string());
    }
    if daemon_error {
        meta.insert("daemon_error".into(), "true".into());
    }
    if outcome == BuildOutcome::Failure {
        if let Some(kind) = failing_kind(&captured.stdout, &captured.stderr) {
            meta.insert("failed_instruction".into(), kind.as_str().into());
            if cfg.trivial_kind_set().contains(&kind) {
                meta.insert("trivial".into(), "true".into());
            }
        }
    }
    BuildRecord {
        record_id: id,
        repo_ref: job.repo_ref.clone(),
        dockerfile_path: job.dockerfile_path.clone(),
        dockerfile_text: text,
        stdout_log: captured.stdout,
        stderr_log: captured.stderr,
        outcome,
        duration,
        captured_at: Utc::now().fixed_offset(),
        meta,
    }
}

/// Runs every job on a pool of `parallelism` workers after probing the
/// engine once. Records come back in job order; with a `writer`, each one
/// is appended as soon as it finishes.
pub fn run_batch(
    jobs: &[BuildJob],
    cfg: &BuilderConfig,
    parallelism: usize,
    writer: Option<&CorpusWriter>,
) -> Result<Vec<BuildRecord>, BuilderError> {
    if parallelism == 0 {
        return Err(BuilderError::ZeroParallelism);
    }
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    for job in jobs {
        job.validate()?;
    }
    probe_engine(cfg)?;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<BuildRecord>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let write_error: Mutex<Option<io::Error>> = Mutex::new(None);
    thread::scope(|s| {
        for _ in 0..parallelism.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let record = run_build(job, cfg).expect("jobs validated before the batch");
                if let Some(w) = writer {
                    if let Err(e) = w.append(&record) {
                        write_error.lock().unwrap().get_or_insert(e);
                    }
                }
                *slots[i].lock().unwrap() = Some(record);
            });
        }
    });
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(BuilderError::Corpus(e));
    }
    Ok(slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect())
}
