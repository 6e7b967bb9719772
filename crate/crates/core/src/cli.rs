//! Command-line front end. Every subcommand is a thin composition of the
//! library operations.
//!
//! Exit status: 0 on success, 1 when the input is well-formed but fails
//! validation (corpus rejects, unknown record, duplicate id), 2 on I/O,
//! configuration or usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::cluster::parse_grid;
use crate::corpus::{corpus_stats, ingest_corpus, persist_corpus, BuildOutcome, BuildRecord, CorpusError};
use crate::embed::EmbedderConfig;
use crate::metrics::{
    render_coverage, render_proportions, repair_coverage, solution_proportions, time_travel, write_csv,
    EquivalenceTag, TimeTravelSummary,
};
use crate::pipeline::{cluster_failures, ClusterRun};
use crate::rules::{load_rules, repair, RepairOutcome, RuleDb, RuleError};
use crate::search::{Allowlist, HttpSearchBackend, Searcher, DEFAULT_ALLOWLIST, SEARCH_URL_ENV};
use crate::workbench::{self, WorkbenchConfig};

const SEARCH_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Parser)]
#[command(name = "dockwright", version, about = "Triage and repair Dockerfile build failures")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus file and report rejected lines.
    Ingest(IngestArgs),
    /// Build Dockerfiles in context and append the records to a corpus.
    #[cfg(feature = "builder")]
    Build(BuildArgs),
    /// Cluster the failing records of a corpus by their log tails.
    Cluster(ClusterArgs),
    /// Repair a failing record (or a Dockerfile plus its build log).
    Repair(RepairArgs),
    /// Look up forum posts for a failure log.
    Search(SearchArgs),
    /// Corpus, coverage and equivalence reports.
    Report(ReportArgs),
    /// Run the rule-authoring HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Write the accepted records here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(feature = "builder")]
#[derive(Debug, Args)]
pub struct BuildArgs {
    /// JSON Lines file of build jobs.
    #[arg(long)]
    pub jobs: PathBuf,
    /// Corpus file records are appended to.
    #[arg(long)]
    pub out: PathBuf,
    /// Builder settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = crate::builder::DEFAULT_PARALLELISM)]
    pub parallelism: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `default` or e.g. `mcs=3,5;k=2,3`.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Where the assignment (with the grid-search report) is written.
    #[arg(long, default_value = "assignment.json")]
    pub out: PathBuf,
    /// Embedder settings (TOML); the hashed n-gram embedder by default.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long, requires = "record", conflicts_with_all = ["dockerfile", "log"])]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub record: Option<String>,
    #[arg(long, requires = "log")]
    pub dockerfile: Option<PathBuf>,
    /// Build log (stdout and stderr) of `--dockerfile`.
    #[arg(long, requires = "dockerfile")]
    pub log: Option<PathBuf>,
    /// Rule file; the bundled rules when omitted.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Where `<name>.fixN` files go. Defaults to the directory of
    /// `--dockerfile`, or the current directory for corpus records.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Search backend for the fallback (also read from the environment).
    #[arg(long)]
    pub search_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, requires = "record", conflicts_with = "log")]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub record: Option<String>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub search_url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("which").required(true)
    .args(["coverage", "proportions", "breakage", "time_travel"])))]
pub struct ReportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Clustering from `cluster`; computed with the default grid if omitted.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Per repair rule: clusters matched, parent and average coverage.
    #[arg(long)]
    pub coverage: bool,
    /// Per cluster: repaired / suggested / unknown shares.
    #[arg(long)]
    pub proportions: bool,
    /// Outcome counts and breakage rate.
    #[arg(long)]
    pub breakage: bool,
    /// JSON Lines of `{"record": id, "fixed": text}`: compare repairs with
    /// the developer's later fix.
    #[arg(long, value_name = "PAIRS")]
    pub time_travel: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
}

/// A failed command and its exit status.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::DuplicateId { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn io_err(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("cannot {what} {}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err("read", path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err("write", path, e))
}

type Out<'a> = &'a mut dyn Write;

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(|e| CliError::Io(format!("cannot write output: {e}")))
    };
}

/// Parses `args` (program name first) and runs the command. Returns the
/// exit status.
pub fn run<I, T>(args: I, out: Out<'_>, err: Out<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    2
                }
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: Out<'_>, err: Out<'_>) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a, out, err),
        #[cfg(feature = "builder")]
        Command::Build(a) => build(a, out),
        Command::Cluster(a) => cluster(a, out),
        Command::Repair(a) => repair_cmd(a, out),
        Command::Search(a) => search(a, out),
        Command::Report(a) => report(a, out, err),
        Command::Serve(a) => serve(a),
    }
}

fn ingest(a: IngestArgs, out: Out<'_>, err: Out<'_>) -> Result<(), CliError> {
    let ingested = ingest_corpus(&a.corpus)?;
    let stats = corpus_stats(&ingested.records);
    say!(
        out,
        "{} records ({} success, {} failure, {} timeout, {} undetermined), {} rejected",
        stats.total,
        stats.successes,
        stats.failures,
        stats.timeouts,
        stats.undetermined,
        ingested.rejects.len()
    )?;
    for r in &ingested.rejects {
        say!(err, "line {}: {}", r.line, r.reason)?;
    }
    if let Some(path) = &a.out {
        persist_corpus(&ingested.records, path).map_err(|e| io_err("write", path, e))?;
    }
    if ingested.rejects.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} malformed line(s) in {}",
            ingested.rejects.len(),
            a.corpus.display()
        )))
    }
}

/// Loads a corpus whose rejects are tolerated but reported.
fn load_corpus(path: &Path) -> Result<Vec<BuildRecord>, CliError> {
    let ingested = ingest_corpus(path)?;
    for r in &ingested.rejects {
        log::warn!("{}: line {} skipped: {}", path.display(), r.line, r.reason);
    }
    Ok(ingested.records)
}

#[cfg(feature = "builder")]
fn build(a: BuildArgs, out: Out<'_>) -> Result<(), CliError> {
    use crate::builder::{run_batch, BuildJob, BuilderConfig, BuilderError};
    use crate::corpus::CorpusWriter;

    let cfg: BuilderConfig = match &a.config {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => BuilderConfig::default(),
    }
    .with_env();
    let mut jobs = Vec::new();
    for (i, line) in read(&a.jobs)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let job: BuildJob = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("{} line {}: {e}", a.jobs.display(), i + 1)))?;
        jobs.push(job);
    }
    let writer = CorpusWriter::append_to(&a.out).map_err(|e| io_err("open", &a.out, e))?;
    let records = run_batch(&jobs, &cfg, a.parallelism, Some(&writer)).map_err(|e| match e {
        BuilderError::InvalidJob(_) | BuilderError::ZeroParallelism => CliError::Validation(e.to_string()),
        _ => CliError::Io(e.to_string()),
    })?;
    let stats = corpus_stats(&records);
    say!(
        out,
        "{} builds: {} success, {} failure, {} timeout, {} undetermined",
        stats.total,
        stats.successes,
        stats.failures,
        stats.timeouts,
        stats.undetermined
    )
}

fn embedder_config(path: Option<&Path>) -> Result<EmbedderConfig, CliError> {
    match path {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => Ok(EmbedderConfig::default()),
    }
}

fn cluster(a: ClusterArgs, out: Out<'_>) -> Result<(), CliError> {
    let grid = parse_grid(&a.grid).map_err(|e| CliError::Io(format!("bad --grid: {e}")))?;
    let embedder = embedder_config(a.embedder.as_deref())?
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let records = load_corpus(&a.corpus)?;
    let run = cluster_failures(&records, embedder.as_ref(), &grid).map_err(|e| CliError::Io(e.to_string()))?;
    run.save(&a.out).map_err(|e| CliError::Io(e.to_string()))?;
    let best = run.grid.best_entry();
    say!(
        out,
        "{} failing records, {} configurations evaluated",
        run.record_ids.len(),
        run.grid.evaluated.len()
    )?;
    say!(
        out,
        "best: min_cluster_size={} min_samples={}: {} clusters, {} noise, {:.2}% clustered",
        best.params.min_cluster_size,
        best.params.min_samples,
        run.assignment.cluster_count(),
        run.assignment.noise_count(),
        run.assignment.clustered_fraction() * 100.0
    )?;
    for (cid, size) in run.assignment.sizes().iter().enumerate() {
        say!(out, "cluster {cid}: {size} records")?;
    }
    if !run.stdout_fallback.is_empty() {
        say!(out, "{} records had an empty stderr; stdout was used", run.stdout_fallback.len())?;
    }
    say!(out, "wrote {}", a.out.display())
}

fn rules_db(path: Option<&Path>) -> Result<RuleDb, CliError> {
    match path {
        Some(p) if !p.exists() => Err(CliError::Io(format!("rule file {} does not exist", p.display()))),
        Some(p) => Ok(load_rules(p)?),
        None => Ok(RuleDb::shipped()),
    }
}

fn searcher(url: Option<&str>) -> Result<Option<Searcher>, CliError> {
    let env = std::env::var(SEARCH_URL_ENV).ok();
    let Some(url) = url.or(env.as_deref()).filter(|u| !u.is_empty()) else {
        return Ok(None);
    };
    let allowlist = Allowlist::new(DEFAULT_ALLOWLIST).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Some(Searcher::new(
        Box::new(HttpSearchBackend::new(url, SEARCH_TIMEOUT)),
        allowlist,
    )))
}

fn find_record(records: Vec<BuildRecord>, id: &str) -> Result<BuildRecord, CliError> {
    records
        .into_iter()
        .find(|r| r.record_id == id)
        .ok_or_else(|| CliError::Validation(format!("no record {id:?} in the corpus")))
}

fn repair_cmd(a: RepairArgs, out: Out<'_>) -> Result<(), CliError> {
    let db = rules_db(a.rules.as_deref())?;
    let (record, default_dir) = match (&a.corpus, &a.record, &a.dockerfile, &a.log) {
        (Some(corpus), Some(id), _, _) => (find_record(load_corpus(corpus)?, id)?, PathBuf::from(".")),
        (_, _, Some(df), Some(log)) => {
            let mut r = crate::corpus::BuildRecord {
                record_id: df.display().to_string(),
                repo_ref: String::new(),
                dockerfile_path: df.display().to_string(),
                dockerfile_text: read(df)?,
                stdout_log: String::new(),
                stderr_log: read(log)?,
                outcome: BuildOutcome::Failure,
                duration: 0.0,
                captured_at: chrono::Utc::now().fixed_offset(),
                meta: Default::default(),
            };
            r.meta.insert("source".into(), "cli".into());
            let dir = df.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            (r, dir.to_path_buf())
        }
        _ => {
            return Err(CliError::Io(
                "give either --corpus and --record, or --dockerfile and --log".into(),
            ))
        }
    };
    let searcher = searcher(a.search_url.as_deref())?;
    let outcome = repair(&record, &db, searcher.as_ref()).map_err(|e| CliError::Validation(e.to_string()))?;
    let name = Path::new(&record.dockerfile_path)
        .file_name()
        .map_or_else(|| "Dockerfile".to_string(), |n| n.to_string_lossy().into_owned());
    match outcome {
        RepairOutcome::Repaired { rule_id, variants, .. } => {
            let dir = a.out_dir.unwrap_or(default_dir);
            fs::create_dir_all(&dir).map_err(|e| io_err("create", &dir, e))?;
            say!(out, "repaired by {rule_id}: {} variant(s)", variants.len())?;
            for (n, v) in variants.iter().enumerate() {
                let path = dir.join(format!("{name}.fix{}", n + 1));
                write_file(&path, &v.text)?;
                say!(out, "# {} (solution {})", path.display(), v.solution_index + 1)?;
                write!(out, "{}", v.diff(&record.dockerfile_text, &name))
                    .map_err(|e| CliError::Io(format!("cannot write output: {e}")))?;
            }
            Ok(())
        }
        RepairOutcome::Suggested {
            suggestion_id, message, ..
        } => say!(out, "suggestion {suggestion_id}: {message}"),
        RepairOutcome::SearchFallback { query, results, error } => {
            say!(out, "no rule matched")?;
            print_leads(out, query.as_ref().map(|q| q.query_string.as_str()), &results)?;
            if let Some(e) = error {
                say!(out, "search failed: {e}")?;
            } else if searcher.is_none() {
                say!(out, "(no search backend configured)")?;
            }
            Ok(())
        }
    }
}

fn print_leads(out: Out<'_>, query: Option<&str>, results: &[crate::search::SearchResult]) -> Result<(), CliError> {
    if let Some(q) = query {
        say!(out, "query: {q}")?;
    }
    for (i, r) in results.iter().enumerate() {
        say!(out, "{}. {} [{}] {}", i + 1, r.url, r.source_domain, r.title)?;
    }
    Ok(())
}

fn search(a: SearchArgs, out: Out<'_>) -> Result<(), CliError> {
    let log = match (&a.corpus, &a.record, &a.log) {
        (Some(corpus), Some(id), _) => {
            let r = find_record(load_corpus(corpus)?, id)?;
            format!("{}\n{}", r.stdout_log, r.stderr_log)
        }
        (_, _, Some(log)) => read(log)?,
        _ => return Err(CliError::Io("give either --corpus and --record, or --log".into())),
    };
    let Some(searcher) = searcher(a.search_url.as_deref())? else {
        return Err(CliError::Io(format!("no search backend: pass --search-url or set {SEARCH_URL_ENV}")));
    };
    let (query, results) = searcher.leads(&log).map_err(|e| CliError::Io(e.to_string()))?;
    if query.is_none() {
        return say!(out, "no keywords found in the log");
    }
    print_leads(out, query.as_ref().map(|q| q.query_string.as_str()), &results)?;
    if results.is_empty() {
        say!(out, "no leads")?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TimeTravelPair {
    record: String,
    fixed: String,
}

#[derive(Debug, Serialize)]
struct TimeTravelRow {
    record_id: String,
    tag: EquivalenceTag,
    detail: String,
}

/// Records aligned with the clustering, from `--assignment` or computed.
fn clustered(a: &ReportArgs, records: &[BuildRecord]) -> Result<(ClusterRun, Vec<BuildRecord>), CliError> {
    let run = match &a.assignment {
        Some(p) => ClusterRun::load(p).map_err(|e| CliError::Io(e.to_string()))?,
        None => {
            let embedder = EmbedderConfig::default().build().map_err(|e| CliError::Io(e.to_string()))?;
            cluster_failures(records, embedder.as_ref(), &crate::cluster::default_grid())
                .map_err(|e| CliError::Io(e.to_string()))?
        }
    };
    let (aligned, missing) = run.aligned(records);
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "assignment refers to {} record(s) not in the corpus, e.g. {:?}",
            missing.len(),
            missing[0]
        )));
    }
    let aligned = aligned.into_iter().cloned().collect();
    Ok((run, aligned))
}

fn render<T: Serialize>(rows: &[T], format: Format, text: impl FnOnce() -> String) -> Result<String, CliError> {
    match format {
        Format::Text => Ok(text()),
        Format::Json => Ok(serde_json::to_string_pretty(rows).expect("report rows serialize") + "\n"),
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(rows, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
        }
    }
}

fn report(a: ReportArgs, out: Out<'_>, err: Out<'_>) -> Result<(), CliError> {
    let records = load_corpus(&a.corpus)?;
    let text = if a.breakage {
        let stats = corpus_stats(&records);
        render(&[stats], a.format, || {
            format!(
                "total {}\nsuccess {}\nfailure {}\ntimeout {}\nundetermined {}\nbreakage {:.2}%\n",
                stats.total,
                stats.successes,
                stats.failures,
                stats.timeouts,
                stats.undetermined,
                stats.breakage_rate * 100.0
            )
        })?
    } else if a.coverage {
        let db = rules_db(a.rules.as_deref())?;
        let (run, aligned) = clustered(&a, &records)?;
        let cov = repair_coverage(&db, &run.assignment, &aligned).map_err(|e| CliError::Io(e.to_string()))?;
        if a.format != Format::Text {
            for w in &cov.warnings {
                say!(err, "warning: {w}")?;
            }
        }
        render(&cov.rows, a.format, || render_coverage(&cov))?
    } else if a.proportions {
        let db = rules_db(a.rules.as_deref())?;
        let (run, aligned) = clustered(&a, &records)?;
        let rows = solution_proportions(&db, &run.assignment, &aligned).map_err(|e| CliError::Io(e.to_string()))?;
        render(&rows, a.format, || render_proportions(&rows))?
    } else if let Some(pairs_path) = &a.time_travel {
        let db = rules_db(a.rules.as_deref())?;
        let mut rows = Vec::new();
        let mut summary = TimeTravelSummary::default();
        for (i, line) in read(pairs_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pair: TimeTravelPair = serde_json::from_str(line)
                .map_err(|e| CliError::Validation(format!("{} line {}: {e}", pairs_path.display(), i + 1)))?;
            let record = records
                .iter()
                .find(|r| r.record_id == pair.record)
                .ok_or_else(|| CliError::Validation(format!("no record {:?} in the corpus", pair.record)))?;
            let verdict = time_travel(record, &pair.fixed, &db);
            summary.add(verdict.tag);
            rows.push(TimeTravelRow {
                record_id: pair.record,
                tag: verdict.tag,
                detail: verdict.detail,
            });
        }
        render(&rows, a.format, || {
            let mut s = String::new();
            for r in &rows {
                s += &format!("{:<16} {:<16} {}\n", r.record_id, serde_json::to_value(r.tag).unwrap().as_str().unwrap(), r.detail);
            }
            s += &format!(
                "{} pairs: {} identical, {} suggestion match, {} no match ({})\n",
                summary.total,
                summary.identical,
                summary.suggestion_match,
                summary.no_match,
                summary
                    .covered_fraction()
                    .map_or_else(|| "-".to_string(), |f| format!("{:.2}% covered", f * 100.0))
            );
            s
        })?
    } else {
        unreachable!("clap requires one report kind")
    };
    match &a.out {
        Some(p) => write_file(p, &text),
        None => write!(out, "{text}").map_err(|e| CliError::Io(format!("cannot write output: {e}"))),
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut cfg = WorkbenchConfig::load(&a.config).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("cannot start runtime: {e}")))?;
    rt.block_on(workbench::serve(cfg)).map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("dockwright").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2_and_help_exits_0() {
        assert_eq!(run_args(&["--help"]).0, 0);
        assert_eq!(run_args(&["--version"]).0, 0);
        assert_eq!(run_args(&["ingest", "--bogus"]).0, 2);
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        assert_eq!(run_args(&["report", "--corpus", "x"]).0, 2, "a report kind is required");
    }

    #[test]
    fn missing_corpus_is_an_io_error() {
        let (code, _, err) = run_args(&["ingest", "--corpus", "/nonexistent/c.jsonl"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("error: cannot read corpus"));
    }
}
