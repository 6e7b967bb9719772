//! Rule database: error signatures over a Dockerfile and its build log,
//! edit scripts that repair them, and suggestions for the cases a script
//! cannot fix.
//!
//! A [`Pattern`] pairs an optional regex over the Dockerfile text (the
//! *static* side) with an optional regex over the normalized log (the
//! *dynamic* side). Both present sides must match. Capture groups are
//! numbered `$0..$n` across the pair, static groups first, and named groups
//! are also reachable as `${name}`.
//!
//! Templates (edit text, suggestion messages, guard operands) interpolate
//! `$3`, `${3}` and `${name}`. `$$` is a literal dollar; a `$` followed by
//! anything else is kept as is, so shell variables such as `$PATH` need no
//! escaping.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fancy_regex::Regex;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BuildOutcome, BuildRecord};
use crate::dockerfile::{parse, splice, DockerfileAst, Instruction, InstructionKind, SourceSpan, SpanEdit, SpliceError};
use crate::logpipe::normalize;
use crate::search::{SearchQuery, SearchResult, Searcher};

const SHIPPED_RULES: &str = include_str!("../rules/shipped.json");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule {id:?}: {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate rule id {0:?}")]
    DuplicateId(String),
    #[error("cannot access rule file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed rule file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn invalid(id: &str, message: impl Into<String>) -> RuleError {
    RuleError::Invalid {
        id: id.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ApplyError {
    #[error("binding {0} is not bound")]
    Unbound(String),
    #[error("binding {0} does not point into the Dockerfile")]
    NotStatic(String),
    #[error("no {0} instruction to edit")]
    NoInstruction(InstructionKind),
    #[error(transparent)]
    Splice(#[from] SpliceError),
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("record {id} has outcome {outcome}; only failures are repaired")]
    NotFailure { id: String, outcome: BuildOutcome },
}

// ---------------------------------------------------------------------------
// Templates and binding references

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BindingKey {
    Index(usize),
    Name(String),
}

impl fmt::Display for BindingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingKey::Index(i) => write!(f, "${i}"),
            BindingKey::Name(n) => write!(f, "${{{n}}}"),
        }
    }
}

impl BindingKey {
    fn parse_braced(inner: &str) -> Option<Self> {
        if inner.is_empty() {
            return None;
        }
        if inner.bytes().all(|b| b.is_ascii_digit()) {
            return inner.parse().ok().map(BindingKey::Index);
        }
        let valid = inner.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
            && !inner.as_bytes()[0].is_ascii_digit();
        valid.then(|| BindingKey::Name(inner.to_string()))
    }
}

enum Piece<'a> {
    Lit(&'a str),
    Ref(BindingKey),
}

fn template_pieces(t: &str) -> Vec<Piece<'_>> {
    let bytes = t.as_bytes();
    let mut out = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'$' {
            i += 1;
            continue;
        }
        let (key, next) = match bytes.get(i + 1) {
            Some(b'$') => {
                out.push(Piece::Lit(&t[lit_start..i + 1]));
                i += 2;
                lit_start = i;
                continue;
            }
            Some(b'{') => match t[i + 2..].find('}') {
                Some(close) => {
                    let inner = &t[i + 2..i + 2 + close];
                    (BindingKey::parse_braced(inner), i + 3 + close)
                }
                None => (None, i + 1),
            },
            Some(b) if b.is_ascii_digit() => {
                let end = bytes[i + 1..]
                    .iter()
                    .position(|b| !b.is_ascii_digit())
                    .map_or(bytes.len(), |p| i + 1 + p);
                (t[i + 1..end].parse().ok().map(BindingKey::Index), end)
            }
            _ => (None, i + 1),
        };
        match key {
            Some(key) => {
                out.push(Piece::Lit(&t[lit_start..i]));
                out.push(Piece::Ref(key));
                i = next;
                lit_start = i;
            }
            None => i += 1,
        }
    }
    out.push(Piece::Lit(&t[lit_start..]));
    out
}

fn template_refs(t: &str) -> Vec<BindingKey> {
    template_pieces(t)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Ref(k) => Some(k),
            Piece::Lit(_) => None,
        })
        .collect()
}

/// Expands a template against `binding`.
pub fn interpolate(template: &str, binding: &Binding) -> Result<String, ApplyError> {
    let mut out = String::with_capacity(template.len());
    for piece in template_pieces(template) {
        match piece {
            Piece::Lit(s) => out.push_str(s),
            Piece::Ref(key) => match binding.get(&key) {
                Some(c) => out.push_str(&c.text),
                None => return Err(ApplyError::Unbound(key.to_string())),
            },
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Patterns

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Document {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capture {
    pub text: String,
    pub span: SourceSpan,
    pub document: Document,
}

/// Captures of one successful match, indexed by `$i`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    /// `None` for groups that did not participate in the match.
    pub captures: Vec<Option<Capture>>,
    pub names: BTreeMap<String, usize>,
    pub static_match: Option<SourceSpan>,
    pub dynamic_match: Option<SourceSpan>,
}

impl Binding {
    pub fn get(&self, key: &BindingKey) -> Option<&Capture> {
        let idx = match key {
            BindingKey::Index(i) => *i,
            BindingKey::Name(n) => *self.names.get(n)?,
        };
        self.captures.get(idx)?.as_ref()
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        let key = parse_key(key)?;
        self.get(&key).map(|c| c.text.as_str())
    }
}

/// Parses `$3`, `${3}`, `${name}` or `$name`.
fn parse_key(s: &str) -> Option<BindingKey> {
    let rest = s.strip_prefix('$')?;
    if let Some(inner) = rest.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
        return BindingKey::parse_braced(inner);
    }
    BindingKey::parse_braced(rest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardOp {
    Eq,
    Ne,
    VersionLt,
    VersionGt,
}

/// Extra condition on the captured values, evaluated after both regexes
/// matched. Lets a rule stop matching once its own repair is in place
/// (e.g. a retag to the version the log asked for).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub left: String,
    pub op: GuardOp,
    pub right: String,
}

impl Guard {
    fn holds(&self, binding: &Binding) -> bool {
        let (Ok(l), Ok(r)) = (interpolate(&self.left, binding), interpolate(&self.right, binding)) else {
            return false;
        };
        match self.op {
            GuardOp::Eq => l == r,
            GuardOp::Ne => l != r,
            GuardOp::VersionLt => compare_versions(&l, &r) == Ordering::Less,
            GuardOp::VersionGt => compare_versions(&l, &r) == Ordering::Greater,
        }
    }
}

/// Dotted version comparison: numeric segments compare as numbers, others
/// as strings, and a missing segment sorts first (`2.6` < `2.6.0`).
pub fn compare_versions(a: &str, b: &str) -> Ordering {
    let seg = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect()
    };
    let (sa, sb) = (seg(a), seg(b));
    for (x, y) in sa.iter().zip(&sb) {
        let ord = match (x.parse::<u64>(), y.parse::<u64>()) {
            (Ok(p), Ok(q)) => p.cmp(&q),
            _ => x.cmp(y),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    sa.len().cmp(&sb.len())
}

#[derive(Debug, Clone)]
pub struct Pattern {
    static_src: Option<String>,
    dynamic_src: Option<String>,
    guards: Vec<Guard>,
    static_re: Option<Regex>,
    dynamic_re: Option<Regex>,
    static_groups: usize,
    dynamic_groups: usize,
    names: BTreeMap<String, usize>,
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.static_src == other.static_src
            && self.dynamic_src == other.dynamic_src
            && self.guards == other.guards
    }
}

impl Pattern {
    /// Compiles a pattern. The error message is meant to be prefixed with
    /// the owning rule's id.
    pub fn new(static_re: Option<&str>, dynamic_re: Option<&str>, guards: Vec<Guard>) -> Result<Self, String> {
        if static_re.is_none() && dynamic_re.is_none() {
            return Err("a pattern needs static_re, dynamic_re, or both".into());
        }
        let compile = |side: &str, src: &str| {
            Regex::new(src).map_err(|e| format!("invalid {side} regex {src:?}: {e}"))
        };
        let static_c = static_re.map(|s| compile("static", s)).transpose()?;
        let dynamic_c = dynamic_re.map(|s| compile("dynamic", s)).transpose()?;
        let static_groups = static_c.as_ref().map_or(0, |r| r.captures_len() - 1);
        let dynamic_groups = dynamic_c.as_ref().map_or(0, |r| r.captures_len() - 1);

        let mut names = BTreeMap::new();
        for (re, offset) in [(&static_c, 0), (&dynamic_c, static_groups)] {
            let Some(re) = re else { continue };
            for (group, name) in re.capture_names().enumerate() {
                let Some(name) = name else { continue };
                if names.insert(name.to_string(), offset + group - 1).is_some() {
                    return Err(format!("group name {name:?} is used twice"));
                }
            }
        }
        let pattern = Self {
            static_src: static_re.map(str::to_string),
            dynamic_src: dynamic_re.map(str::to_string),
            guards,
            static_re: static_c,
            dynamic_re: dynamic_c,
            static_groups,
            dynamic_groups,
            names,
        };
        for g in &pattern.guards {
            for key in template_refs(&g.left).into_iter().chain(template_refs(&g.right)) {
                pattern.check_key(&key)?;
            }
        }
        Ok(pattern)
    }

    pub fn static_re(&self) -> Option<&str> {
        self.static_src.as_deref()
    }

    pub fn dynamic_re(&self) -> Option<&str> {
        self.dynamic_src.as_deref()
    }

    pub fn guards(&self) -> &[Guard] {
        &self.guards
    }

    pub fn group_count(&self) -> usize {
        self.static_groups + self.dynamic_groups
    }

    fn resolve(&self, key: &BindingKey) -> Option<usize> {
        match key {
            BindingKey::Index(i) => (*i < self.group_count()).then_some(*i),
            BindingKey::Name(n) => self.names.get(n).copied(),
        }
    }

    fn check_key(&self, key: &BindingKey) -> Result<usize, String> {
        self.resolve(key)
            .ok_or_else(|| format!("{key} does not name a capture group of the pattern"))
    }

    fn check_static_key(&self, key: &BindingKey) -> Result<(), String> {
        let idx = self.check_key(key)?;
        if idx >= self.static_groups {
            return Err(format!("{key} captures from the log; edits need a Dockerfile group"));
        }
        Ok(())
    }
}

fn first_captures<'t>(re: &Regex, text: &'t str) -> Option<fancy_regex::Captures<'t>> {
    match re.captures(text) {
        Ok(c) => c,
        Err(e) => {
            warn!("regex {} gave up: {e}", re.as_str());
            None
        }
    }
}

/// Matches `pattern` against a Dockerfile and an already normalized log.
/// Both present sides must match; the first match on each side binds.
pub fn match_rule(pattern: &Pattern, dockerfile_text: &str, log_text: &str) -> Option<Binding> {
    let mut binding = Binding {
        captures: Vec::with_capacity(pattern.group_count()),
        names: pattern.names.clone(),
        ..Binding::default()
    };
    for (re, text, doc) in [
        (&pattern.static_re, dockerfile_text, Document::Static),
        (&pattern.dynamic_re, log_text, Document::Dynamic),
    ] {
        let Some(re) = re else { continue };
        let caps = first_captures(re, text)?;
        let whole = caps.get(0).expect("group 0 always participates");
        let whole = SourceSpan::new(whole.start(), whole.end());
        match doc {
            Document::Static => binding.static_match = Some(whole),
            Document::Dynamic => binding.dynamic_match = Some(whole),
        }
        for g in 1..caps.len() {
            binding.captures.push(caps.get(g).map(|m| Capture {
                text: m.as_str().to_string(),
                span: SourceSpan::new(m.start(), m.end()),
                document: doc,
            }));
        }
    }
    pattern.guards.iter().all(|g| g.holds(&binding)).then_some(binding)
}

// ---------------------------------------------------------------------------
// Edit scripts

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Binding(BindingKey),
    /// An instruction of this kind: the one holding the static match when
    /// it has this kind, otherwise the first one in the file.
    Instruction(InstructionKind),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Binding(k) => k.fmt(f),
            Target::Instruction(kind) => kind.fmt(f),
        }
    }
}

impl TryFrom<String> for Target {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s.starts_with('$') {
            return parse_key(&s)
                .map(Target::Binding)
                .ok_or_else(|| format!("bad binding reference {s:?}"));
        }
        InstructionKind::parse_selector(&s)
            .map(Target::Instruction)
            .ok_or_else(|| format!("target {s:?} is neither a binding nor an instruction keyword"))
    }
}

impl From<Target> for String {
    fn from(t: Target) -> String {
        t.to_string()
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Target::try_from(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Replace,
    InsertAfter,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub op: OpKind,
    pub target: Target,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub text: String,
}

impl EditOp {
    pub fn replace(target: &str, text: &str) -> Self {
        Self::new(OpKind::Replace, target, text)
    }

    pub fn insert_after(target: &str, text: &str) -> Self {
        Self::new(OpKind::InsertAfter, target, text)
    }

    pub fn remove(target: &str) -> Self {
        Self::new(OpKind::Remove, target, "")
    }

    fn new(op: OpKind, target: &str, text: &str) -> Self {
        Self {
            op,
            target: Target::try_from(target.to_string()).expect("valid target"),
            text: text.into(),
        }
    }

    fn check(&self, pattern: &Pattern) -> Result<(), String> {
        if let Target::Binding(key) = &self.target {
            pattern.check_static_key(key)?;
        }
        if self.op == OpKind::Remove && !self.text.is_empty() {
            return Err("remove takes no text".into());
        }
        for key in template_refs(&self.text) {
            pattern.check_key(&key)?;
        }
        Ok(())
    }
}

fn containing_instruction(ast: &DockerfileAst, offset: usize) -> Option<&Instruction> {
    // The first instruction ending at or after `offset`: the one containing
    // it, or the next one when `offset` sits in leading whitespace.
    ast.instructions
        .iter()
        .find(|i| i.kind != InstructionKind::Comment && offset <= i.span.end)
}

fn resolve_instruction<'a>(
    ast: &'a DockerfileAst,
    kind: InstructionKind,
    binding: &Binding,
) -> Result<&'a Instruction, ApplyError> {
    binding
        .static_match
        .and_then(|m| containing_instruction(ast, m.start))
        .filter(|i| i.kind == kind)
        .or_else(|| ast.first_of(kind))
        .ok_or(ApplyError::NoInstruction(kind))
}

fn static_capture<'a>(binding: &'a Binding, key: &BindingKey) -> Result<&'a Capture, ApplyError> {
    let c = binding.get(key).ok_or_else(|| ApplyError::Unbound(key.to_string()))?;
    if c.document != Document::Static {
        return Err(ApplyError::NotStatic(key.to_string()));
    }
    Ok(c)
}

fn compile_op(ast: &DockerfileAst, op: &EditOp, binding: &Binding) -> Result<SpanEdit, ApplyError> {
    let text = interpolate(&op.text, binding)?;
    let span = match (&op.target, op.op) {
        (Target::Binding(key), OpKind::Replace | OpKind::Remove) => static_capture(binding, key)?.span,
        (Target::Binding(key), OpKind::InsertAfter) => {
            let at = static_capture(binding, key)?.span.start;
            let instr = containing_instruction(ast, at).ok_or_else(|| ApplyError::Unbound(key.to_string()))?;
            SourceSpan::empty_at(instr.span.end)
        }
        (Target::Instruction(kind), OpKind::Replace) => resolve_instruction(ast, *kind, binding)?.span,
        (Target::Instruction(kind), OpKind::Remove) => {
            // Take the line terminator along so no blank line is left.
            let span = resolve_instruction(ast, *kind, binding)?.span;
            let src = ast.source();
            let mut end = span.end;
            while end < src.len() && matches!(src[end], b' ' | b'\t' | b'\r') {
                end += 1;
            }
            if end < src.len() && src[end] == b'\n' {
                end += 1;
            } else {
                end = span.end;
            }
            SourceSpan::new(span.start, end)
        }
        (Target::Instruction(kind), OpKind::InsertAfter) => {
            SourceSpan::empty_at(resolve_instruction(ast, *kind, binding)?.span.end)
        }
    };
    Ok(SpanEdit::new(span, text))
}

/// Applies one edit script. `binding` must come from matching the same
/// text. Insertions land at the end of the anchor instruction, so their
/// text normally starts with a newline.
pub fn apply_solution(dockerfile_text: &str, solution: &[EditOp], binding: &Binding) -> Result<String, ApplyError> {
    if solution.is_empty() {
        return Ok(dockerfile_text.to_string());
    }
    let ast = parse(dockerfile_text);
    let edits = solution
        .iter()
        .map(|op| compile_op(&ast, op, binding))
        .collect::<Result<Vec<_>, _>>()?;
    let bytes = splice(&ast, &edits)?;
    Ok(String::from_utf8(bytes).expect("splicing UTF-8 at capture boundaries keeps UTF-8"))
}

// ---------------------------------------------------------------------------
// Rules and the database

/// A (Dockerfile, log) pair the rule must match; checked when loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub dockerfile: String,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairSpec {
    pub id: String,
    #[serde(default)]
    pub static_re: Option<String>,
    #[serde(default)]
    pub dynamic_re: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guards: Vec<Guard>,
    pub solutions: Vec<Vec<EditOp>>,
    #[serde(default)]
    pub src: Option<String>,
    #[serde(default)]
    pub notes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_cluster: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixtures: Vec<Fixture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionSpec {
    pub id: String,
    #[serde(default)]
    pub static_re: Option<String>,
    #[serde(default)]
    pub dynamic_re: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub guards: Vec<Guard>,
    pub message: String,
    /// Instruction kind the advice is about, for dynamic-only patterns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_cluster: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixtures: Vec<Fixture>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairRule {
    pub id: String,
    pub pattern: Pattern,
    pub solutions: Vec<Vec<EditOp>>,
    pub src: Option<String>,
    pub notes: String,
    pub parent_cluster: Option<i64>,
    pub fixtures: Vec<Fixture>,
}

impl RepairRule {
    pub fn from_spec(spec: RepairSpec) -> Result<Self, RuleError> {
        let id = spec.id.clone();
        if id.trim().is_empty() {
            return Err(invalid(&id, "empty rule id"));
        }
        let pattern = Pattern::new(spec.static_re.as_deref(), spec.dynamic_re.as_deref(), spec.guards)
            .map_err(|m| invalid(&id, m))?;
        if spec.solutions.is_empty() {
            return Err(invalid(&id, "a repair needs at least one solution"));
        }
        for (n, solution) in spec.solutions.iter().enumerate() {
            for op in solution {
                op.check(&pattern).map_err(|m| invalid(&id, format!("solution {}: {m}", n + 1)))?;
            }
        }
        let rule = Self {
            id,
            pattern,
            solutions: spec.solutions,
            src: spec.src,
            notes: spec.notes,
            parent_cluster: spec.parent_cluster,
            fixtures: spec.fixtures,
        };
        rule.check_fixtures()?;
        Ok(rule)
    }

    pub fn to_spec(&self) -> RepairSpec {
        RepairSpec {
            id: self.id.clone(),
            static_re: self.pattern.static_src.clone(),
            dynamic_re: self.pattern.dynamic_src.clone(),
            guards: self.pattern.guards.clone(),
            solutions: self.solutions.clone(),
            src: self.src.clone(),
            notes: self.notes.clone(),
            parent_cluster: self.parent_cluster,
            fixtures: self.fixtures.clone(),
        }
    }

    /// Every fixture must match, every solution must apply to it, and the
    /// patched file must no longer match.
    fn check_fixtures(&self) -> Result<(), RuleError> {
        for (f, fixture) in self.fixtures.iter().enumerate() {
            let log = normalize(&fixture.log);
            let binding = match_rule(&self.pattern, &fixture.dockerfile, &log)
                .ok_or_else(|| invalid(&self.id, format!("fixture {} does not match", f + 1)))?;
            for (s, solution) in self.solutions.iter().enumerate() {
                let patched = apply_solution(&fixture.dockerfile, solution, &binding).map_err(|e| {
                    invalid(&self.id, format!("solution {} fails on fixture {}: {e}", s + 1, f + 1))
                })?;
                if match_rule(&self.pattern, &patched, &log).is_some() {
                    return Err(invalid(
                        &self.id,
                        format!("solution {} leaves fixture {} matching the rule", s + 1, f + 1),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Patched variants for a matched document, one per solution that
    /// applies. Failing solutions are logged and skipped.
    pub fn variants(&self, dockerfile_text: &str, binding: &Binding) -> Vec<Variant> {
        self.solutions
            .iter()
            .enumerate()
            .filter_map(|(i, solution)| match apply_solution(dockerfile_text, solution, binding) {
                Ok(text) => Some(Variant {
                    rule_id: self.id.clone(),
                    solution_index: i,
                    text,
                }),
                Err(e) => {
                    warn!("rule {} solution {} does not apply: {e}", self.id, i + 1);
                    None
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub id: String,
    pub pattern: Pattern,
    pub message: String,
    pub instruction_kind: Option<InstructionKind>,
    pub parent_cluster: Option<i64>,
    pub fixtures: Vec<Fixture>,
}

impl Suggestion {
    pub fn from_spec(spec: SuggestionSpec) -> Result<Self, RuleError> {
        let id = spec.id.clone();
        if id.trim().is_empty() {
            return Err(invalid(&id, "empty rule id"));
        }
        let pattern = Pattern::new(spec.static_re.as_deref(), spec.dynamic_re.as_deref(), spec.guards)
            .map_err(|m| invalid(&id, m))?;
        if spec.message.trim().is_empty() {
            return Err(invalid(&id, "empty suggestion message"));
        }
        for key in template_refs(&spec.message) {
            pattern.check_key(&key).map_err(|m| invalid(&id, m))?;
        }
        let instruction_kind = spec
            .instruction_kind
            .as_deref()
            .map(|k| InstructionKind::parse_selector(k).ok_or_else(|| invalid(&id, format!("unknown instruction kind {k:?}"))))
            .transpose()?;
        let s = Self {
            id,
            pattern,
            message: spec.message,
            instruction_kind,
            parent_cluster: spec.parent_cluster,
            fixtures: spec.fixtures,
        };
        for (f, fixture) in s.fixtures.iter().enumerate() {
            let binding = match_rule(&s.pattern, &fixture.dockerfile, &normalize(&fixture.log))
                .ok_or_else(|| invalid(&s.id, format!("fixture {} does not match", f + 1)))?;
            s.render(&binding).map_err(|e| invalid(&s.id, e.to_string()))?;
        }
        Ok(s)
    }

    pub fn to_spec(&self) -> SuggestionSpec {
        SuggestionSpec {
            id: self.id.clone(),
            static_re: self.pattern.static_src.clone(),
            dynamic_re: self.pattern.dynamic_src.clone(),
            guards: self.pattern.guards.clone(),
            message: self.message.clone(),
            instruction_kind: self.instruction_kind.map(|k| k.as_str().to_string()),
            parent_cluster: self.parent_cluster,
            fixtures: self.fixtures.clone(),
        }
    }

    pub fn render(&self, binding: &Binding) -> Result<String, ApplyError> {
        interpolate(&self.message, binding)
    }
}

/// On-disk rule file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    #[serde(default)]
    pub version: u64,
    #[serde(default)]
    pub repairs: Vec<RepairSpec>,
    #[serde(default)]
    pub suggestions: Vec<SuggestionSpec>,
}

/// Ordered repairs and suggestions; order is match precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleDb {
    pub version: u64,
    pub repairs: Vec<RepairRule>,
    pub suggestions: Vec<Suggestion>,
}

impl RuleDb {
    /// The rules bundled with the crate.
    pub fn shipped() -> Self {
        let file: RuleFile = serde_json::from_str(SHIPPED_RULES).expect("bundled rule file is valid JSON");
        Self::from_file(file).expect("bundled rules compile")
    }

    pub fn from_file(file: RuleFile) -> Result<Self, RuleError> {
        let mut seen = HashSet::new();
        let ids = file.repairs.iter().map(|r| &r.id).chain(file.suggestions.iter().map(|s| &s.id));
        for id in ids {
            if !seen.insert(id.clone()) {
                return Err(RuleError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            version: file.version,
            repairs: file.repairs.into_iter().map(RepairRule::from_spec).collect::<Result<_, _>>()?,
            suggestions: file
                .suggestions
                .into_iter()
                .map(Suggestion::from_spec)
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn to_file(&self) -> RuleFile {
        RuleFile {
            version: self.version,
            repairs: self.repairs.iter().map(RepairRule::to_spec).collect(),
            suggestions: self.suggestions.iter().map(Suggestion::to_spec).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        let file = serde_json::from_str(text).map_err(|e| RuleError::Format {
            path: PathBuf::from("<memory>"),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("rule files always serialize")
    }

    pub fn len(&self) -> usize {
        self.repairs.len() + self.suggestions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.repairs.iter().any(|r| r.id == id) || self.suggestions.iter().any(|s| s.id == id)
    }

    pub fn repair(&self, id: &str) -> Option<&RepairRule> {
        self.repairs.iter().find(|r| r.id == id)
    }

    pub fn suggestion(&self, id: &str) -> Option<&Suggestion> {
        self.suggestions.iter().find(|s| s.id == id)
    }

    /// Replaces the repair with the same id in place, or appends it.
    /// Fails when the id belongs to a suggestion.
    pub fn upsert_repair(&mut self, rule: RepairRule) -> Result<(), RuleError> {
        if self.suggestion(&rule.id).is_some() {
            return Err(RuleError::DuplicateId(rule.id));
        }
        match self.repairs.iter_mut().find(|r| r.id == rule.id) {
            Some(slot) => *slot = rule,
            None => self.repairs.push(rule),
        }
        Ok(())
    }

    pub fn upsert_suggestion(&mut self, s: Suggestion) -> Result<(), RuleError> {
        if self.repair(&s.id).is_some() {
            return Err(RuleError::DuplicateId(s.id));
        }
        match self.suggestions.iter_mut().find(|x| x.id == s.id) {
            Some(slot) => *slot = s,
            None => self.suggestions.push(s),
        }
        Ok(())
    }
}

/// Reads a rule file. An empty (or whitespace-only) file is an empty
/// database.
pub fn load_rules(path: impl AsRef<Path>) -> Result<RuleDb, RuleError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if text.trim().is_empty() {
        return Ok(RuleDb::default());
    }
    let file: RuleFile = serde_json::from_str(&text).map_err(|e| RuleError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    RuleDb::from_file(file)
}

/// Bumps `db.version` and writes the database atomically (temporary file
/// in the same directory, then rename). Returns the new version.
pub fn save_rules(db: &mut RuleDb, path: impl AsRef<Path>) -> Result<u64, RuleError> {
    let path = path.as_ref();
    let io_err = |source| RuleError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut next = db.clone();
    next.version += 1;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(next.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(e));
    }
    db.version = next.version;
    Ok(db.version)
}

// ---------------------------------------------------------------------------
// Repair

/// The log text rules are matched against: stdout then stderr, normalized.
pub fn match_log(record: &BuildRecord) -> String {
    normalize(&format!("{}\n{}", record.stdout_log, record.stderr_log))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub rule_id: String,
    pub solution_index: usize,
    pub text: String,
}

impl Variant {
    /// Unified diff from `original` to this variant, labelled with `name`.
    pub fn diff(&self, original: &str, name: &str) -> String {
        unified_diff(original, &self.text, name)
    }
}

pub fn unified_diff(old: &str, new: &str, name: &str) -> String {
    similar::TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{name}"), &format!("b/{name}"))
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RepairOutcome {
    Repaired {
        rule_id: String,
        binding: Binding,
        variants: Vec<Variant>,
    },
    Suggested {
        suggestion_id: String,
        binding: Binding,
        message: String,
    },
    SearchFallback {
        query: Option<SearchQuery>,
        results: Vec<SearchResult>,
        /// Set when the search backend could not be reached.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

/// Which of the three outcomes a record gets, without running a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Repaired,
    Suggested,
    Unknown,
}

impl RepairOutcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            RepairOutcome::Repaired { .. } => OutcomeKind::Repaired,
            RepairOutcome::Suggested { .. } => OutcomeKind::Suggested,
            RepairOutcome::SearchFallback { .. } => OutcomeKind::Unknown,
        }
    }
}

enum Verdict<'a> {
    Repaired(&'a RepairRule, Binding, Vec<Variant>),
    Suggested(&'a Suggestion, Binding, String),
    Unmatched,
}

fn evaluate<'a>(dockerfile: &str, log: &str, db: &'a RuleDb) -> Verdict<'a> {
    for rule in &db.repairs {
        if let Some(binding) = match_rule(&rule.pattern, dockerfile, log) {
            let variants = rule.variants(dockerfile, &binding);
            if !variants.is_empty() {
                return Verdict::Repaired(rule, binding, variants);
            }
        }
    }
    for s in &db.suggestions {
        if let Some(binding) = match_rule(&s.pattern, dockerfile, log) {
            match s.render(&binding) {
                Ok(message) if !message.trim().is_empty() => return Verdict::Suggested(s, binding, message),
                Ok(_) => warn!("suggestion {} rendered empty", s.id),
                Err(e) => warn!("suggestion {} does not render: {e}", s.id),
            }
        }
    }
    Verdict::Unmatched
}

fn ensure_failure(record: &BuildRecord) -> Result<(), RepairError> {
    if record.outcome != BuildOutcome::Failure {
        return Err(RepairError::NotFailure {
            id: record.record_id.clone(),
            outcome: record.outcome,
        });
    }
    Ok(())
}

/// Outcome kind only; no search is issued for unmatched records.
pub fn classify(record: &BuildRecord, db: &RuleDb) -> Result<OutcomeKind, RepairError> {
    ensure_failure(record)?;
    Ok(match evaluate(&record.dockerfile_text, &match_log(record), db) {
        Verdict::Repaired(..) => OutcomeKind::Repaired,
        Verdict::Suggested(..) => OutcomeKind::Suggested,
        Verdict::Unmatched => OutcomeKind::Unknown,
    })
}

/// Tries repairs in order, then suggestions, then falls back to a search
/// for community answers (skipped when `searcher` is `None`).
pub fn repair(record: &BuildRecord, db: &RuleDb, searcher: Option<&Searcher>) -> Result<RepairOutcome, RepairError> {
    ensure_failure(record)?;
    let log = match_log(record);
    Ok(match evaluate(&record.dockerfile_text, &log, db) {
        Verdict::Repaired(rule, binding, variants) => RepairOutcome::Repaired {
            rule_id: rule.id.clone(),
            binding,
            variants,
        },
        Verdict::Suggested(s, binding, message) => RepairOutcome::Suggested {
            suggestion_id: s.id.clone(),
            binding,
            message,
        },
        Verdict::Unmatched => {
            let raw = format!("{}\n{}", record.stdout_log, record.stderr_log);
            match searcher {
                None => RepairOutcome::SearchFallback {
                    query: SearchQuery::from_log(&raw),
                    results: Vec::new(),
                    error: None,
                },
                Some(searcher) => match searcher.leads(&raw) {
                    Ok((query, results)) => RepairOutcome::SearchFallback {
                        query,
                        results,
                        error: None,
                    },
                    Err(e) => RepairOutcome::SearchFallback {
                        query: SearchQuery::from_log(&raw),
                        results: Vec::new(),
                        error: Some(e.to_string()),
                    },
                },
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DryRunReport {
    pub matched_ids: Vec<String>,
    pub total: usize,
    /// `None` for an empty record set.
    pub fraction: Option<f64>,
}

/// Evaluates a pattern over records without editing anything. Only failing
/// records can match; the denominator is every record given.
pub fn dry_run<'a>(pattern: &Pattern, records: impl IntoIterator<Item = &'a BuildRecord>) -> DryRunReport {
    let mut matched_ids = Vec::new();
    let mut total = 0;
    for r in records {
        total += 1;
        if r.is_failure() && match_rule(pattern, &r.dockerfile_text, &match_log(r)).is_some() {
            matched_ids.push(r.record_id.clone());
        }
    }
    DryRunReport {
        fraction: (total > 0).then(|| matched_ids.len() as f64 / total as f64),
        matched_ids,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::record;
    use crate::search::{Allowlist, RawHit, SearchBackend, SearchError};

    const UBUNTU_DF: &str = "FROM ubuntu:latest\nRUN apt-get update\nRUN apt-get -y install python-pip\n";
    const UBUNTU_LOG: &str = "Step 3/3 : RUN apt-get -y install python-pip\nE: Unable to locate package python-pip\n";
    const RUBY_DF: &str = "FROM ruby:2.6.3\nWORKDIR /app\nCOPY . .\nRUN bundle install # <-- Gemfile depends on ruby 2.6.5!\n";
    const RUBY_LOG: &str = "Your Ruby version is 2.6.3, but your Gemfile specified 2.6.5";

    fn failing(id: &str, dockerfile: &str, stderr: &str) -> BuildRecord {
        let mut r = record(id, BuildOutcome::Failure);
        r.dockerfile_text = dockerfile.into();
        r.stderr_log = stderr.into();
        r
    }

    fn ubuntu_pattern() -> Pattern {
        Pattern::new(
            Some(r"(?m)FROM ubuntu(:latest|:20\.04|)[ \t]*$"),
            Some("unable to locate package (.*)"),
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn template_parsing() {
        let b = match_rule(&ubuntu_pattern(), "FROM ubuntu:latest", "e: unable to locate package curl").unwrap();
        let named = Pattern::new(None, Some("(?P<pkg>\\S+) missing"), vec![]).unwrap();
        let nb = match_rule(&named, "", "git missing").unwrap();
        assert_eq!(interpolate("pin $0 for $1", &b).unwrap(), "pin :latest for curl");
        assert_eq!(interpolate("${1}x $$1 $PATH $ {", &b).unwrap(), "curlx $1 $PATH $ {");
        assert_eq!(interpolate("install ${pkg}", &nb).unwrap(), "install git");
        assert_eq!(interpolate("$7", &b), Err(ApplyError::Unbound("$7".into())));
    }

    #[test]
    fn ubuntu_binding() {
        let b = match_rule(&ubuntu_pattern(), UBUNTU_DF, &normalize(UBUNTU_LOG)).unwrap();
        assert_eq!(b.text("$0"), Some(":latest"));
        assert_eq!(b.text("$1"), Some("python-pip"));
        assert_eq!(b.get(&BindingKey::Index(0)).unwrap().span, SourceSpan::new(11, 18));
        assert_eq!(b.get(&BindingKey::Index(1)).unwrap().document, Document::Dynamic);
        let pinned = UBUNTU_DF.replace(":latest", ":18.04");
        assert!(match_rule(&ubuntu_pattern(), &pinned, &normalize(UBUNTU_LOG)).is_none());
        assert!(match_rule(&ubuntu_pattern(), UBUNTU_DF, "all good").is_none());
    }

    #[test]
    fn conjunction_of_present_sides() {
        let only_static = Pattern::new(Some("FROM"), None, vec![]).unwrap();
        assert!(match_rule(&only_static, "FROM x", "").is_some());
        assert!(match_rule(&only_static, "RUN x", "from").is_none());
        assert!(Pattern::new(None, None, vec![]).is_err());
        assert!(Pattern::new(Some("(?P<a>x)"), Some("(?P<a>y)"), vec![]).is_err());
    }

    #[test]
    fn apply_examples() {
        let b = match_rule(&ubuntu_pattern(), UBUNTU_DF, &normalize(UBUNTU_LOG)).unwrap();
        let out = apply_solution(UBUNTU_DF, &[EditOp::replace("$0", ":18.04")], &b).unwrap();
        assert!(out.starts_with("FROM ubuntu:18.04\n"));
        assert_eq!(apply_solution(UBUNTU_DF, &[], &b).unwrap(), UBUNTU_DF);
        let out = apply_solution(UBUNTU_DF, &[EditOp::insert_after("$0", "\nARG X=1")], &b).unwrap();
        assert!(out.starts_with("FROM ubuntu:latest\nARG X=1\nRUN"));
        let err = apply_solution(UBUNTU_DF, &[EditOp::replace("$1", "x")], &b).unwrap_err();
        assert_eq!(err, ApplyError::NotStatic("$1".into()));
        let clash = [EditOp::replace("$0", ":a"), EditOp::replace("$0", ":b")];
        assert!(matches!(apply_solution(UBUNTU_DF, &clash, &b), Err(ApplyError::Splice(_))));
    }

    #[test]
    fn instruction_targets() {
        let p = Pattern::new(Some("apt-get update"), None, vec![]).unwrap();
        let b = match_rule(&p, UBUNTU_DF, "").unwrap();
        let out = apply_solution(UBUNTU_DF, &[EditOp::remove("RUN")], &b).unwrap();
        assert_eq!(out, "FROM ubuntu:latest\nRUN apt-get -y install python-pip\n");
        let out = apply_solution(UBUNTU_DF, &[EditOp::replace("FROM", "FROM debian")], &b).unwrap();
        assert!(out.starts_with("FROM debian\nRUN apt-get update\n"));
        let err = apply_solution(UBUNTU_DF, &[EditOp::insert_after("USER", "x")], &b).unwrap_err();
        assert_eq!(err, ApplyError::NoInstruction(InstructionKind::User));
    }

    #[test]
    fn version_ordering() {
        assert_eq!(compare_versions("2.6.3", "2.6.5"), Ordering::Less);
        assert_eq!(compare_versions("2.10", "2.9"), Ordering::Greater);
        assert_eq!(compare_versions("2.6", "2.6.0"), Ordering::Less);
        assert_eq!(compare_versions("3.0.0", "3.0.0"), Ordering::Equal);
    }

    #[test]
    fn shipped_rules_load_and_check_their_fixtures() {
        let db = RuleDb::shipped();
        let ids: Vec<_> = db.repairs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["r5", "r6", "r1", "r7", "r8", "r8-apk"]);
        assert!(db.suggestions.len() >= 10);
        for r in &db.repairs {
            assert!(!r.fixtures.is_empty(), "{} ships without a fixture", r.id);
        }
    }

    #[test]
    fn ubuntu_rule_two_variants() {
        let db = RuleDb::shipped();
        let out = repair(&failing("u", UBUNTU_DF, UBUNTU_LOG), &db, None).unwrap();
        let RepairOutcome::Repaired { rule_id, variants, .. } = out else {
            panic!("expected a repair, got {out:?}");
        };
        assert_eq!(rule_id, "r5");
        assert_eq!(variants.len(), 2);
        assert!(variants[0].text.starts_with("FROM ubuntu:18.04\n"));
        assert!(variants[1].text.starts_with("FROM ubuntu:latest\nARG DEBIAN_FRONTEND=noninteractive\n"));
    }

    #[test]
    fn ruby_retag() {
        let db = RuleDb::shipped();
        let out = repair(&failing("r", RUBY_DF, RUBY_LOG), &db, None).unwrap();
        let RepairOutcome::Repaired { rule_id, variants, binding } = out else {
            panic!("expected a repair, got {out:?}");
        };
        assert_eq!(rule_id, "r6");
        assert_eq!(binding.text("${current}"), Some("2.6.3"));
        assert_eq!(binding.text("${wanted}"), Some("2.6.5"));
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0].text.lines().next(), Some("FROM ruby:2.6.5"));
    }

    #[test]
    fn precedence_and_fallback() {
        let db = RuleDb::shipped();
        let npm = failing(
            "n",
            "FROM node:14\nCOPY . .\nRUN npm install && npm run build\n",
            "npm ERR! code ELIFECYCLE\nnpm ERR! app@1.0.0 build: `react-scripts build`",
        );
        match repair(&npm, &db, None).unwrap() {
            RepairOutcome::Suggested { message, .. } => assert!(message.starts_with("NPM build error")),
            other => panic!("{other:?}"),
        }
        struct Stub;
        impl SearchBackend for Stub {
            fn search(&self, _: &str) -> Result<Vec<RawHit>, SearchError> {
                Ok((0..9)
                    .map(|i| RawHit {
                        url: format!("https://stackoverflow.com/q/{i}"),
                        title: format!("q{i}"),
                    })
                    .collect())
            }
        }
        let searcher = Searcher::new(Box::new(Stub), Allowlist::default());
        let odd = failing("o", "FROM scratch\nCOPY x /\n", "something odd: failed to frobnicate");
        match repair(&odd, &db, Some(&searcher)).unwrap() {
            RepairOutcome::SearchFallback { results, query, .. } => {
                assert_eq!(results.len(), 5);
                assert!(query.unwrap().keywords.contains(&"frobnicate".to_string()));
            }
            other => panic!("{other:?}"),
        }
        let ok = record("s", BuildOutcome::Success);
        assert!(matches!(repair(&ok, &db, None), Err(RepairError::NotFailure { .. })));
    }

    #[test]
    fn dry_run_fractions() {
        let narrow = Pattern::new(Some("FROM ubuntu"), Some("unable to locate package python-pip"), vec![]).unwrap();
        let general = ubuntu_pattern();
        let records = vec![
            failing("a", UBUNTU_DF, UBUNTU_LOG),
            failing("b", UBUNTU_DF, &UBUNTU_LOG.replace("python-pip", "curl")),
            failing("c", UBUNTU_DF, "nothing useful"),
            record("d", BuildOutcome::Success),
        ];
        let n = dry_run(&narrow, &records);
        let g = dry_run(&general, &records);
        assert_eq!(n.matched_ids, ["a"]);
        assert_eq!(g.matched_ids, ["a", "b"]);
        assert_eq!(g.fraction, Some(0.5));
        assert!(n.fraction < g.fraction);
        assert_eq!(dry_run(&general, &[]).fraction, None);
    }

    #[test]
    fn load_errors_name_the_rule() {
        let text = r#"{"repairs":[{"id":"r9","static_re":"FROM (","solutions":[[]]}]}"#;
        let err = RuleDb::from_json(text).unwrap_err();
        assert!(err.to_string().contains("r9"), "{err}");
        let dup = r#"{"repairs":[{"id":"a","static_re":"x","solutions":[[]]}],
                      "suggestions":[{"id":"a","dynamic_re":"y","message":"m"}]}"#;
        assert!(matches!(RuleDb::from_json(dup), Err(RuleError::DuplicateId(id)) if id == "a"));
        let bad_ref = r#"{"repairs":[{"id":"q","static_re":"(x)","dynamic_re":"(y)",
                          "solutions":[[{"op":"replace","target":"$1","text":"z"}]]}]}"#;
        assert!(RuleDb::from_json(bad_ref).unwrap_err().to_string().contains("from the log"));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.json");
        fs::write(&path, "").unwrap();
        assert!(load_rules(&path).unwrap().is_empty());
        let mut db = RuleDb::shipped();
        let before = db.version;
        assert_eq!(save_rules(&mut db, &path).unwrap(), before + 1);
        assert_eq!(load_rules(&path).unwrap(), db);
        save_rules(&mut db, &path).unwrap();
        assert_eq!(load_rules(&path).unwrap().version, before + 2);
    }
}
