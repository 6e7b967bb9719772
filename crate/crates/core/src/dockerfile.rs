//! Span-preserving Dockerfile instruction AST.
//!
//! Parsing is total: every byte string yields an AST, and serializing the
//! AST returns the input byte for byte. Instructions are single-level
//! (keyword + raw arguments); shell text inside `RUN` is not interpreted.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open byte range `[start, end)` into a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn empty_at(offset: usize) -> Self {
        Self::new(offset, offset)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// True when the spans share at least one byte.
    pub fn overlaps(&self, other: &SourceSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Like [`overlaps`](Self::overlaps), but an empty span also intersects
    /// a range that contains its offset (end inclusive).
    pub fn touches(&self, other: &SourceSpan) -> bool {
        if self.is_empty() {
            other.start <= self.start && self.start <= other.end
        } else if other.is_empty() {
            self.start <= other.start && other.start <= self.end
        } else {
            self.overlaps(other)
        }
    }
}

macro_rules! keywords {
    ($($variant:ident => $kw:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "UPPERCASE")]
        pub enum InstructionKind {
            $($variant,)*
            Comment,
            Unknown,
        }

        impl InstructionKind {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(InstructionKind::$variant => $kw,)*
                    InstructionKind::Comment => "COMMENT",
                    InstructionKind::Unknown => "UNKNOWN",
                }
            }

            /// Case-insensitive keyword lookup. `COMMENT` and `UNKNOWN` are
            /// not keywords and never match.
            pub fn from_keyword(word: &[u8]) -> Option<Self> {
                $(if word.eq_ignore_ascii_case($kw.as_bytes()) {
                    return Some(InstructionKind::$variant);
                })*
                None
            }
        }
    };
}

keywords! {
    Add => "ADD",
    Arg => "ARG",
    Cmd => "CMD",
    Copy => "COPY",
    Entrypoint => "ENTRYPOINT",
    Env => "ENV",
    Expose => "EXPOSE",
    From => "FROM",
    Healthcheck => "HEALTHCHECK",
    Label => "LABEL",
    Maintainer => "MAINTAINER",
    Onbuild => "ONBUILD",
    Run => "RUN",
    Shell => "SHELL",
    Stopsignal => "STOPSIGNAL",
    User => "USER",
    Volume => "VOLUME",
    Workdir => "WORKDIR",
}

impl InstructionKind {
    /// Parses either a keyword or one of the pseudo kinds.
    pub fn parse_selector(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "COMMENT" => Some(InstructionKind::Comment),
            "UNKNOWN" => Some(InstructionKind::Unknown),
            other => Self::from_keyword(other.as_bytes()),
        }
    }
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub kind: InstructionKind,
    /// Everything after the keyword, with line continuations removed.
    /// For comments this is the text after `#`. Raw bytes: invalid UTF-8
    /// in the source is carried through untouched.
    pub args_raw: Vec<u8>,
    /// Full physical extent, continuation lines included, line terminator
    /// of the last line excluded.
    pub span: SourceSpan,
}

impl Instruction {
    pub fn args(&self) -> Cow<'_, str> {
        String::from_utf8_lossy(&self.args_raw)
    }

    /// Arguments with every whitespace run collapsed to one space.
    pub fn normalized_args(&self) -> String {
        self.args().split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DockerfileAst {
    source: Vec<u8>,
    pub instructions: Vec<Instruction>,
}

impl DockerfileAst {
    pub fn source(&self) -> &[u8] {
        &self.source
    }

    pub fn source_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.source).ok()
    }

    pub fn text(&self, span: SourceSpan) -> &[u8] {
        &self.source[span.start..span.end]
    }

    /// The instruction whose span contains `offset` (end inclusive).
    pub fn instruction_at(&self, offset: usize) -> Option<&Instruction> {
        self.instructions
            .iter()
            .find(|i| i.span.start <= offset && offset <= i.span.end)
    }

    pub fn first_of(&self, kind: InstructionKind) -> Option<&Instruction> {
        self.instructions.iter().find(|i| i.kind == kind)
    }

    pub fn last_of(&self, kind: InstructionKind) -> Option<&Instruction> {
        self.instructions.iter().rev().find(|i| i.kind == kind)
    }
}

pub fn parse(text: &str) -> DockerfileAst {
    parse_bytes(text.as_bytes())
}

/// One physical line; `[start, content_end)` excludes the terminator.
#[derive(Clone, Copy)]
struct Line {
    start: usize,
    content_end: usize,
}

fn split_lines(src: &[u8]) -> Vec<Line> {
    let mut lines = Vec::new();
    let mut start = 0;
    while start < src.len() {
        let (content_end, end) = match src[start..].iter().position(|&b| b == b'\n') {
            Some(p) => (start + p, start + p + 1),
            None => (src.len(), src.len()),
        };
        let content_end = if content_end > start && src[content_end - 1] == b'\r' {
            content_end - 1
        } else {
            content_end
        };
        lines.push(Line { start, content_end });
        start = end;
    }
    lines
}

fn is_blank(b: u8) -> bool {
    b == b' ' || b == b'\t' || b == b'\r' || b == b'\x0b' || b == b'\x0c'
}

fn trim_start(src: &[u8], mut from: usize, to: usize) -> usize {
    while from < to && is_blank(src[from]) {
        from += 1;
    }
    from
}

fn trim_end(src: &[u8], from: usize, mut to: usize) -> usize {
    while to > from && is_blank(src[to - 1]) {
        to -= 1;
    }
    to
}

fn line_is_blank(src: &[u8], l: Line) -> bool {
    trim_start(src, l.start, l.content_end) == l.content_end
}

fn line_is_comment(src: &[u8], l: Line) -> bool {
    let s = trim_start(src, l.start, l.content_end);
    s < l.content_end && src[s] == b'#'
}

/// Content end of a line with a trailing continuation backslash removed,
/// or `None` when the line does not continue.
fn continuation_cut(src: &[u8], l: Line) -> Option<usize> {
    let end = trim_end(src, l.start, l.content_end);
    (end > l.start && src[end - 1] == b'\\').then_some(end - 1)
}

pub fn parse_bytes(src: &[u8]) -> DockerfileAst {
    let lines = split_lines(src);
    let mut instructions = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line_is_blank(src, line) {
            i += 1;
            continue;
        }
        let start = trim_start(src, line.start, line.content_end);
        if src[start] == b'#' {
            let end = trim_end(src, start, line.content_end);
            instructions.push(Instruction {
                kind: InstructionKind::Comment,
                args_raw: src[start + 1..end].to_vec(),
                span: SourceSpan::new(start, end),
            });
            i += 1;
            continue;
        }

        // Gather the logical line. Blank and comment lines inside a
        // continuation are skipped, but only if real content follows.
        let mut parts = Vec::new();
        let mut last = i;
        let mut cur = i;
        loop {
            let l = lines[cur];
            match continuation_cut(src, l) {
                Some(cut) => {
                    parts.push((if cur == i { start } else { l.start }, cut));
                    let mut next = cur + 1;
                    while next < lines.len()
                        && (line_is_blank(src, lines[next]) || line_is_comment(src, lines[next]))
                    {
                        next += 1;
                    }
                    if next >= lines.len() {
                        break;
                    }
                    cur = next;
                    last = next;
                }
                None => {
                    parts.push((if cur == i { start } else { l.start }, l.content_end));
                    break;
                }
            }
        }
        let end = if last == i {
            trim_end(src, start, lines[last].content_end)
        } else {
            trim_end(src, lines[last].start, lines[last].content_end).max(lines[last].start)
        };
        let end = end.max(start);

        let mut logical: Vec<u8> = Vec::new();
        for (a, b) in parts {
            logical.extend_from_slice(&src[a..b]);
        }
        let kw_len = logical
            .iter()
            .position(|&b| is_blank(b))
            .unwrap_or(logical.len());
        let kind = InstructionKind::from_keyword(&logical[..kw_len]).unwrap_or(InstructionKind::Unknown);
        let args = &logical[kw_len..];
        let a0 = args.iter().position(|&b| !is_blank(b)).unwrap_or(args.len());
        let a1 = args.iter().rposition(|&b| !is_blank(b)).map_or(a0, |p| p + 1);
        let args_raw = if kind == InstructionKind::Unknown {
            let e = logical.iter().rposition(|&b| !is_blank(b)).map_or(0, |p| p + 1);
            logical[..e].to_vec()
        } else {
            args[a0..a1.max(a0)].to_vec()
        };
        instructions.push(Instruction {
            kind,
            args_raw,
            span: SourceSpan::new(start, end),
        });
        i = last + 1;
    }
    DockerfileAst {
        source: src.to_vec(),
        instructions,
    }
}

/// Rebuilds the document from instruction spans and the bytes between them.
pub fn serialize(ast: &DockerfileAst) -> Vec<u8> {
    let src = &ast.source;
    let mut out = Vec::with_capacity(src.len());
    let mut pos = 0;
    for ins in &ast.instructions {
        out.extend_from_slice(&src[pos..ins.span.start]);
        out.extend_from_slice(&src[ins.span.start..ins.span.end]);
        pos = ins.span.end;
    }
    out.extend_from_slice(&src[pos..]);
    out
}

/// One span replacement. An empty `replacement` removes the span; an empty
/// span inserts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanEdit {
    pub span: SourceSpan,
    pub replacement: String,
}

impl SpanEdit {
    pub fn new(span: SourceSpan, replacement: impl Into<String>) -> Self {
        Self {
            span,
            replacement: replacement.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpliceError {
    #[error("edit {index} span {span:?} is outside the {len}-byte document")]
    OutOfBounds { index: usize, span: SourceSpan, len: usize },
    #[error("edits {first} and {second} overlap")]
    Overlap { first: usize, second: usize },
}

fn conflicting(a: &SourceSpan, b: &SourceSpan) -> bool {
    if a.is_empty() && b.is_empty() {
        return a.start == b.start;
    }
    if a.is_empty() {
        return b.start < a.start && a.start < b.end;
    }
    if b.is_empty() {
        return a.start < b.start && b.start < a.end;
    }
    a.overlaps(b)
}

/// Applies span edits to the document source.
///
/// Edits may not overlap. Two insertions at the same offset conflict, and
/// so does an insertion strictly inside a replaced range; an insertion at
/// either boundary of a replaced range is allowed. The result does not
/// depend on the order of `edits`.
pub fn splice(ast: &DockerfileAst, edits: &[SpanEdit]) -> Result<Vec<u8>, SpliceError> {
    splice_bytes(&ast.source, edits)
}

pub fn splice_bytes(src: &[u8], edits: &[SpanEdit]) -> Result<Vec<u8>, SpliceError> {
    for (index, e) in edits.iter().enumerate() {
        if e.span.start > e.span.end || e.span.end > src.len() {
            return Err(SpliceError::OutOfBounds {
                index,
                span: e.span,
                len: src.len(),
            });
        }
    }
    for a in 0..edits.len() {
        for b in a + 1..edits.len() {
            if conflicting(&edits[a].span, &edits[b].span) {
                return Err(SpliceError::Overlap { first: a, second: b });
            }
        }
    }
    let mut order: Vec<&SpanEdit> = edits.iter().collect();
    // Right to left; at equal starts the longer (replacement) edit goes
    // first so an insertion at its start ends up in front of it.
    order.sort_by_key(|e| std::cmp::Reverse((e.span.start, e.span.end)));
    let mut out = src.to_vec();
    for e in order {
        out.splice(e.span.start..e.span.end, e.replacement.bytes());
    }
    Ok(out)
}
