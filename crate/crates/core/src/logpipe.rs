//! Log tail extraction, normalization, and token splitting.

use serde::{Deserialize, Serialize};

/// Default number of non-blank lines kept from the end of a log.
pub const DEFAULT_TAIL_LINES: usize = 15;

/// Characters that always separate tokens.
pub const DELIMITERS: &[char] = &[
    '_', '-', '/', '\\', '.', ':', ';', ',', '=', '(', ')', '[', ']', '{', '}', '<', '>', '|', '&', '"',
    '\'', '!',
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogSource {
    Stderr,
    Stdout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogTail {
    pub text: String,
    /// Which stream the tail came from. `Stdout` means the stderr fallback
    /// was taken.
    pub source: LogSource,
}

fn last_non_blank(log: &str, k: usize) -> Vec<&str> {
    let mut lines: Vec<&str> = log
        .lines()
        .rev()
        .filter(|l| !l.trim().is_empty())
        .take(k)
        .collect();
    lines.reverse();
    lines
}

/// Last `k` non-blank lines of stderr, or of stdout when stderr has none.
///
/// # Panics
///
/// If `k` is zero.
pub fn tail_error_log(stderr_log: &str, stdout_log: &str, k: usize) -> LogTail {
    assert!(k >= 1, "tail length must be at least 1");
    let err = last_non_blank(stderr_log, k);
    if !err.is_empty() {
        return LogTail {
            text: err.join("\n"),
            source: LogSource::Stderr,
        };
    }
    LogTail {
        text: last_non_blank(stdout_log, k).join("\n"),
        source: LogSource::Stdout,
    }
}

fn normalize_line(line: &str) -> String {
    // Printable ASCII only; any whitespace becomes a plain space.
    let filtered: String = line
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if (' '..='~').contains(&c) {
                Some(c.to_ascii_lowercase())
            } else {
                None
            }
        })
        .collect();

    let mut out = String::with_capacity(filtered.len());
    let chars: Vec<char> = filtered.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let mut j = i + 1;
        while j < chars.len() && chars[j] == c {
            j += 1;
        }
        let run = j - i;
        if c == ' ' {
            out.push(' ');
        } else if c.is_ascii_punctuation() && run >= 4 {
            out.push(c);
        } else {
            out.extend(std::iter::repeat_n(c, run));
        }
        i = j;
    }
    // A run of spaces may sit between two separate runs of the same
    // punctuation character; those runs stay separate, so one pass is enough.
    collapse_spaces(out.trim())
}

fn collapse_spaces(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev_space = false;
    for c in s.chars() {
        if c == ' ' {
            if !prev_space {
                out.push(c);
            }
            prev_space = true;
        } else {
            out.push(c);
            prev_space = false;
        }
    }
    out
}

/// Lowercases, drops non-printable and non-ASCII characters, collapses
/// whitespace runs to one space and runs of four or more identical
/// punctuation characters to one.
///
/// Line structure is kept: each line is normalized on its own, trimmed, and
/// empty lines are dropped, so line-anchored patterns still work on the
/// result.
pub fn normalize(text: &str) -> String {
    text.split('\n')
        .map(normalize_line)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub origin_record: Option<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        Self {
            tokens,
            origin_record: None,
        }
    }

    pub fn with_origin(mut self, record_id: impl Into<String>) -> Self {
        self.origin_record = Some(record_id.into());
        self
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Inserts a space at lower→upper and `ABc`-style acronym boundaries.
fn split_camel(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        if i > 0 && c.is_ascii_uppercase() {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
            if prev.is_ascii_lowercase() || (prev.is_ascii_uppercase() && next_lower) {
                out.push(' ');
            }
        }
        out.push(c);
    }
    out
}

fn split_digit_letter(word: &str, out: &mut Vec<String>) {
    let mut cur = String::new();
    let mut prev_digit: Option<bool> = None;
    for c in word.chars() {
        let is_digit = c.is_ascii_digit();
        let is_alpha = c.is_ascii_alphabetic();
        if let Some(p) = prev_digit {
            if (is_digit || is_alpha) && p != is_digit && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if is_digit || is_alpha {
            prev_digit = Some(is_digit);
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
}

/// Splits camel case first (it needs the original case), then normalizes,
/// then splits on whitespace, [`DELIMITERS`], and digit/letter boundaries.
pub fn tokenize(text: &str) -> TokenSequence {
    let normalized = normalize(&split_camel(text));
    let mut tokens = Vec::new();
    for frag in normalized.split(|c: char| c.is_whitespace() || DELIMITERS.contains(&c)) {
        if !frag.is_empty() {
            split_digit_letter(frag, &mut tokens);
        }
    }
    TokenSequence::new(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).tokens
    }

    #[test]
    fn tail_takes_last_k() {
        let log: String = (1..=10).map(|i| format!("line {i}\n")).collect();
        let t = tail_error_log(&log, "", 3);
        assert_eq!(t.text, "line 8\nline 9\nline 10");
        assert_eq!(t.source, LogSource::Stderr);
    }

    #[test]
    fn tail_falls_back_to_stdout() {
        let t = tail_error_log("", "step 1\nstep 2\n", 5);
        assert_eq!(t.text, "step 1\nstep 2");
        assert_eq!(t.source, LogSource::Stdout);
        let t = tail_error_log("  \n\n", "x", 5);
        assert_eq!(t.source, LogSource::Stdout);
    }

    #[test]
    fn tail_skips_trailing_blank_lines() {
        let t = tail_error_log("a\nb\nc\n\n\n\n\n\n", "", 2);
        assert_eq!(t.text, "b\nc");
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("ERROR:    Unable to locate"), "error: unable to locate");
        assert_eq!(normalize("=====> step"), "=> step");
        assert_eq!(normalize("naïve ✗ fail"), "nave fail");
        assert_eq!(normalize("a\u{1b}[0mb\t\tc"), "a[0mb c");
        assert_eq!(normalize("E: x\r\n\r\n  W: y  \n"), "e: x\nw: y");
        assert_eq!(normalize("ok... and !!!!!! then"), "ok... and ! then");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            toks("unable to locate package python-pip"),
            ["unable", "to", "locate", "package", "python", "pip"]
        );
        assert_eq!(toks("ModuleNotFoundError"), ["module", "not", "found", "error"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("HTTPServer python2 2.6.3"), ["http", "server", "python", "2", "2", "6", "3"]);
        assert_eq!(toks("snake_case_name"), ["snake", "case", "name"]);
    }

    fn no_bad_chars(t: &str) -> bool {
        !t.is_empty()
            && !t.chars().any(|c| c.is_ascii_uppercase() || c.is_whitespace() || DELIMITERS.contains(&c))
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in "\\PC{0,80}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn normalize_idempotent_punct(s in "[=\\-#. a-zA-Z\n\t]{0,80}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn tokens_are_clean(s in "\\PC{0,80}") {
            for t in toks(&s) {
                prop_assert!(no_bad_chars(&t), "bad token {:?}", t);
            }
        }

        #[test]
        fn tokenize_fixed_point(s in "[A-Za-z0-9_\\-./:= !@#]{0,60}") {
            let first = tokenize(&s);
            let again = tokenize(&first.joined());
            prop_assert_eq!(again.tokens, first.tokens);
        }
    }
}
