//! Metadata-only guard: long runs of numeric literals (the shape raw
//! samples take when printed) never reach a prompt.

/// Longest run of numeric literals allowed in prompt text.
pub const MAX_NUMERIC_RUN: usize = 8;

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | ';' | ':' | '[' | ']' | '(' | ')' | '{' | '}' | '|')
}

fn is_numeric(token: &str) -> bool {
    let t = token.strip_suffix('.').unwrap_or(token);
    t.bytes().any(|b| b.is_ascii_digit())
        && t.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
        && t.parse::<f64>().is_ok()
}

/// Byte spans of each token, split on whitespace and list punctuation.
/// Quotes are not separators, so `"1"` is a label, not a number.
fn tokens(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_separator(c) {
            if let Some(s) = start.take() {
                out.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

/// Runs of consecutive numeric tokens as `(start_byte, end_byte, count)`.
pub fn numeric_runs(text: &str) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    let mut cur: Option<(usize, usize, usize)> = None;
    for (s, e) in tokens(text) {
        if is_numeric(&text[s..e]) {
            cur = Some(match cur {
                Some((rs, _, n)) => (rs, e, n + 1),
                None => (s, e, 1),
            });
        } else if let Some(r) = cur.take() {
            runs.push(r);
        }
    }
    runs.extend(cur);
    runs
}

/// Length of the longest numeric run.
pub fn longest_numeric_run(text: &str) -> usize {
    numeric_runs(text).iter().map(|r| r.2).max().unwrap_or(0)
}

/// Replaces every run longer than [`MAX_NUMERIC_RUN`] with a placeholder.
pub fn redact_numeric_runs(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (s, e, n) in numeric_runs(text) {
        if n > MAX_NUMERIC_RUN {
            out.push_str(&text[last..s]);
            out.push_str(&format!("[redacted {n} numeric values]"));
            last = e;
        }
    }
    out.push_str(&text[last..]);
    out
}
