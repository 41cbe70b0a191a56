//! LaTeX-aware text normalization and rule-based sentence segmentation.

use alloc::string::String;
use alloc::vec::Vec;

/// The placeholder tokens that survive normalization.
pub const SPECIAL_TOKENS: [&str; 4] = ["[math]", "[graph]", "[table]", "[equation]"];

pub const MATH: &str = "[math]";
pub const GRAPH: &str = "[graph]";
pub const TABLE: &str = "[table]";
pub const EQUATION: &str = "[equation]";

const SENTENCE_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '(', ')', '-', '\''];
const TERMINATORS: &[char] = &['.', '!', '?'];

/// Minimum length of a kept sentence, counted in word units (see [`word_units`]).
pub const MIN_SENTENCE_UNITS: usize = 3;

// Commands whose braced argument is dropped along with the command itself.
const ARG_DROPPING_COMMANDS: &[&str] = &[
    "cite", "citep", "citet", "ref", "eqref", "label", "url", "href", "bibitem",
];

fn env_token(env: &str) -> Option<&'static str> {
    let base = env.trim_end_matches('*');
    match base {
        "equation" | "align" | "eqnarray" | "gather" | "multline" | "displaymath" => Some(EQUATION),
        "table" | "tabular" | "tabularx" => Some(TABLE),
        "figure" => Some(GRAPH),
        _ => None,
    }
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || (c.is_alphabetic() && ('\u{00C0}'..='\u{024F}').contains(&c))
}

fn is_allowed(c: char) -> bool {
    is_latin_letter(c) || c.is_ascii_digit() || SENTENCE_PUNCT.contains(&c)
}

/// Replaces LaTeX math, tables, figures and equations with placeholder
/// tokens, drops every other command and any character outside Latin
/// letters, digits and sentence punctuation, then collapses whitespace.
///
/// Total and idempotent.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    let bytes = raw.as_bytes();
    while i < raw.len() {
        let rest = &raw[i..];
        if let Some(tok) = SPECIAL_TOKENS.iter().find(|t| rest.starts_with(**t)) {
            push_special(&mut out, tok);
            i += tok.len();
            continue;
        }
        match bytes[i] {
            b'$' => {
                let display = rest.starts_with("$$");
                let open = if display { 2 } else { 1 };
                let close = if display { "$$" } else { "$" };
                match rest[open..].find(close) {
                    Some(end) => {
                        push_special(&mut out, if display { EQUATION } else { MATH });
                        i += open + end + close.len();
                    }
                    None => i += open,
                }
            }
            b'\\' => i += consume_command(rest, &mut out),
            _ => {
                let c = rest.chars().next().unwrap_or(' ');
                if c.is_whitespace() {
                    push_space(&mut out);
                } else if is_allowed(c) {
                    out.push(c);
                }
                i += c.len_utf8();
            }
        }
    }
    collapse_whitespace(&out)
}

fn push_special(out: &mut String, tok: &str) {
    out.push_str(tok);
}

fn push_space(out: &mut String) {
    if !out.ends_with(' ') {
        out.push(' ');
    }
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Consumes one backslash construct starting at `rest[0] == '\\'`, pushing
/// any replacement token, and returns the number of bytes consumed.
fn consume_command(rest: &str, out: &mut String) -> usize {
    let after = &rest[1..];
    if after.starts_with('(') {
        return match after.find("\\)") {
            Some(end) => {
                push_special(out, MATH);
                1 + end + 2
            }
            None => 2,
        };
    }
    if after.starts_with('[') {
        return match after.find("\\]") {
            Some(end) => {
                push_special(out, EQUATION);
                1 + end + 2
            }
            None => 2,
        };
    }
    let name_len = after.bytes().take_while(u8::is_ascii_alphabetic).count();
    if name_len == 0 {
        // Escaped symbol such as `\%` or `\\`.
        return 1 + after.chars().next().map_or(0, char::len_utf8);
    }
    let name = &after[..name_len];
    let mut consumed = 1 + name_len;
    match name {
        "begin" => {
            if let Some((env, arg_len)) = braced_arg(&rest[consumed..]) {
                consumed += arg_len;
                if let Some(tok) = env_token(env) {
                    push_space(out);
                    push_special(out, tok);
                    push_space(out);
                    consumed += skip_environment(&rest[consumed..], env);
                }
            }
        }
        "end" => {
            if let Some((_, arg_len)) = braced_arg(&rest[consumed..]) {
                consumed += arg_len;
            }
        }
        "includegraphics" => {
            push_space(out);
            push_special(out, GRAPH);
            push_space(out);
            let tail = &rest[consumed..];
            let mut skip = 0;
            if tail.starts_with('[') {
                skip = tail.find(']').map_or(tail.len(), |e| e + 1);
            }
            if let Some((_, arg_len)) = braced_arg(&tail[skip..]) {
                skip += arg_len;
            }
            consumed += skip;
        }
        _ if ARG_DROPPING_COMMANDS.contains(&name) => {
            if let Some((_, arg_len)) = braced_arg(&rest[consumed..]) {
                consumed += arg_len;
            }
        }
        _ => {}
    }
    consumed
}

/// Parses `{...}` (after optional spaces) returning the inner text and the
/// consumed length.
fn braced_arg(s: &str) -> Option<(&str, usize)> {
    let lead = s.len() - s.trim_start_matches(' ').len();
    let body = &s[lead..];
    if !body.starts_with('{') {
        return None;
    }
    let mut depth = 0usize;
    for (idx, c) in body.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((&body[1..idx], lead + idx + 1));
                }
            }
            _ => {}
        }
    }
    None
}

/// Skips to just past the `\end{env}` matching an already-consumed
/// `\begin{env}`, honouring nesting of the same environment.
fn skip_environment(s: &str, env: &str) -> usize {
    let mut depth = 1usize;
    let mut pos = 0;
    while pos < s.len() {
        let rest = &s[pos..];
        let Some(next) = rest.find('\\') else { break };
        pos += next;
        let rest = &s[pos..];
        for (kw, delta) in [("\\begin", 1isize), ("\\end", -1)] {
            if let Some(tail) = rest.strip_prefix(kw) {
                if let Some((name, len)) = braced_arg(tail) {
                    if name == env {
                        if delta > 0 {
                            depth += 1;
                        } else {
                            depth -= 1;
                        }
                        if depth == 0 {
                            return pos + kw.len() + len;
                        }
                    }
                }
            }
        }
        pos += 1;
    }
    s.len()
}

/// Counts word units in a fragment: whitespace tokens, with a trailing
/// terminal punctuation mark attached to a word counted as its own unit.
pub fn word_units(fragment: &str) -> usize {
    fragment
        .split_whitespace()
        .map(|w| {
            let core = w.trim_end_matches(TERMINATORS);
            if core.is_empty() || core.len() == w.len() {
                1
            } else {
                2
            }
        })
        .sum()
}

/// Splits normalized text into sentences.
///
/// A boundary is `.`, `!` or `?` followed by end of text, or by whitespace
/// and then a letter or a placeholder token. Fragments shorter than
/// [`MIN_SENTENCE_UNITS`] word units are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    split_sentences_with_floor(text, MIN_SENTENCE_UNITS)
}

/// [`split_sentences`] with a configurable fragment floor; a floor of 0 or 1
/// keeps every non-empty fragment.
pub fn split_sentences_with_floor(text: &str, min_units: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (pos, &(byte_idx, c)) in chars.iter().enumerate() {
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let end = byte_idx + c.len_utf8();
        let boundary = match chars.get(pos + 1) {
            None => true,
            Some(&(_, next)) if next.is_whitespace() => chars[pos + 1..]
                .iter()
                .find(|(_, ch)| !ch.is_whitespace())
                .is_none_or(|&(_, ch)| ch.is_alphabetic() || ch == '['),
            Some(_) => false,
        };
        if boundary {
            push_fragment(&mut out, &text[start..end], min_units);
            start = end;
        }
    }
    push_fragment(&mut out, &text[start..], min_units);
    out
}

fn push_fragment(out: &mut Vec<String>, fragment: &str, min_units: usize) {
    let trimmed = fragment.trim();
    if !trimmed.is_empty() && word_units(trimmed) >= min_units {
        out.push(collapse_whitespace(trimmed));
    }
}

/// Lowercased whitespace tokens, the unit ROUGE is computed over.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
