//! Text pipeline: tokenization, vocabulary construction, and argument
//! identification (delexicalization) with post-processing recovery.

pub mod arguments;
pub mod vocab;

pub use arguments::{
    identify_arguments, mask_logical_form, reverse_input, unmask, ArgumentLexicon, ArgumentTable,
    ExamplePair, LexiconEntry, MaskedUtterance, NumberKind, NumberPattern,
};
pub use vocab::Vocabulary;

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Lowercases and splits a sentence into tokens.
///
/// Rules: split on whitespace, then separate `. , ? ! ; " ( )` into
/// single-character tokens, except that `.` and `:` stay inside a token when
/// both neighbors are digits (`3.5`, `10:30`). An apostrophe starts a new
/// token carrying the suffix, so `what's` becomes `what 's`.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lower.split_whitespace() {
        split_chunk(chunk, &mut tokens);
    }
    tokens
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '\'' {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
            cur.push('\'');
            continue;
        }
        let between_digits = i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit();
        let separate = match c {
            '.' | ':' => !between_digits,
            ',' | '?' | '!' | ';' | '"' | '(' | ')' => true,
            _ => false,
        };
        if separate {
            if !cur.is_empty() {
                out.push(core::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
}

/// Words the suffix stripper leaves untouched.
const STEM_EXCEPTIONS: &[&str] = &[
    "anything", "during", "evening", "everything", "king", "morning", "nothing", "ring", "sing",
    "something", "spring", "string", "thing", "wing",
];

/// Small rule-based suffix stripper, applied per token when stemming is
/// enabled (it is off by default). Strips one of `ies`→`y`, `ing`, `ed`,
/// `es`, `s` under the length and exception rules below; tokens containing
/// non-alphabetic characters are never touched.
pub fn stem(token: &str) -> String {
    if token.len() < 4 || !token.bytes().all(|b| b.is_ascii_lowercase()) {
        return token.to_string();
    }
    if STEM_EXCEPTIONS.contains(&token) {
        return token.to_string();
    }
    if let Some(base) = token.strip_suffix("ies") {
        if base.len() >= 2 {
            let mut s = base.to_string();
            s.push('y');
            return s;
        }
    }
    if let Some(base) = token.strip_suffix("ing") {
        if base.len() >= 3 {
            return base.to_string();
        }
    }
    if let Some(base) = token.strip_suffix("ed") {
        if base.len() >= 3 && !base.ends_with('e') {
            return base.to_string();
        }
    }
    if let Some(base) = token.strip_suffix("es") {
        if base.ends_with('x')
            || base.ends_with('z')
            || base.ends_with("ss")
            || base.ends_with("ch")
            || base.ends_with("sh")
        {
            return base.to_string();
        }
    }
    if let Some(base) = token.strip_suffix('s') {
        if base.len() >= 3 && !base.ends_with('s') && !base.ends_with('u') && !base.ends_with('i')
        {
            return base.to_string();
        }
    }
    token.to_string()
}

/// Applies [`stem`] to every token in place.
pub fn stem_tokens(tokens: &mut [String]) {
    for t in tokens.iter_mut() {
        *t = stem(t);
    }
}
