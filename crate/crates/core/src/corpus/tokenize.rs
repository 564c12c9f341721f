//! Rule-based tokenizer for short social-media texts.
//!
//! Rules, applied in order: lowercase; URLs become `<url>`; `@mentions`
//! and `#hashtags` stay whole; emoticons from [`EMOTICONS`] stay whole;
//! runs of punctuation split into one token per character; everything
//! else splits on whitespace. Apostrophes between letters stay inside
//! the word (`don't`).

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Token;

/// Emoticons recognised after lowercasing, longest first.
pub const EMOTICONS: &[&str] = &[
    ">:-(", ":'-(", ":-)", ":-(", ":-d", ":-p", ";-)", ":'(", "^_^", "-_-", ":)", ":(", ":d", ":p",
    ";)", ":/", ":o", ":|", "=)", "=(", "<3", "xd",
];

pub const URL_TOKEN: &str = "<url>";

fn is_url(chunk: &str) -> bool {
    chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn emoticon_at(rest: &str, chunk_start: bool) -> Option<&'static str> {
    EMOTICONS.iter().copied().find(|e| {
        if !rest.starts_with(e) {
            return false;
        }
        // Alphabetic emoticons ("xd") only match a whole chunk.
        if e.chars().next().is_some_and(char::is_alphabetic)
            && !(chunk_start && rest.len() == e.len())
        {
            return false;
        }
        // An emoticon must not run into a following word ("a:dog").
        !rest[e.len()..].chars().next().is_some_and(is_word_char)
    })
}

fn push(out: &mut Vec<Token>, s: &str) {
    if let Some(t) = Token::new(s) {
        out.push(t);
    }
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<Token>) {
    if is_url(chunk) {
        push(out, URL_TOKEN);
        return;
    }
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let rest = &chunk[start..];
        if is_url(rest) {
            push(out, URL_TOKEN);
            return;
        }
        if let Some(e) = emoticon_at(rest, i == 0) {
            push(out, e);
            i += e.chars().count();
            continue;
        }
        if (c == '@' || c == '#') && chars.get(i + 1).is_some_and(|&(_, n)| is_word_char(n)) {
            let mut j = i + 1;
            while j < chars.len() && is_word_char(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(chunk.len(), |&(b, _)| b);
            push(out, &chunk[start..end]);
            i = j;
            continue;
        }
        if is_word_char(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                let inner_apostrophe = cj == '\''
                    && chars.get(j + 1).is_some_and(|&(_, n)| n.is_alphabetic())
                    && chars[j - 1].1.is_alphabetic();
                if is_word_char(cj) || inner_apostrophe {
                    j += 1;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(chunk.len(), |&(b, _)| b);
            push(out, &chunk[start..end]);
            i = j;
            continue;
        }
        let end = chars.get(i + 1).map_or(chunk.len(), |&(b, _)| b);
        push(out, &chunk[start..end]);
        i += 1;
    }
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        tokenize_chunk(chunk, &mut out);
    }
    out
}

/// Convenience form returning plain strings.
pub fn tokenize_strings(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|t| t.as_str().to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        tokenize_strings(s)
    }

    #[test]
    fn hello_world() {
        assert_eq!(toks("Hello World!"), vec!["hello", "world", "!"]);
    }

    #[test]
    fn urls_and_mentions() {
        assert_eq!(toks("see http://a.co @bob"), vec!["see", "<url>", "@bob"]);
        assert_eq!(toks("go www.x.org/a?b now"), vec!["go", "<url>", "now"]);
        assert_eq!(toks("#Rust2024 rocks"), vec!["#rust2024", "rocks"]);
        assert_eq!(toks("hi,@amy!"), vec!["hi", ",", "@amy", "!"]);
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
        assert!(toks("   \n\t").is_empty());
    }

    #[test]
    fn punctuation_runs_split() {
        assert_eq!(
            toks("wait...what?!"),
            vec!["wait", ".", ".", ".", "what", "?", "!"]
        );
        assert_eq!(toks("@ #"), vec!["@", "#"]);
    }

    #[test]
    fn emoticons_kept() {
        assert_eq!(
            toks("nice :) really :-D"),
            vec!["nice", ":)", "really", ":-d"]
        );
        assert_eq!(toks("love <3"), vec!["love", "<3"]);
        assert_eq!(toks("XD"), vec!["xd"]);
        assert_eq!(toks("great:)"), vec!["great", ":)"]);
        // Not an emoticon when glued to a word.
        assert_eq!(toks("a:dog"), vec!["a", ":", "dog"]);
        assert_eq!(toks("xdx"), vec!["xdx"]);
    }

    #[test]
    fn apostrophes_inside_words() {
        assert_eq!(toks("Don't 'quote'"), vec!["don't", "'", "quote", "'"]);
    }

    #[test]
    fn tokens_satisfy_invariants() {
        for t in tokenize("  Mixed CASE\tÜber ünïcødé 😀 ok  ") {
            let s = t.as_str();
            assert!(!s.is_empty());
            assert_eq!(s, s.trim());
            assert_eq!(s, s.to_lowercase());
        }
    }
}
