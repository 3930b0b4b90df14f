//! Rule-based tweet tokenizer.
//!
//! At every non-whitespace position the patterns are tried in precedence
//! order URL, MENTION, HASHTAG, EMOTICON, NUMBER, WORD, PUNCT; the first that
//! matches consumes input. Every codepoint ends up in exactly one token or is
//! whitespace.

use std::sync::OnceLock;

use super::{Token, TokenKind, TokenStream};
use crate::textprep::wordlist::parse_lines;

const EMOTICONS: &str = include_str!("../../data/emoticons.txt");

/// Mention placeholder stored in `Token::normalized`.
pub const MENTION_PLACEHOLDER: &str = "<mention>";
/// URL placeholder stored in `Token::normalized`.
pub const URL_PLACEHOLDER: &str = "<url>";

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "t.co/"];
const URL_TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\'', ')', ']', '}', '>'];

/// ASCII emoticons, longest first.
fn emoticons() -> &'static [String] {
    static LIST: OnceLock<Vec<String>> = OnceLock::new();
    LIST.get_or_init(|| {
        let mut list = parse_lines(EMOTICONS);
        list.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        list.dedup();
        list
    })
}

/// The shipped ASCII emoticon lexicon.
pub fn emoticon_lexicon() -> &'static [String] {
    emoticons()
}

/// Pictographic code points treated as emoji.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2300..=0x23FF
        | 0x2B00..=0x2BFF
        | 0x25AA..=0x25FE
        | 0x3030 | 0x303D | 0x3297 | 0x3299
        | 0x00A9 | 0x00AE | 0x203C | 0x2049 | 0x2122 | 0x2139 | 0x24C2)
}

/// Code points that extend a preceding emoji into one grapheme.
fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32, 0xFE0E | 0xFE0F | 0x20E3 | 0x1F3FB..=0x1F3FF | 0xE0020..=0xE007F)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || matches!(c as u32, 0x0300..=0x036F)
}

fn starts_with_ignore_ascii_case(s: &str, prefix: &str) -> bool {
    s.len() >= prefix.len() && s.as_bytes()[..prefix.len()].eq_ignore_ascii_case(prefix.as_bytes())
}

fn next_char(s: &str) -> Option<char> {
    s.chars().next()
}

/// Byte length of a URL at the start of `rest`, if any.
fn match_url(rest: &str) -> Option<usize> {
    let prefix = URL_PREFIXES
        .iter()
        .find(|p| starts_with_ignore_ascii_case(rest, p))?;
    let mut end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    while end > prefix.len() {
        let last = rest[..end].chars().next_back().unwrap();
        if URL_TRAILING_PUNCT.contains(&last) {
            end -= last.len_utf8();
        } else {
            break;
        }
    }
    Some(end)
}

fn match_prefixed(rest: &str, sigil: char, allowed: impl Fn(char) -> bool) -> Option<usize> {
    let mut chars = rest.char_indices();
    match chars.next() {
        Some((_, c)) if c == sigil => {}
        _ => return None,
    }
    let mut end = sigil.len_utf8();
    for (i, c) in chars {
        if allowed(c) {
            end = i + c.len_utf8();
        } else {
            break;
        }
    }
    (end > sigil.len_utf8()).then_some(end)
}

fn match_emoticon(rest: &str) -> Option<usize> {
    let first = next_char(rest)?;
    if is_emoji(first) {
        let mut end = first.len_utf8();
        let mut chars = rest[end..].chars().peekable();
        while let Some(&c) = chars.peek() {
            if is_emoji_modifier(c) {
                end += c.len_utf8();
                chars.next();
            } else if c == '\u{200D}' {
                let mut look = chars.clone();
                look.next();
                match look.next() {
                    Some(n) if is_emoji(n) => {
                        end += c.len_utf8() + n.len_utf8();
                        chars.next();
                        chars.next();
                    }
                    _ => break,
                }
            } else {
                break;
            }
        }
        return Some(end);
    }
    for emo in emoticons() {
        if rest.starts_with(emo.as_str()) {
            let ends_alnum = emo.chars().next_back().is_some_and(char::is_alphanumeric);
            let followed_by_word = next_char(&rest[emo.len()..]).is_some_and(is_word_char);
            if !(ends_alnum && followed_by_word) {
                return Some(emo.len());
            }
        }
    }
    None
}

fn match_number(rest: &str) -> Option<usize> {
    let bytes = rest.as_bytes();
    if !bytes.first()?.is_ascii_digit() {
        return None;
    }
    let mut end = 0;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    while end + 1 < bytes.len() && matches!(bytes[end], b'.' | b',') && bytes[end + 1].is_ascii_digit() {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    // "2nd" is a word, not a number followed by a word
    if next_char(&rest[end..]).is_some_and(is_word_char) {
        return None;
    }
    Some(end)
}

fn match_word(rest: &str) -> Option<usize> {
    let mut end = 0;
    let mut chars = rest.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if is_word_char(c) {
            end = i + c.len_utf8();
        } else if (c == '\'' || c == '\u{2019}') && end == i && end > 0 {
            match chars.peek() {
                Some(&(_, n)) if n.is_alphabetic() => end = i + c.len_utf8(),
                _ => break,
            }
        } else {
            break;
        }
    }
    (end > 0).then_some(end)
}

/// A run of one repeated punctuation or symbol character.
fn match_punct(rest: &str) -> usize {
    let first = next_char(rest).expect("non-empty");
    rest.chars()
        .take_while(|&c| c == first)
        .map(char::len_utf8)
        .sum()
}

fn classify(rest: &str) -> (TokenKind, usize) {
    if let Some(n) = match_url(rest) {
        return (TokenKind::Url, n);
    }
    if let Some(n) = match_prefixed(rest, '@', |c| c.is_ascii_alphanumeric() || c == '_') {
        return (TokenKind::Mention, n);
    }
    if let Some(n) = match_prefixed(rest, '#', is_word_char) {
        return (TokenKind::Hashtag, n);
    }
    if let Some(n) = match_emoticon(rest) {
        return (TokenKind::Emoticon, n);
    }
    if let Some(n) = match_number(rest) {
        return (TokenKind::Number, n);
    }
    if let Some(n) = match_word(rest) {
        return (TokenKind::Word, n);
    }
    (TokenKind::Punct, match_punct(rest))
}

pub(crate) fn normalize(kind: TokenKind, surface: &str) -> String {
    match kind {
        TokenKind::Word | TokenKind::Hashtag => surface.to_lowercase(),
        TokenKind::Mention => MENTION_PLACEHOLDER.to_string(),
        TokenKind::Url => URL_PLACEHOLDER.to_string(),
        TokenKind::Emoticon | TokenKind::Number | TokenKind::Punct => surface.to_string(),
    }
}

pub fn tokenize_with_id(text: &str, source_doc_id: &str) -> TokenStream {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let c = next_char(rest).unwrap();
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        let (kind, len) = classify(rest);
        let surface = &rest[..len];
        tokens.push(Token {
            kind,
            surface: surface.to_string(),
            normalized: normalize(kind, surface),
        });
        pos += len;
    }
    TokenStream {
        tokens,
        source_doc_id: source_doc_id.to_string(),
    }
}
