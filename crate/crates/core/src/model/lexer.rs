//! Tokenizer for the supported C subset.
//!
//! Whitespace and comments are dropped. `#include` lines are trivia, `#pragma`
//! lines become [`TokenKind::Pragma`] tokens, and every other preprocessor
//! directive is rejected because macros and conditionals must already be
//! resolved by the time source reaches this crate.

use super::{ParseError, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Punct(&'static str),
    /// Full text of a `#pragma` line, without the trailing newline.
    Pragma(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

// Longest first so that greedy matching works.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "(", ")", "[", "]", "{", "}", ";", ",", "=", "<",
    ">", "+", "-", "*", "/", "%", "!", "~", "&", "|", "^", "?", ":", ".",
];

/// Maps a byte offset to a 1-based (line, column) pair.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = match before.iter().rposition(|&b| b == b'\n') {
        Some(nl) => offset - nl,
        None => offset + 1,
    };
    (line, col)
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    // True while only whitespace has been seen since the last newline.
    let mut line_start = true;

    let err = |offset: usize, construct: &str| {
        let (line, column) = line_col(text, offset);
        ParseError {
            line,
            column,
            construct: construct.to_string(),
        }
    };

    while pos < bytes.len() {
        let c = bytes[pos];
        if c == b'\n' {
            line_start = true;
            pos += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if text[pos..].starts_with("//") {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        if text[pos..].starts_with("/*") {
            match text[pos + 2..].find("*/") {
                Some(end) => pos += end + 4,
                None => return Err(err(pos, "unterminated comment")),
            }
            continue;
        }
        if c == b'#' {
            if !line_start {
                return Err(err(pos, "stray '#'"));
            }
            let start = pos;
            // Directive lines may continue with a trailing backslash.
            let mut end = pos;
            loop {
                while end < bytes.len() && bytes[end] != b'\n' {
                    end += 1;
                }
                if end > start && bytes[end - 1] == b'\\' && end < bytes.len() {
                    end += 1;
                    continue;
                }
                break;
            }
            let line = text[start..end].trim_end();
            let directive = line[1..].trim_start();
            let word: String = directive
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            match word.as_str() {
                "pragma" => tokens.push(Token {
                    kind: TokenKind::Pragma(line.to_string()),
                    span: Span::new(start, start + line.len()),
                }),
                "include" => {}
                "if" | "ifdef" | "ifndef" | "elif" | "else" | "endif" => {
                    return Err(err(start, "preprocessor conditional"))
                }
                "define" | "undef" => return Err(err(start, "macro definition")),
                _ => return Err(err(start, "preprocessor directive")),
            }
            pos = end;
            continue;
        }
        line_start = false;
        let start = pos;

        if c.is_ascii_alphabetic() || c == b'_' {
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(text[start..pos].to_string()),
                span: Span::new(start, pos),
            });
            continue;
        }

        if c.is_ascii_digit() || (c == b'.' && bytes.get(pos + 1).is_some_and(u8::is_ascii_digit)) {
            let kind = lex_number(text, &mut pos).ok_or_else(|| err(start, "malformed number"))?;
            tokens.push(Token {
                kind,
                span: Span::new(start, pos),
            });
            continue;
        }

        if c == b'"' {
            pos += 1;
            let mut value = String::new();
            loop {
                match bytes.get(pos) {
                    None | Some(b'\n') => return Err(err(start, "unterminated string literal")),
                    Some(b'"') => {
                        pos += 1;
                        break;
                    }
                    Some(b'\\') => {
                        let esc = *bytes.get(pos + 1).ok_or_else(|| err(start, "unterminated string literal"))?;
                        value.push(unescape(esc));
                        pos += 2;
                    }
                    Some(_) => {
                        let ch = text[pos..].chars().next().unwrap();
                        value.push(ch);
                        pos += ch.len_utf8();
                    }
                }
            }
            tokens.push(Token {
                kind: TokenKind::Str(value),
                span: Span::new(start, pos),
            });
            continue;
        }

        if c == b'\'' {
            let (value, len) = match (bytes.get(pos + 1), bytes.get(pos + 2), bytes.get(pos + 3)) {
                (Some(b'\\'), Some(&e), Some(b'\'')) => (unescape(e) as i64, 4),
                (Some(&ch), Some(b'\''), _) if ch != b'\\' => (ch as i64, 3),
                _ => return Err(err(start, "character literal")),
            };
            pos += len;
            tokens.push(Token {
                kind: TokenKind::Int(value),
                span: Span::new(start, pos),
            });
            continue;
        }

        match PUNCTS.iter().find(|p| text[pos..].starts_with(**p)) {
            Some(p) => {
                pos += p.len();
                tokens.push(Token {
                    kind: TokenKind::Punct(p),
                    span: Span::new(start, pos),
                });
            }
            None => {
                let ch = text[pos..].chars().next().unwrap();
                return Err(err(start, &format!("unexpected character '{ch}'")));
            }
        }
    }
    Ok(tokens)
}

fn unescape(c: u8) -> char {
    match c {
        b'n' => '\n',
        b't' => '\t',
        b'r' => '\r',
        b'0' => '\0',
        other => other as char,
    }
}

fn lex_number(text: &str, pos: &mut usize) -> Option<TokenKind> {
    let bytes = text.as_bytes();
    let start = *pos;
    if text[start..].starts_with("0x") || text[start..].starts_with("0X") {
        *pos += 2;
        while *pos < bytes.len() && bytes[*pos].is_ascii_hexdigit() {
            *pos += 1;
        }
        let value = i64::from_str_radix(&text[start + 2..*pos], 16).ok()?;
        skip_int_suffix(bytes, pos);
        return Some(TokenKind::Int(value));
    }
    let mut is_float = false;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos < bytes.len() && bytes[*pos] == b'.' {
        is_float = true;
        *pos += 1;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
    }
    if *pos < bytes.len() && (bytes[*pos] == b'e' || bytes[*pos] == b'E') {
        let mut look = *pos + 1;
        if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
            look += 1;
        }
        if look < bytes.len() && bytes[look].is_ascii_digit() {
            is_float = true;
            *pos = look;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
        }
    }
    let literal = &text[start..*pos];
    if is_float {
        let value = literal.parse::<f64>().ok()?;
        if *pos < bytes.len() && matches!(bytes[*pos], b'f' | b'F' | b'l' | b'L') {
            *pos += 1;
        }
        Some(TokenKind::Float(value))
    } else {
        let value = literal.parse::<i64>().ok()?;
        skip_int_suffix(bytes, pos);
        Some(TokenKind::Int(value))
    }
}

fn skip_int_suffix(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && matches!(bytes[*pos], b'u' | b'U' | b'l' | b'L') {
        *pos += 1;
    }
}
