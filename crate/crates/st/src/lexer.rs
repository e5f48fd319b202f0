//! Tokenizer for Structured Text, including the Siemens SCL extensions
//! (`"quoted names"`, `#local` references, `{ pragmas }`).
//!
//! Lexing never stops on bad input: an unexpected character becomes a
//! diagnostic and scanning resumes at the next character.

use crate::diagnostic::{Code, Diagnostic};
use crate::token::{Keyword, Span, Token, TokenKind};

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn tokenize(source: &str) -> Lexed {
    let mut lexer = Lexer { src: source, pos: 0, line: 1, column: 1, tokens: Vec::new(), diagnostics: Vec::new() };
    lexer.run();
    Lexed { tokens: lexer.tokens, diagnostics: lexer.diagnostics }
}

const OPERATORS: &[&str] = &[":=", "=>", "**", "<>", "<=", ">=", "+", "-", "*", "/", "=", "<", ">", "&", "^"];
const PUNCTUATION: &[&str] = &["..", ";", ":", ",", "(", ")", "[", "]", "."];

const DATE_PREFIXES: &[&str] = &["D", "DATE", "LDATE", "DT", "DATE_AND_TIME", "LDT", "LDATE_AND_TIME"];
const TIME_PREFIXES: &[&str] = &["T", "TIME", "LT", "LTIME"];
const REAL_PREFIXES: &[&str] = &["REAL", "LREAL"];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    column: u32,
    tokens: Vec<Token>,
    diagnostics: Vec<Diagnostic>,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn bump_while(&mut self, f: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            self.bump();
        }
    }

    fn mark(&self) -> Span {
        Span { line: self.line, column: self.column, offset: self.pos, len: 0 }
    }

    fn push(&mut self, kind: TokenKind, start: Span) {
        let span = Span { len: self.pos - start.offset, ..start };
        let lexeme = self.src[start.offset..self.pos].to_string();
        self.tokens.push(Token { kind, lexeme, span });
    }

    fn error(&mut self, code: Code, span: Span, message: String) {
        self.diagnostics.push(Diagnostic::new(code, span, message));
    }

    fn run(&mut self) {
        while let Some(c) = self.peek() {
            let start = self.mark();
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            let rest = self.rest();
            if rest.starts_with("(*") {
                self.block_comment(start, "*)");
            } else if rest.starts_with("/*") {
                self.block_comment(start, "*/");
            } else if rest.starts_with("//") {
                self.bump_while(|c| c != '\n');
                self.push(TokenKind::Comment, start);
            } else if c == '{' {
                self.block_comment(start, "}");
            } else if c.is_ascii_digit() {
                self.number(start);
            } else if c.is_ascii_alphabetic() || c == '_' {
                self.word(start);
            } else if c == '#' && self.peek_at(1).is_some_and(|n| n.is_ascii_alphabetic() || n == '_') {
                // SCL local-variable reference: #name
                self.bump();
                self.bump_while(|c| c.is_ascii_alphanumeric() || c == '_');
                self.push(TokenKind::Identifier, start);
            } else if c == '\'' {
                self.string(start);
            } else if c == '"' {
                self.quoted_name(start);
            } else if c == '%' && self.peek_at(1).is_some_and(|n| matches!(n.to_ascii_uppercase(), 'I' | 'Q' | 'M')) {
                self.bump();
                self.bump_while(|c| c.is_ascii_alphanumeric() || c == '.' || c == '*');
                self.push(TokenKind::Identifier, start);
            } else if let Some(op) = longest_symbol(rest) {
                for _ in 0..op.len() {
                    self.bump();
                }
                let kind = if OPERATORS.contains(&op) { TokenKind::Operator } else { TokenKind::Punctuation };
                self.push(kind, start);
            } else {
                self.bump();
                let span = Span { len: c.len_utf8(), ..start };
                self.error(Code::UnexpectedCharacter, span, format!("unexpected character '{}'", c.escape_default()));
            }
        }
    }

    fn block_comment(&mut self, start: Span, close: &str) {
        let open_len = if close == "}" { 1 } else { 2 };
        for _ in 0..open_len {
            self.bump();
        }
        loop {
            if self.rest().starts_with(close) {
                for _ in 0..close.len() {
                    self.bump();
                }
                break;
            }
            if self.bump().is_none() {
                let what = if close == "}" { "pragma" } else { "comment" };
                self.error(
                    Code::UnterminatedComment,
                    start,
                    format!("unterminated {what}, expected '{close}' before end of file"),
                );
                break;
            }
        }
        self.push(TokenKind::Comment, start);
    }

    fn digits(&mut self, radix: u32) -> usize {
        let before = self.pos;
        self.bump_while(|c| c.is_digit(radix) || c == '_');
        self.pos - before
    }

    fn number(&mut self, start: Span) {
        self.digits(10);
        if self.peek() == Some('#') {
            // based integer: 2#1010, 8#17, 16#FF
            let base: u32 = self.src[start.offset..self.pos].replace('_', "").parse().unwrap_or(0);
            self.bump();
            if matches!(base, 2 | 8 | 16) {
                if self.digits(base) == 0 {
                    self.bump_while(|c| c.is_ascii_alphanumeric());
                    let span = Span { len: self.pos - start.offset, ..start };
                    self.error(Code::MalformedLiteral, span, format!("malformed base-{base} literal"));
                }
            } else {
                self.bump_while(|c| c.is_ascii_alphanumeric() || c == '_');
                let span = Span { len: self.pos - start.offset, ..start };
                self.error(Code::MalformedLiteral, span, format!("unsupported integer base {base}"));
            }
            self.push(TokenKind::IntegerLiteral, start);
            return;
        }
        let mut kind = TokenKind::IntegerLiteral;
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            self.digits(10);
            kind = TokenKind::RealLiteral;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let signed = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if signed { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                for _ in 0..digit_at {
                    self.bump();
                }
                self.digits(10);
                kind = TokenKind::RealLiteral;
            }
        }
        self.push(kind, start);
    }

    fn word(&mut self, start: Span) {
        self.bump_while(|c| c.is_ascii_alphanumeric() || c == '_');
        let word = &self.src[start.offset..self.pos];
        if self.peek() == Some('#') {
            self.typed_literal(start, word.to_ascii_uppercase());
            return;
        }
        let kind = match Keyword::lookup(word) {
            Some(k) => TokenKind::Keyword(k),
            None => TokenKind::Identifier,
        };
        self.push(kind, start);
    }

    fn typed_literal(&mut self, start: Span, prefix: String) {
        self.bump(); // '#'
        let value_start = self.pos;
        let date_like = DATE_PREFIXES.contains(&prefix.as_str());
        let real_like = REAL_PREFIXES.contains(&prefix.as_str());
        if matches!(self.peek(), Some('+' | '-')) {
            self.bump();
        }
        while let Some(c) = self.peek() {
            let accept = c.is_ascii_alphanumeric()
                || c == '_'
                || c == ':'
                || (c == '#' && !real_like)
                || (c == '.' && self.peek_at(1).is_some_and(|n| n.is_ascii_alphanumeric()))
                || (c == '-' && date_like)
                || (matches!(c, '+' | '-')
                    && real_like
                    && matches!(self.src[..self.pos].chars().last(), Some('e' | 'E')));
            if !accept {
                break;
            }
            self.bump();
        }
        let value = &self.src[value_start..self.pos];
        let span = Span { len: self.pos - start.offset, ..start };
        if value.is_empty() || value == "-" || value == "+" {
            self.error(Code::MalformedLiteral, span, format!("typed literal '{prefix}#' has no value"));
        } else if TIME_PREFIXES.contains(&prefix.as_str()) && !valid_duration(value) {
            self.error(
                Code::MalformedLiteral,
                span,
                format!("malformed duration literal '{}'", &self.src[start.offset..self.pos]),
            );
        }
        self.push(TokenKind::TypedLiteral, start);
    }

    fn string(&mut self, start: Span) {
        self.bump();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    self.error(Code::UnterminatedString, start, "unterminated string literal".to_string());
                    break;
                }
                Some('$') => {
                    self.bump();
                    if self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                Some('\'') => {
                    self.bump();
                    break;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
        self.push(TokenKind::StringLiteral, start);
    }

    /// SCL quoted identifier; a double-quoted name is a name, not a string.
    fn quoted_name(&mut self, start: Span) {
        self.bump();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    self.error(Code::UnterminatedString, start, "unterminated quoted name".to_string());
                    break;
                }
                Some('"') => {
                    self.bump();
                    break;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
        self.push(TokenKind::Identifier, start);
    }
}

fn longest_symbol(rest: &str) -> Option<&'static str> {
    OPERATORS.iter().chain(PUNCTUATION).filter(|s| rest.starts_with(**s)).max_by_key(|s| s.len()).copied()
}

/// Validates the value part of a `T#...` literal: an optional sign followed
/// by one or more `<number><unit>` groups, units d/h/m/s/ms/us/ns.
pub(crate) fn valid_duration(value: &str) -> bool {
    let v = value.strip_prefix('-').unwrap_or(value).replace('_', "").to_ascii_lowercase();
    let bytes = v.as_bytes();
    let mut i = 0;
    let mut groups = 0;
    while i < bytes.len() {
        let num_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i == num_start {
            return false;
        }
        let unit_start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        if !matches!(&v[unit_start..i], "d" | "h" | "m" | "s" | "ms" | "us" | "ns") {
            return false;
        }
        groups += 1;
    }
    groups > 0
}
