//! IEC 61131-3 Structured Text front end: lexer, error-recovering parser,
//! scope checker and pretty printer.
//!
//! [`check`] is the entry point used by the rest of the workspace. It never
//! panics on any input and reports every diagnostic it finds, sorted by
//! position.

pub mod ast;
pub mod builtins;
pub mod check;
pub mod diagnostic;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod sema;
pub mod token;

pub use check::{check, check_named, check_path, CheckReport};
pub use diagnostic::{Code, Diagnostic, Severity};
pub use lexer::{tokenize, Lexed};
pub use parser::{parse, Parsed};
pub use pretty::pretty;
pub use token::{Span, Token, TokenKind};

/// Tokenize and parse in one step.
pub fn parse_source(source: &str) -> Parsed {
    let lexed = tokenize(source);
    let mut parsed = parse(&lexed.tokens);
    let mut diagnostics = lexed.diagnostics;
    diagnostics.append(&mut parsed.diagnostics);
    diagnostic::sort_diagnostics(&mut diagnostics);
    parsed.diagnostics = diagnostics;
    parsed
}
