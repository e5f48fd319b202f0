use std::fmt;

use serde::{Deserialize, Serialize};

use crate::token::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Stable diagnostic codes. The numeric part never changes meaning once
/// released, since codes are embedded in prompts and datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Code {
    UnexpectedCharacter,
    UnterminatedComment,
    UnterminatedString,
    MalformedLiteral,
    MissingTerminator,
    ExpectedToken,
    ExpectedExpression,
    ExpectedStatement,
    UnclosedBlock,
    UnknownTypeConstructor,
    InvalidDeclaration,
    MismatchedEnd,
    UnexpectedTopLevel,
    UndeclaredIdentifier,
    UnknownType,
    DuplicateDeclaration,
    ArgumentCount,
    UnknownParameter,
    NotCallable,
    StatementOutsidePou,
    UnsupportedConstruct,
    UnsupportedSyntax,
    /// Reported by an external compiler rather than this frontend.
    ExternalTool,
}

impl Code {
    pub const ALL: [Code; 23] = [
        Code::UnexpectedCharacter,
        Code::UnterminatedComment,
        Code::UnterminatedString,
        Code::MalformedLiteral,
        Code::MissingTerminator,
        Code::ExpectedToken,
        Code::ExpectedExpression,
        Code::ExpectedStatement,
        Code::UnclosedBlock,
        Code::UnknownTypeConstructor,
        Code::InvalidDeclaration,
        Code::MismatchedEnd,
        Code::UnexpectedTopLevel,
        Code::UndeclaredIdentifier,
        Code::UnknownType,
        Code::DuplicateDeclaration,
        Code::ArgumentCount,
        Code::UnknownParameter,
        Code::NotCallable,
        Code::StatementOutsidePou,
        Code::UnsupportedConstruct,
        Code::UnsupportedSyntax,
        Code::ExternalTool,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Code::UnexpectedCharacter => "E001",
            Code::UnterminatedComment => "E002",
            Code::UnterminatedString => "E003",
            Code::MalformedLiteral => "E004",
            Code::MissingTerminator => "E010",
            Code::ExpectedToken => "E011",
            Code::ExpectedExpression => "E012",
            Code::ExpectedStatement => "E013",
            Code::UnclosedBlock => "E014",
            Code::UnknownTypeConstructor => "E015",
            Code::InvalidDeclaration => "E016",
            Code::MismatchedEnd => "E017",
            Code::UnexpectedTopLevel => "E018",
            Code::UndeclaredIdentifier => "E020",
            Code::UnknownType => "E021",
            Code::DuplicateDeclaration => "E022",
            Code::ArgumentCount => "E023",
            Code::UnknownParameter => "E024",
            Code::NotCallable => "E025",
            Code::StatementOutsidePou => "E026",
            Code::UnsupportedConstruct => "W030",
            Code::UnsupportedSyntax => "E031",
            Code::ExternalTool => "E090",
        }
    }

    pub fn from_code(code: &str) -> Option<Code> {
        Code::ALL.into_iter().find(|c| c.as_str() == code)
    }

    pub fn severity(self) -> Severity {
        match self {
            Code::UnsupportedConstruct => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Code {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Code {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Code::from_code(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown code {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    pub message: String,
    pub line: u32,
    pub column: u32,
    /// Byte offset of the reported position.
    pub offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl Diagnostic {
    pub fn new(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            severity: code.severity(),
            message: message.into(),
            line: span.line,
            column: span.column,
            offset: span.offset,
            hint: None,
        }
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    pub fn position(&self) -> (u32, u32) {
        (self.line, self.column)
    }
}

/// Single-line rendering, `<code>: <message> at line L, column C`.
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} at line {}, column {}", self.code, self.message, self.line, self.column)
    }
}

/// Stable sort by position. Equal positions keep emission order.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by_key(|d| (d.line, d.column));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_unique_and_round_trip() {
        let mut seen = std::collections::HashSet::new();
        for c in Code::ALL {
            assert!(seen.insert(c.as_str()));
            assert_eq!(Code::from_code(c.as_str()), Some(c));
        }
    }

    #[test]
    fn display_is_single_line() {
        let d = Diagnostic::new(
            Code::MissingTerminator,
            Span { line: 3, column: 7, offset: 20, len: 6 },
            "expected ';' after statement, found 'END_IF'",
        )
        .with_hint("insert ';'");
        let s = d.to_string();
        assert_eq!(s, "E010: expected ';' after statement, found 'END_IF' at line 3, column 7");
        assert!(!s.contains('\n'));
    }
}
