use std::fmt;

use serde::{Deserialize, Serialize};

/// Location of a token or node in the source. `line` and `column` are
/// 1-based; `column` counts characters, `offset`/`len` count bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    /// Span from the start of `self` to the end of `other`.
    pub fn to(self, other: Span) -> Span {
        let end = other.end().max(self.end());
        Span { len: end - self.offset, ..self }
    }

    pub fn contains(&self, other: &Span) -> bool {
        other.offset >= self.offset && other.end() <= self.end()
    }
}

macro_rules! keywords {
    ($($variant:ident => $text:literal,)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Keyword {
            $($variant,)*
        }

        impl Keyword {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Keyword::$variant => $text,)*
                }
            }

            /// Case-insensitive keyword lookup.
            pub fn lookup(word: &str) -> Option<Keyword> {
                let upper = word.to_ascii_uppercase();
                match upper.as_str() {
                    $($text => Some(Keyword::$variant),)*
                    _ => None,
                }
            }

            pub const ALL: &'static [Keyword] = &[$(Keyword::$variant,)*];
        }
    };
}

keywords! {
    Program => "PROGRAM",
    EndProgram => "END_PROGRAM",
    Function => "FUNCTION",
    EndFunction => "END_FUNCTION",
    FunctionBlock => "FUNCTION_BLOCK",
    EndFunctionBlock => "END_FUNCTION_BLOCK",
    Var => "VAR",
    VarInput => "VAR_INPUT",
    VarOutput => "VAR_OUTPUT",
    VarInOut => "VAR_IN_OUT",
    VarGlobal => "VAR_GLOBAL",
    VarTemp => "VAR_TEMP",
    VarExternal => "VAR_EXTERNAL",
    EndVar => "END_VAR",
    Constant => "CONSTANT",
    Retain => "RETAIN",
    NonRetain => "NON_RETAIN",
    At => "AT",
    Type => "TYPE",
    EndType => "END_TYPE",
    Struct => "STRUCT",
    EndStruct => "END_STRUCT",
    Array => "ARRAY",
    Of => "OF",
    If => "IF",
    Then => "THEN",
    Elsif => "ELSIF",
    Else => "ELSE",
    EndIf => "END_IF",
    Case => "CASE",
    EndCase => "END_CASE",
    For => "FOR",
    To => "TO",
    By => "BY",
    Do => "DO",
    EndFor => "END_FOR",
    While => "WHILE",
    EndWhile => "END_WHILE",
    Repeat => "REPEAT",
    Until => "UNTIL",
    EndRepeat => "END_REPEAT",
    Exit => "EXIT",
    Continue => "CONTINUE",
    Return => "RETURN",
    True => "TRUE",
    False => "FALSE",
    And => "AND",
    Or => "OR",
    Xor => "XOR",
    Not => "NOT",
    Mod => "MOD",
    Begin => "BEGIN",
}

impl Keyword {
    /// Keywords that close a block. Used as panic-mode synchronization points.
    pub fn is_block_end(self) -> bool {
        matches!(
            self,
            Keyword::EndProgram
                | Keyword::EndFunction
                | Keyword::EndFunctionBlock
                | Keyword::EndVar
                | Keyword::EndType
                | Keyword::EndStruct
                | Keyword::EndIf
                | Keyword::EndCase
                | Keyword::EndFor
                | Keyword::EndWhile
                | Keyword::EndRepeat
        )
    }

    pub fn is_var_block(self) -> bool {
        matches!(
            self,
            Keyword::Var
                | Keyword::VarInput
                | Keyword::VarOutput
                | Keyword::VarInOut
                | Keyword::VarGlobal
                | Keyword::VarTemp
                | Keyword::VarExternal
        )
    }

    pub fn is_pou_start(self) -> bool {
        matches!(self, Keyword::Program | Keyword::Function | Keyword::FunctionBlock)
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword(Keyword),
    Identifier,
    IntegerLiteral,
    RealLiteral,
    TypedLiteral,
    StringLiteral,
    Operator,
    Punctuation,
    Comment,
}

impl TokenKind {
    pub fn class_name(&self) -> &'static str {
        match self {
            TokenKind::Keyword(_) => "keyword",
            TokenKind::Identifier => "identifier",
            TokenKind::IntegerLiteral => "integer-literal",
            TokenKind::RealLiteral => "real-literal",
            TokenKind::TypedLiteral => "typed-literal",
            TokenKind::StringLiteral => "string-literal",
            TokenKind::Operator => "operator",
            TokenKind::Punctuation => "punctuation",
            TokenKind::Comment => "comment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is_keyword(&self, kw: Keyword) -> bool {
        self.kind == TokenKind::Keyword(kw)
    }

    pub fn is_symbol(&self, sym: &str) -> bool {
        matches!(self.kind, TokenKind::Operator | TokenKind::Punctuation) && self.lexeme == sym
    }

    pub fn keyword(&self) -> Option<Keyword> {
        match self.kind {
            TokenKind::Keyword(k) => Some(k),
            _ => None,
        }
    }

    /// Display form used in "found X" messages.
    pub fn describe(&self) -> String {
        match self.kind {
            TokenKind::Keyword(k) => format!("'{}'", k.as_str()),
            _ => format!("'{}'", self.lexeme),
        }
    }
}
