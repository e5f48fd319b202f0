//! Recursive-descent parser with panic-mode error recovery.
//!
//! Every error is reported and parsing continues: a missing `;` is treated
//! as inserted when the next token can start a statement, otherwise tokens
//! are skipped to the next `;`, block keyword, or VAR-block boundary. Only
//! one diagnostic is emitted per token position, which keeps cascades from
//! a single root cause down to one report.

use crate::ast::*;
use crate::diagnostic::{Code, Diagnostic};
use crate::token::{Keyword, Span, Token, TokenKind};

pub struct Parsed {
    pub tree: SyntaxTree,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse(tokens: &[Token]) -> Parsed {
    let toks: Vec<&Token> = tokens.iter().filter(|t| t.kind != TokenKind::Comment).collect();
    let eof = match tokens.last() {
        Some(t) => {
            let trailing = t.lexeme.rsplit('\n').next().unwrap_or("");
            let (line, column) = if t.lexeme.contains('\n') {
                (t.span.line + t.lexeme.matches('\n').count() as u32, trailing.chars().count() as u32 + 1)
            } else {
                (t.span.line, t.span.column + t.lexeme.chars().count() as u32)
            };
            Span { line, column, offset: t.span.end(), len: 0 }
        }
        None => Span { line: 1, column: 1, offset: 0, len: 0 },
    };
    let mut p = Parser { toks, pos: 0, diags: Vec::new(), last_error_at: None, eof, closers: Vec::new() };
    let tree = p.file();
    Parsed { tree, diagnostics: p.diags }
}

/// Constructs outside the supported subset that are still recognizable by
/// their `X ... END_X` bracketing; they are skipped with a warning.
const UNSUPPORTED_BLOCKS: &[&str] = &[
    "METHOD",
    "PROPERTY",
    "INTERFACE",
    "CLASS",
    "CONFIGURATION",
    "RESOURCE",
    "ORGANIZATION_BLOCK",
    "DATA_BLOCK",
    "NAMESPACE",
    "ACTION",
    "STEP",
    "INITIAL_STEP",
    "TRANSITION",
];

const SCL_HEADER_ATTRIBUTES: &[&str] = &["VERSION", "TITLE", "AUTHOR", "FAMILY", "NAME"];

struct Parser<'t> {
    toks: Vec<&'t Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
    last_error_at: Option<usize>,
    eof: Span,
    /// Keywords that terminate the statement lists of enclosing constructs.
    closers: Vec<&'static [Keyword]>,
}

fn is_list_end_keyword(k: Keyword) -> bool {
    k.is_block_end()
        || k.is_var_block()
        || k.is_pou_start()
        || matches!(k, Keyword::Else | Keyword::Elsif | Keyword::Until | Keyword::Type)
}

fn is_sync_keyword(k: Keyword) -> bool {
    is_list_end_keyword(k)
        || matches!(k, Keyword::If | Keyword::Case | Keyword::For | Keyword::While | Keyword::Repeat | Keyword::Begin)
}

/// Maximum edit distance at which an identifier is taken to be a misspelled
/// keyword during recovery.
fn fuzzy_matches(word: &str, kw: Keyword) -> bool {
    let word = word.to_ascii_uppercase();
    let target = kw.as_str();
    let limit = if target.len() <= 3 { 1 } else { 2 };
    word.len() >= 2 && word != target && strsim::levenshtein(&word, target) <= limit
}

impl<'t> Parser<'t> {
    // ---- token access -------------------------------------------------

    fn cur(&self) -> Option<&'t Token> {
        self.toks.get(self.pos).copied()
    }

    fn peek(&self, n: usize) -> Option<&'t Token> {
        self.toks.get(self.pos + n).copied()
    }

    fn cur_span(&self) -> Span {
        self.cur().map_or(self.eof, |t| t.span)
    }

    fn prev_span(&self) -> Span {
        if self.pos == 0 {
            self.cur_span()
        } else {
            self.toks[self.pos - 1].span
        }
    }

    fn span_from(&self, start: Span) -> Span {
        if self.pos == 0 || self.toks[self.pos - 1].span.offset < start.offset {
            Span { len: 0, ..start }
        } else {
            start.to(self.prev_span())
        }
    }

    fn bump(&mut self) -> Option<&'t Token> {
        let t = self.cur();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn at_kw(&self, kw: Keyword) -> bool {
        self.cur().is_some_and(|t| t.is_keyword(kw))
    }

    fn cur_kw(&self) -> Option<Keyword> {
        self.cur().and_then(|t| t.keyword())
    }

    fn at_sym(&self, sym: &str) -> bool {
        self.cur().is_some_and(|t| t.is_symbol(sym))
    }

    fn peek_is_sym(&self, n: usize, sym: &str) -> bool {
        self.peek(n).is_some_and(|t| t.is_symbol(sym))
    }

    fn at_ident(&self) -> bool {
        self.cur().is_some_and(|t| t.kind == TokenKind::Identifier)
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn found(&self) -> String {
        self.cur().map_or_else(|| "end of file".to_string(), |t| t.describe())
    }

    // ---- diagnostics --------------------------------------------------

    fn report(&mut self, diag: Diagnostic) {
        if self.last_error_at == Some(diag.offset) {
            return;
        }
        self.last_error_at = Some(diag.offset);
        self.diags.push(diag);
    }

    fn error(&mut self, code: Code, span: Span, message: String) {
        self.report(Diagnostic::new(code, span, message));
    }

    fn error_hint(&mut self, code: Code, span: Span, message: String, hint: String) {
        self.report(Diagnostic::new(code, span, message).with_hint(hint));
    }

    /// Warnings never suppress a later error at the same position.
    fn warn(&mut self, code: Code, span: Span, message: String) {
        self.diags.push(Diagnostic::new(code, span, message));
    }

    // ---- recovery -----------------------------------------------------

    /// Skips to just after the next `;`, or to (not past) the next block
    /// keyword or VAR-block boundary.
    fn synchronize(&mut self) {
        let start = self.pos;
        while let Some(t) = self.cur() {
            if t.is_symbol(";") {
                self.pos += 1;
                return;
            }
            if let Some(k) = t.keyword() {
                if is_sync_keyword(k) && self.pos > start {
                    return;
                }
                if is_list_end_keyword(k) {
                    return;
                }
            }
            self.pos += 1;
        }
    }

    fn expect_sym(&mut self, sym: &str, context: &str) -> bool {
        if self.eat_sym(sym) {
            return true;
        }
        let msg = format!("expected '{sym}' {context}, found {}", self.found());
        self.error(Code::ExpectedToken, self.cur_span(), msg);
        false
    }

    /// Expects a keyword inside a statement header. A near-miss identifier
    /// (`THN` for `THEN`) is consumed as the keyword; otherwise the keyword
    /// is searched for on the rest of the header and skipped to.
    fn expect_header_kw(&mut self, kw: Keyword, context: &str) {
        if self.eat_kw(kw) {
            return;
        }
        let span = self.cur_span();
        if let Some(t) = self.cur() {
            if t.kind == TokenKind::Identifier && fuzzy_matches(&t.lexeme, kw) {
                let msg = format!("expected '{kw}' {context}, found {}", t.describe());
                self.error_hint(Code::ExpectedToken, span, msg, format!("did you mean '{kw}'?"));
                self.pos += 1;
                return;
            }
        }
        let msg = format!("expected '{kw}' {context}, found {}", self.found());
        self.error(Code::ExpectedToken, span, msg);
        let mut i = self.pos;
        while let Some(t) = self.toks.get(i) {
            if t.is_keyword(kw) {
                self.pos = i + 1;
                return;
            }
            if t.is_symbol(";") || t.keyword().is_some_and(is_sync_keyword) {
                return;
            }
            i += 1;
        }
    }

    /// Closes a block opened by `opener` at `open_span`.
    fn end_block(&mut self, kw: Keyword, opener: &str, open_span: Span) {
        if self.eat_kw(kw) {
            self.eat_sym(";");
            return;
        }
        let span = self.cur_span();
        if let Some(t) = self.cur() {
            if t.kind == TokenKind::Identifier && fuzzy_matches(&t.lexeme, kw) {
                let msg = format!("expected '{kw}' to close '{opener}', found {}", t.describe());
                self.error_hint(Code::ExpectedToken, span, msg, format!("did you mean '{kw}'?"));
                self.pos += 1;
                self.eat_sym(";");
                return;
            }
        }
        let msg = format!("missing '{kw}' for '{opener}' opened at line {}, found {}", open_span.line, self.found());
        self.error_hint(Code::UnclosedBlock, span, msg, format!("add '{kw};'"));
    }

    fn terminator(&mut self, what: &str) {
        if self.eat_sym(";") {
            return;
        }
        let msg = format!("expected ';' after {what}, found {}", self.found());
        self.error_hint(Code::MissingTerminator, self.cur_span(), msg, "insert ';'".to_string());
        if self.at_eof() || self.can_start_statement() || self.at_list_end() {
            return;
        }
        self.synchronize();
    }

    fn can_start_statement(&self) -> bool {
        match self.cur() {
            Some(t) => match t.kind {
                TokenKind::Identifier => true,
                TokenKind::Keyword(k) => matches!(
                    k,
                    Keyword::If
                        | Keyword::Case
                        | Keyword::For
                        | Keyword::While
                        | Keyword::Repeat
                        | Keyword::Exit
                        | Keyword::Continue
                        | Keyword::Return
                ),
                _ => t.is_symbol(";"),
            },
            None => false,
        }
    }

    fn at_list_end(&self) -> bool {
        self.cur_kw().is_some_and(is_list_end_keyword)
    }

    // ---- file level ---------------------------------------------------

    fn file(&mut self) -> SyntaxTree {
        let start = self.cur_span();
        let mut items = Vec::new();
        while let Some(t) = self.cur() {
            let before = self.pos;
            match t.kind {
                TokenKind::Keyword(k) if k.is_pou_start() => items.push(Item::Pou(self.pou())),
                TokenKind::Keyword(Keyword::Type) => items.push(Item::Types(self.type_block())),
                TokenKind::Keyword(Keyword::VarGlobal) => items.push(Item::Globals(self.var_block())),
                TokenKind::Keyword(k) if k.is_var_block() => {
                    let msg = format!("unexpected '{k}' outside of a program organization unit");
                    self.error(Code::UnexpectedTopLevel, t.span, msg);
                    self.var_block();
                }
                TokenKind::Keyword(k) if is_list_end_keyword(k) => {
                    self.error(
                        Code::MismatchedEnd,
                        t.span,
                        format!("unexpected '{k}' without a matching opening block"),
                    );
                    self.pos += 1;
                    self.eat_sym(";");
                }
                TokenKind::Identifier if self.at_unsupported_block() => self.unsupported_block(),
                _ if t.is_symbol(";") => {
                    self.pos += 1;
                }
                _ if self.can_start_statement() => {
                    if let Some(s) = self.statement() {
                        items.push(Item::Statement(s));
                    }
                }
                _ => {
                    self.error(Code::UnexpectedTopLevel, t.span, format!("unexpected {} at top level", t.describe()));
                    self.pos += 1;
                    self.synchronize();
                }
            }
            if self.pos == before {
                self.pos += 1;
            }
        }
        let span = if items.is_empty() { Span { len: 0, ..start } } else { self.span_from(start) };
        SyntaxTree { items, span }
    }

    fn at_unsupported_block(&self) -> bool {
        let Some(t) = self.cur() else { return false };
        let upper = t.lexeme.to_ascii_uppercase();
        UNSUPPORTED_BLOCKS.contains(&upper.as_str()) && self.peek(1).is_some_and(|n| n.kind == TokenKind::Identifier)
    }

    fn unsupported_block(&mut self) {
        let t = self.bump().expect("caller checked");
        let word = t.lexeme.to_ascii_uppercase();
        let end = format!("END_{word}");
        let close = self.toks[self.pos..]
            .iter()
            .position(|x| x.kind == TokenKind::Identifier && x.lexeme.eq_ignore_ascii_case(&end));
        match close {
            Some(n) => {
                self.warn(Code::UnsupportedConstruct, t.span, format!("unsupported construct '{word}' is ignored"));
                self.pos += n + 1;
                self.eat_sym(";");
            }
            None => {
                let msg = format!("unsupported construct '{word}' without a closing '{end}'");
                self.error(Code::UnsupportedSyntax, t.span, msg);
            }
        }
    }

    fn ident(&mut self, context: &str) -> Option<Ident> {
        match self.cur() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Some(Ident::from_lexeme(&t.lexeme, t.span))
            }
            _ => {
                let msg = format!("expected {context}, found {}", self.found());
                self.error(Code::ExpectedToken, self.cur_span(), msg);
                None
            }
        }
    }

    fn pou(&mut self) -> Pou {
        let start = self.cur_span();
        let kind = match self.bump().and_then(|t| t.keyword()) {
            Some(Keyword::Program) => PouKind::Program,
            Some(Keyword::Function) => PouKind::Function,
            _ => PouKind::FunctionBlock,
        };
        let (end_kw, opener): (&'static [Keyword], _) = match kind {
            PouKind::Program => (&[Keyword::EndProgram], "PROGRAM"),
            PouKind::Function => (&[Keyword::EndFunction], "FUNCTION"),
            PouKind::FunctionBlock => (&[Keyword::EndFunctionBlock], "FUNCTION_BLOCK"),
        };
        let name = self.ident(&format!("a name after '{opener}'")).unwrap_or_else(|| Ident::from_lexeme("", start));
        let mut return_type = None;
        if kind == PouKind::Function && self.eat_sym(":") {
            return_type = Some(self.type_spec());
        }
        self.skip_scl_header();
        let mut var_blocks = Vec::new();
        while let Some(k) = self.cur_kw() {
            if !k.is_var_block() {
                break;
            }
            var_blocks.push(self.var_block());
            self.skip_scl_header();
        }
        self.eat_kw(Keyword::Begin);
        let body = self.statements_until(end_kw);
        self.end_block(end_kw[0], opener, start);
        let span = self.span_from(start);
        Pou { kind, name, return_type, var_blocks, body, span }
    }

    /// TIA Portal source exports carry `VERSION : 0.1`-style header lines.
    fn skip_scl_header(&mut self) {
        loop {
            let Some(t) = self.cur() else { return };
            let is_attr = t.kind == TokenKind::Identifier
                && SCL_HEADER_ATTRIBUTES.contains(&t.lexeme.to_ascii_uppercase().as_str())
                && (self.peek_is_sym(1, ":") || self.peek_is_sym(1, "="));
            if !is_attr {
                return;
            }
            let line = t.span.line;
            while self.cur().is_some_and(|x| x.span.line == line) {
                self.pos += 1;
            }
        }
    }

    // ---- declarations -------------------------------------------------

    fn var_block(&mut self) -> VarBlock {
        let start = self.cur_span();
        let kw = self.bump().and_then(|t| t.keyword()).unwrap_or(Keyword::Var);
        let kind = match kw {
            Keyword::VarInput => VarKind::Input,
            Keyword::VarOutput => VarKind::Output,
            Keyword::VarInOut => VarKind::InOut,
            Keyword::VarGlobal => VarKind::Global,
            Keyword::VarTemp => VarKind::Temp,
            Keyword::VarExternal => VarKind::External,
            _ => VarKind::Var,
        };
        let qualifier = if self.eat_kw(Keyword::Constant) {
            Some(VarQualifier::Constant)
        } else if self.eat_kw(Keyword::Retain) {
            Some(VarQualifier::Retain)
        } else if self.eat_kw(Keyword::NonRetain) {
            Some(VarQualifier::NonRetain)
        } else {
            None
        };
        let decls = self.declarations(Keyword::EndVar, kind.keyword(), start);
        let span = self.span_from(start);
        VarBlock { kind, qualifier, decls, span }
    }

    /// Declarations up to and including `end`.
    fn declarations(&mut self, end: Keyword, opener: &str, open_span: Span) -> Vec<VarDecl> {
        let mut decls = Vec::new();
        loop {
            let before = self.pos;
            match self.cur() {
                Some(t) if t.is_keyword(end) => {
                    self.pos += 1;
                    // After END_STRUCT the `;` belongs to the enclosing declaration.
                    if end != Keyword::EndStruct {
                        self.eat_sym(";");
                    }
                    break;
                }
                Some(t) if t.kind == TokenKind::Identifier => {
                    if t.kind == TokenKind::Identifier && fuzzy_matches(&t.lexeme, end) {
                        let msg = format!("expected '{end}' to close '{opener}', found {}", t.describe());
                        self.error_hint(Code::ExpectedToken, t.span, msg, format!("did you mean '{end}'?"));
                        self.pos += 1;
                        self.eat_sym(";");
                        break;
                    }
                    // `name :=` or `name(` is a statement: the block was never closed.
                    if self.peek_is_sym(1, ":=") || self.peek_is_sym(1, "(") {
                        self.end_block(end, opener, open_span);
                        break;
                    }
                    match self.declaration() {
                        Some(d) => decls.push(d),
                        None => self.sync_declaration(end),
                    }
                }
                Some(t) if t.kind == TokenKind::Keyword(Keyword::Begin) || t.keyword().is_some_and(is_sync_keyword) => {
                    self.end_block(end, opener, open_span);
                    break;
                }
                None => {
                    self.end_block(end, opener, open_span);
                    break;
                }
                Some(t) => {
                    let msg = format!("expected a variable declaration, found {}", t.describe());
                    self.error(Code::InvalidDeclaration, t.span, msg);
                    self.pos += 1;
                    self.sync_declaration(end);
                }
            }
            if self.pos == before {
                self.pos += 1;
            }
        }
        decls
    }

    fn sync_declaration(&mut self, end: Keyword) {
        while let Some(t) = self.cur() {
            if t.is_symbol(";") {
                self.pos += 1;
                return;
            }
            if t.is_keyword(end) || t.keyword().is_some_and(is_sync_keyword) {
                return;
            }
            self.pos += 1;
        }
    }

    fn declaration(&mut self) -> Option<VarDecl> {
        let start = self.cur_span();
        let mut names = vec![self.ident("a variable name")?];
        while self.eat_sym(",") {
            names.push(self.ident("a variable name after ','")?);
        }
        let mut location = None;
        if self.eat_kw(Keyword::At) {
            location = Some(self.ident("a direct address after 'AT'")?);
        }
        if !self.eat_sym(":") {
            let msg = format!("expected ':' after variable name '{}', found {}", names[0].name, self.found());
            self.error(Code::InvalidDeclaration, self.cur_span(), msg);
            return None;
        }
        let ty = self.type_spec();
        let init = if self.eat_sym(":=") { Some(self.initializer()) } else { None };
        let closed_struct = matches!(ty, TypeSpec::Struct { .. }) && init.is_none();
        if !self.eat_sym(";") && !closed_struct {
            let msg = format!("expected ';' after declaration, found {}", self.found());
            self.error_hint(Code::MissingTerminator, self.cur_span(), msg, "insert ';'".to_string());
            let resumable =
                self.at_eof() || self.at_ident() || self.cur_kw().is_some_and(|k| k.is_block_end() || k.is_var_block());
            if !resumable {
                return None;
            }
        }
        let span = self.span_from(start);
        Some(VarDecl { names, location, ty, init, span })
    }

    fn type_spec(&mut self) -> TypeSpec {
        let start = self.cur_span();
        let Some(t) = self.cur() else {
            self.error(Code::ExpectedToken, start, "expected a type, found end of file".to_string());
            return TypeSpec::Error(start);
        };
        match t.kind {
            TokenKind::Keyword(Keyword::Array) => {
                self.pos += 1;
                let mut ranges = Vec::new();
                if self.expect_sym("[", "after 'ARRAY'") {
                    loop {
                        if self.at_sym("*") {
                            let span = self.cur_span();
                            self.error(
                                Code::UnsupportedSyntax,
                                span,
                                "variable-length array bounds are not supported".to_string(),
                            );
                            self.pos += 1;
                        } else {
                            let lo = self.expr();
                            self.expect_sym("..", "in array bounds");
                            let hi = self.expr();
                            ranges.push((lo, hi));
                        }
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym("]", "after array bounds");
                }
                if !self.eat_kw(Keyword::Of) {
                    let msg = format!("expected 'OF' after array bounds, found {}", self.found());
                    self.error(Code::ExpectedToken, self.cur_span(), msg);
                }
                let element = Box::new(self.type_spec());
                TypeSpec::Array { ranges, element, span: self.span_from(start) }
            }
            TokenKind::Keyword(Keyword::Struct) => {
                self.pos += 1;
                let fields = self.declarations(Keyword::EndStruct, "STRUCT", start);
                TypeSpec::Struct { fields, span: self.span_from(start) }
            }
            _ if t.is_symbol("(") => {
                self.pos += 1;
                let mut values = Vec::new();
                while let Some(name) = self.ident("an enumeration value") {
                    let value = if self.eat_sym(":=") { Some(self.expr()) } else { None };
                    values.push((name, value));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(")", "after enumeration values");
                TypeSpec::Enum { values, span: self.span_from(start) }
            }
            TokenKind::Identifier => {
                let upper = t.lexeme.to_ascii_uppercase();
                if upper == "STRING" || upper == "WSTRING" {
                    self.pos += 1;
                    let mut length = None;
                    for (open, close) in [("[", "]"), ("(", ")")] {
                        if self.eat_sym(open) {
                            length = Some(Box::new(self.expr()));
                            self.expect_sym(close, "after string length");
                            break;
                        }
                    }
                    return TypeSpec::String { wide: upper == "WSTRING", length, span: self.span_from(start) };
                }
                if upper == "REF_TO" || (upper == "POINTER" && self.peek(1).is_some_and(|n| n.is_keyword(Keyword::To)))
                {
                    self.pos += if upper == "REF_TO" { 1 } else { 2 };
                    self.warn(
                        Code::UnsupportedConstruct,
                        t.span,
                        format!("unsupported construct '{upper}' is treated as its target type"),
                    );
                    let inner = Box::new(self.type_spec());
                    return TypeSpec::Reference { inner, span: self.span_from(start) };
                }
                let constructor = self.peek(1).is_some_and(|n| n.is_keyword(Keyword::Of) || n.is_symbol("("));
                if constructor {
                    let msg = format!("unknown type constructor '{}'", t.lexeme);
                    let hint = "use ARRAY[lo..hi] OF <type> or a STRUCT".to_string();
                    self.error_hint(Code::UnknownTypeConstructor, t.span, msg, hint);
                    while let Some(x) = self.cur() {
                        if x.is_symbol(";") || x.is_symbol(":=") || x.keyword().is_some_and(is_sync_keyword) {
                            break;
                        }
                        self.pos += 1;
                    }
                    return TypeSpec::Error(self.span_from(start));
                }
                self.pos += 1;
                TypeSpec::Named(Ident::from_lexeme(&t.lexeme, t.span))
            }
            _ => {
                self.error(Code::ExpectedToken, start, format!("expected a type, found {}", t.describe()));
                TypeSpec::Error(Span { len: 0, ..start })
            }
        }
    }

    fn initializer(&mut self) -> Initializer {
        let start = self.cur_span();
        if self.eat_sym("[") {
            let mut items = Vec::new();
            loop {
                if self.at_sym("]") {
                    break;
                }
                if self.at_sym("(") {
                    items.push(ArrayInit { repeat: None, value: Some(self.initializer()) });
                } else {
                    let e = self.expr();
                    if self.eat_sym("(") {
                        let value = if self.at_sym(")") { None } else { Some(self.initializer()) };
                        self.expect_sym(")", "after repeated initial value");
                        items.push(ArrayInit { repeat: Some(e), value });
                    } else {
                        items.push(ArrayInit { repeat: None, value: Some(Initializer::Expr(e)) });
                    }
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym("]", "after array initializer");
            return Initializer::Array { items, span: self.span_from(start) };
        }
        let struct_init = self.at_sym("(")
            && self.peek(1).is_some_and(|t| t.kind == TokenKind::Identifier)
            && self.peek_is_sym(2, ":=");
        if struct_init {
            self.pos += 1;
            let mut fields = Vec::new();
            while let Some(name) = self.ident("a field name") {
                self.expect_sym(":=", "after field name");
                fields.push((name, self.initializer()));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")", "after structure initializer");
            return Initializer::Struct { fields, span: self.span_from(start) };
        }
        Initializer::Expr(self.expr())
    }

    fn type_block(&mut self) -> TypeBlock {
        let start = self.cur_span();
        self.pos += 1;
        let mut decls = Vec::new();
        loop {
            let before = self.pos;
            match self.cur() {
                Some(t) if t.is_keyword(Keyword::EndType) => {
                    self.pos += 1;
                    self.eat_sym(";");
                    break;
                }
                Some(t) if t.kind == TokenKind::Identifier => {
                    let dstart = t.span;
                    let name = Ident::from_lexeme(&t.lexeme, t.span);
                    self.pos += 1;
                    if !self.eat_sym(":") {
                        let msg = format!("expected ':' after type name '{}', found {}", name.name, self.found());
                        self.error(Code::InvalidDeclaration, self.cur_span(), msg);
                        self.sync_declaration(Keyword::EndType);
                        continue;
                    }
                    let spec = self.type_spec();
                    let init = if self.eat_sym(":=") { Some(self.initializer()) } else { None };
                    if matches!(spec, TypeSpec::Struct { .. }) && init.is_none() {
                        self.eat_sym(";");
                    } else {
                        self.terminator("type declaration");
                    }
                    decls.push(TypeDecl { name, spec, init, span: self.span_from(dstart) });
                }
                _ => {
                    self.end_block(Keyword::EndType, "TYPE", start);
                    break;
                }
            }
            if self.pos == before {
                self.pos += 1;
            }
        }
        TypeBlock { decls, span: self.span_from(start) }
    }

    // ---- statements ---------------------------------------------------

    fn in_closers(&self, k: Keyword) -> bool {
        self.closers.iter().any(|set| set.contains(&k))
    }

    fn innermost_fuzzy_closer(&self) -> bool {
        let (Some(t), Some(set)) = (self.cur(), self.closers.last()) else { return false };
        t.kind == TokenKind::Identifier
            && !self.peek_is_sym(1, ":=")
            && !self.peek_is_sym(1, "(")
            && set.iter().any(|k| fuzzy_matches(&t.lexeme, *k))
    }

    fn at_case_label(&self) -> bool {
        if !self.closers.last().is_some_and(|s| s.contains(&Keyword::EndCase)) {
            return false;
        }
        let mut i = self.pos;
        let mut seen = false;
        while let Some(t) = self.toks.get(i) {
            let label_part =
                matches!(t.kind, TokenKind::IntegerLiteral | TokenKind::TypedLiteral | TokenKind::Identifier)
                    || t.is_symbol("-")
                    || t.is_symbol("+")
                    || t.is_symbol("..")
                    || t.is_symbol(",")
                    || t.is_symbol(".");
            if !label_part {
                return seen && t.is_symbol(":");
            }
            seen = true;
            i += 1;
        }
        false
    }

    fn statements_until(&mut self, closers: &'static [Keyword]) -> Vec<Stmt> {
        self.closers.push(closers);
        let body = self.statements();
        self.closers.pop();
        body
    }

    fn statements(&mut self) -> Vec<Stmt> {
        let mut out = Vec::new();
        while let Some(t) = self.cur() {
            if let Some(k) = t.keyword() {
                if is_list_end_keyword(k) {
                    if self.in_closers(k) || k.is_pou_start() || k.is_var_block() || k == Keyword::Type {
                        break;
                    }
                    self.error(
                        Code::MismatchedEnd,
                        t.span,
                        format!("unexpected '{k}' without a matching opening block"),
                    );
                    self.pos += 1;
                    self.eat_sym(";");
                    continue;
                }
            }
            if self.innermost_fuzzy_closer() || self.at_case_label() {
                break;
            }
            if t.kind == TokenKind::Identifier && self.at_unsupported_block() {
                self.unsupported_block();
                continue;
            }
            let before = self.pos;
            if let Some(s) = self.statement() {
                out.push(s);
            }
            if self.pos == before {
                self.pos += 1;
            }
        }
        out
    }

    fn statement(&mut self) -> Option<Stmt> {
        let start = self.cur_span();
        let t = self.cur()?;
        let kind = match t.kind {
            TokenKind::Keyword(Keyword::If) => self.if_statement(start),
            TokenKind::Keyword(Keyword::Case) => self.case_statement(start),
            TokenKind::Keyword(Keyword::For) => self.for_statement(start),
            TokenKind::Keyword(Keyword::While) => self.while_statement(start),
            TokenKind::Keyword(Keyword::Repeat) => self.repeat_statement(start),
            TokenKind::Keyword(k @ (Keyword::Exit | Keyword::Continue | Keyword::Return)) => {
                self.pos += 1;
                self.terminator(&format!("'{k}'"));
                match k {
                    Keyword::Exit => StmtKind::Exit,
                    Keyword::Continue => StmtKind::Continue,
                    _ => StmtKind::Return,
                }
            }
            TokenKind::Identifier => self.simple_statement()?,
            _ if t.is_symbol(";") => {
                self.pos += 1;
                StmtKind::Empty
            }
            _ => {
                self.error(Code::ExpectedStatement, t.span, format!("expected a statement, found {}", t.describe()));
                self.pos += 1;
                self.synchronize();
                return None;
            }
        };
        Some(Stmt { kind, span: self.span_from(start) })
    }

    fn simple_statement(&mut self) -> Option<StmtKind> {
        let target = self.postfix();
        if self.eat_sym(":=") {
            let value = self.expr();
            self.terminator("assignment");
            return Some(StmtKind::Assign { target, value });
        }
        if matches!(target.kind, ExprKind::Call { .. }) {
            self.terminator("call");
            return Some(StmtKind::Call(target));
        }
        let span = self.cur_span();
        if self.at_sym("=") {
            let msg = "expected ':=' for assignment, found '='".to_string();
            self.error_hint(Code::ExpectedToken, span, msg, "use ':=' to assign a value".to_string());
            self.pos += 1;
            let value = self.expr();
            self.terminator("assignment");
            return Some(StmtKind::Assign { target, value });
        }
        let name = target.root_ident().map_or_else(|| "expression".to_string(), |i| i.source_form());
        let msg = format!("expected ':=' or '(' after '{name}', found {}", self.found());
        self.error(Code::ExpectedToken, span, msg);
        self.synchronize();
        None
    }

    fn if_statement(&mut self, start: Span) -> StmtKind {
        self.pos += 1;
        let mut branches = Vec::new();
        let cond = self.expr();
        self.expect_header_kw(Keyword::Then, "after IF condition");
        const CLOSERS: &[Keyword] = &[Keyword::Elsif, Keyword::Else, Keyword::EndIf];
        branches.push((cond, self.statements_until(CLOSERS)));
        while self.eat_kw(Keyword::Elsif) {
            let cond = self.expr();
            self.expect_header_kw(Keyword::Then, "after ELSIF condition");
            branches.push((cond, self.statements_until(CLOSERS)));
        }
        let else_body = if self.eat_kw(Keyword::Else) { Some(self.statements_until(&[Keyword::EndIf])) } else { None };
        self.end_block(Keyword::EndIf, "IF", start);
        StmtKind::If { branches, else_body }
    }

    fn case_statement(&mut self, start: Span) -> StmtKind {
        self.pos += 1;
        let selector = self.expr();
        self.expect_header_kw(Keyword::Of, "after CASE selector");
        const CLOSERS: &[Keyword] = &[Keyword::Else, Keyword::EndCase];
        let mut arms = Vec::new();
        self.closers.push(CLOSERS);
        while let Some(t) = self.cur() {
            if t.keyword().is_some_and(is_list_end_keyword) || self.innermost_fuzzy_closer() {
                break;
            }
            if !self.at_case_label() {
                let msg = format!("expected a case label, found {}", t.describe());
                self.error(Code::ExpectedToken, t.span, msg);
                self.pos += 1;
                self.synchronize();
                continue;
            }
            let arm_start = t.span;
            let mut labels = Vec::new();
            loop {
                let lo = self.expr();
                if self.eat_sym("..") {
                    labels.push(CaseLabel::Range(lo, self.expr()));
                } else {
                    labels.push(CaseLabel::Single(lo));
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(":", "after case label");
            let body = self.statements();
            arms.push(CaseArm { labels, body, span: self.span_from(arm_start) });
        }
        self.closers.pop();
        let else_body =
            if self.eat_kw(Keyword::Else) { Some(self.statements_until(&[Keyword::EndCase])) } else { None };
        self.end_block(Keyword::EndCase, "CASE", start);
        StmtKind::Case { selector, arms, else_body }
    }

    fn for_statement(&mut self, start: Span) -> StmtKind {
        self.pos += 1;
        let var = self.ident("a loop variable after 'FOR'").unwrap_or_else(|| Ident::from_lexeme("", start));
        self.expect_sym(":=", "after FOR loop variable");
        let from = self.expr();
        self.expect_header_kw(Keyword::To, "in FOR statement");
        let to = self.expr();
        let by = if self.eat_kw(Keyword::By) { Some(self.expr()) } else { None };
        self.expect_header_kw(Keyword::Do, "in FOR statement");
        let body = self.statements_until(&[Keyword::EndFor]);
        self.end_block(Keyword::EndFor, "FOR", start);
        StmtKind::For { var, from, to, by, body }
    }

    fn while_statement(&mut self, start: Span) -> StmtKind {
        self.pos += 1;
        let cond = self.expr();
        self.expect_header_kw(Keyword::Do, "after WHILE condition");
        let body = self.statements_until(&[Keyword::EndWhile]);
        self.end_block(Keyword::EndWhile, "WHILE", start);
        StmtKind::While { cond, body }
    }

    fn repeat_statement(&mut self, start: Span) -> StmtKind {
        self.pos += 1;
        let body = self.statements_until(&[Keyword::Until, Keyword::EndRepeat]);
        let until = if self.eat_kw(Keyword::Until) {
            let e = self.expr();
            self.eat_sym(";");
            e
        } else {
            let msg = format!("expected 'UNTIL' in REPEAT statement, found {}", self.found());
            self.error(Code::ExpectedToken, self.cur_span(), msg);
            Expr { kind: ExprKind::Error, span: Span { len: 0, ..self.cur_span() } }
        };
        self.end_block(Keyword::EndRepeat, "REPEAT", start);
        StmtKind::Repeat { body, until }
    }

    // ---- expressions --------------------------------------------------

    pub fn expr(&mut self) -> Expr {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinaryOp> {
        let t = self.cur()?;
        Some(match t.kind {
            TokenKind::Keyword(Keyword::Or) => BinaryOp::Or,
            TokenKind::Keyword(Keyword::Xor) => BinaryOp::Xor,
            TokenKind::Keyword(Keyword::And) => BinaryOp::And,
            TokenKind::Keyword(Keyword::Mod) => BinaryOp::Mod,
            TokenKind::Operator => match t.lexeme.as_str() {
                "&" => BinaryOp::And,
                "=" => BinaryOp::Eq,
                "<>" => BinaryOp::Ne,
                "<" => BinaryOp::Lt,
                "<=" => BinaryOp::Le,
                ">" => BinaryOp::Gt,
                ">=" => BinaryOp::Ge,
                "+" => BinaryOp::Add,
                "-" => BinaryOp::Sub,
                "*" => BinaryOp::Mul,
                "/" => BinaryOp::Div,
                "**" => BinaryOp::Pow,
                _ => return None,
            },
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Expr {
        let start = self.cur_span();
        let mut lhs = self.unary();
        while let Some(op) = self.peek_binop() {
            if op.precedence() < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(op.precedence() + 1);
            lhs = Expr {
                kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) },
                span: self.span_from(start),
            };
        }
        lhs
    }

    fn unary(&mut self) -> Expr {
        let start = self.cur_span();
        let op = if self.at_kw(Keyword::Not) {
            Some(UnaryOp::Not)
        } else if self.at_sym("-") {
            Some(UnaryOp::Neg)
        } else if self.at_sym("+") {
            Some(UnaryOp::Plus)
        } else {
            None
        };
        match op {
            Some(op) => {
                self.pos += 1;
                let operand = Box::new(self.unary());
                Expr { kind: ExprKind::Unary { op, operand }, span: self.span_from(start) }
            }
            None => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Expr {
        let start = self.cur_span();
        let Some(t) = self.cur() else {
            self.error(Code::ExpectedExpression, self.eof, "expected an expression, found end of file".to_string());
            return Expr { kind: ExprKind::Error, span: self.eof };
        };
        let literal = |kind| ExprKind::Literal { kind, text: t.lexeme.clone() };
        let base = match t.kind {
            TokenKind::IntegerLiteral => literal(LiteralKind::Integer),
            TokenKind::RealLiteral => literal(LiteralKind::Real),
            TokenKind::TypedLiteral => literal(LiteralKind::Typed),
            TokenKind::StringLiteral => literal(LiteralKind::String),
            TokenKind::Keyword(Keyword::True | Keyword::False) => literal(LiteralKind::Bool),
            TokenKind::Identifier => ExprKind::Var(Ident::from_lexeme(&t.lexeme, t.span)),
            _ if t.is_symbol("(") => {
                self.pos += 1;
                let inner = self.expr();
                self.expect_sym(")", "to close parenthesized expression");
                return self.postfix_ops(Expr { kind: ExprKind::Paren(Box::new(inner)), span: self.span_from(start) });
            }
            _ => {
                self.error(Code::ExpectedExpression, t.span, format!("expected an expression, found {}", t.describe()));
                return Expr { kind: ExprKind::Error, span: Span { len: 0, ..t.span } };
            }
        };
        self.pos += 1;
        let is_var = matches!(base, ExprKind::Var(_));
        let e = Expr { kind: base, span: t.span };
        if is_var {
            self.postfix_ops(e)
        } else {
            e
        }
    }

    fn postfix_ops(&mut self, mut e: Expr) -> Expr {
        let start = e.span;
        loop {
            if self.at_sym(".") {
                self.pos += 1;
                let field = match self.cur() {
                    Some(t) if matches!(t.kind, TokenKind::Identifier | TokenKind::IntegerLiteral) => {
                        self.pos += 1;
                        Ident::from_lexeme(&t.lexeme, t.span)
                    }
                    _ => {
                        let msg = format!("expected a member name after '.', found {}", self.found());
                        self.error(Code::ExpectedToken, self.cur_span(), msg);
                        break;
                    }
                };
                e = Expr { kind: ExprKind::Member { base: Box::new(e), field }, span: self.span_from(start) };
            } else if self.at_sym("[") {
                self.pos += 1;
                let mut indices = vec![self.expr()];
                while self.eat_sym(",") {
                    indices.push(self.expr());
                }
                self.expect_sym("]", "after array index");
                e = Expr { kind: ExprKind::Index { base: Box::new(e), indices }, span: self.span_from(start) };
            } else if self.at_sym("^") {
                self.pos += 1;
                e = Expr { kind: ExprKind::Deref(Box::new(e)), span: self.span_from(start) };
            } else if self.at_sym("(") {
                self.pos += 1;
                let args = self.call_args();
                self.expect_sym(")", "to close argument list");
                e = Expr { kind: ExprKind::Call { callee: Box::new(e), args }, span: self.span_from(start) };
            } else {
                break;
            }
        }
        e
    }

    fn call_args(&mut self) -> Vec<Arg> {
        let mut args = Vec::new();
        if self.at_sym(")") {
            return args;
        }
        loop {
            let named = self.at_ident() && (self.peek_is_sym(1, ":=") || self.peek_is_sym(1, "=>"));
            let negated_out = self.at_kw(Keyword::Not)
                && self.peek(1).is_some_and(|t| t.kind == TokenKind::Identifier)
                && self.peek_is_sym(2, "=>");
            if named || negated_out {
                if negated_out {
                    self.pos += 1;
                }
                let t = self.bump().expect("checked");
                let name = Ident::from_lexeme(&t.lexeme, t.span);
                if self.eat_sym(":=") {
                    args.push(Arg::Named { name, value: self.expr() });
                } else {
                    self.pos += 1;
                    args.push(Arg::Output { name, target: self.expr(), negated: negated_out });
                }
            } else {
                args.push(Arg::Positional(self.expr()));
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        args
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;

    fn parse_src(src: &str) -> Parsed {
        parse(&tokenize(src).tokens)
    }

    fn codes(src: &str) -> Vec<(Code, u32)> {
        parse_src(src).diagnostics.iter().map(|d| (d.code, d.line)).collect()
    }

    #[test]
    fn function_block_with_var_block() {
        let src = "FUNCTION_BLOCK FB_Lamp\nVAR_INPUT\n  on : BOOL;\nEND_VAR\nVAR_OUTPUT\n  lamp : BOOL;\nEND_VAR\nlamp := on;\nEND_FUNCTION_BLOCK\n";
        let p = parse_src(src);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        assert_eq!(p.tree.pous().count(), 1);
        let pou = p.tree.pous().next().unwrap();
        assert_eq!(pou.kind, PouKind::FunctionBlock);
        assert_eq!(pou.var_blocks.len(), 2);
        assert_eq!(pou.body.len(), 1);
    }

    #[test]
    fn missing_semicolon_reported_at_end_if() {
        let src = "IF x THEN y := 1 END_IF";
        let p = parse_src(src);
        assert_eq!(p.diagnostics.len(), 1, "{:?}", p.diagnostics);
        let d = &p.diagnostics[0];
        assert_eq!(d.code, Code::MissingTerminator);
        assert_eq!((d.line, d.column), (1, 18));
    }

    #[test]
    fn tuple_type_is_unknown_constructor() {
        let src =
            "PROGRAM P\nVAR\n  componentHomeSlot: TUPLE OF (INT, INT);\n  x : INT;\nEND_VAR\nx := 1;\nEND_PROGRAM\n";
        let p = parse_src(src);
        assert_eq!(codes(src), vec![(Code::UnknownTypeConstructor, 3)]);
        let pou = p.tree.pous().next().unwrap();
        assert_eq!(pou.var_blocks[0].decls.len(), 2);
    }

    #[test]
    fn precedence_follows_the_operator_table() {
        let p = parse_src("x := a OR b AND NOT c = d + e * f ** -g;");
        let StmtKind::Assign { value, .. } = &p.tree.loose_statements().next().unwrap().kind else { panic!() };
        // OR at the root, AND below it, comparison below AND.
        let ExprKind::Binary { op: BinaryOp::Or, rhs, .. } = &value.kind else { panic!("{value:?}") };
        let ExprKind::Binary { op: BinaryOp::And, rhs, .. } = &rhs.kind else { panic!() };
        let ExprKind::Binary { op: BinaryOp::Eq, lhs, rhs } = &rhs.kind else { panic!() };
        assert!(matches!(lhs.kind, ExprKind::Unary { op: UnaryOp::Not, .. }));
        let ExprKind::Binary { op: BinaryOp::Add, rhs, .. } = &rhs.kind else { panic!() };
        let ExprKind::Binary { op: BinaryOp::Mul, rhs, .. } = &rhs.kind else { panic!() };
        let ExprKind::Binary { op: BinaryOp::Pow, rhs, .. } = &rhs.kind else { panic!() };
        assert!(matches!(rhs.kind, ExprKind::Unary { op: UnaryOp::Neg, .. }));
    }

    #[test]
    fn all_statement_forms() {
        let src = r#"
PROGRAM Main
VAR
  i : INT; arr : ARRAY[1..10] OF INT := [10(0)]; t : TON; s : STRING[20] := 'hi';
  st : STRUCT a : INT; b : BOOL; END_STRUCT;
END_VAR
FOR i := 1 TO 10 BY 1 DO
  arr[i] := i * 2;
  IF i > 5 THEN EXIT; END_IF;
END_FOR;
WHILE i > 0 DO i := i - 1; END_WHILE;
REPEAT i := i + 1; UNTIL i >= 3 END_REPEAT;
CASE i OF
  1, 2: st.a := 1;
  3..5: st.b := TRUE;
ELSE
  RETURN;
END_CASE;
t(IN := st.b, PT := T#5s);
IF t.Q THEN i := 0; ELSIF "RED BTN" THEN i := 1; ELSE i := 2; END_IF;
END_PROGRAM
"#;
        let p = parse_src(src);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        assert_eq!(p.tree.pous().next().unwrap().body.len(), 6);
    }

    #[test]
    fn independent_errors_are_all_reported() {
        let src = "x := ;\ny := 1 +;\nz := (2;\n:= 4;\nw := 5 6;\n";
        let errs = parse_src(src).diagnostics;
        let lines: Vec<u32> = errs.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 5], "{errs:?}");
    }

    #[test]
    fn missing_end_if_before_end_for() {
        let src = "PROGRAM P\nVAR i : INT; END_VAR\nFOR i := 1 TO 2 DO\n  IF i = 1 THEN\n    i := 2;\nEND_FOR;\nEND_PROGRAM\n";
        assert_eq!(codes(src), vec![(Code::UnclosedBlock, 6)]);
    }

    #[test]
    fn misspelled_keywords_recover() {
        assert_eq!(codes("IF a THN b := 1; END_IF;"), vec![(Code::ExpectedToken, 1)]);
        assert_eq!(codes("IF a THEN b := 1;\nEND_IIF;\n"), vec![(Code::ExpectedToken, 2)]);
        assert_eq!(codes("WHILE a DOO b := 1; END_WHILE;"), vec![(Code::ExpectedToken, 1)]);
    }

    #[test]
    fn unclosed_program_at_eof() {
        let src = "PROGRAM P\nVAR x : INT; END_VAR\nx := 1;\n";
        let d = parse_src(src).diagnostics;
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::UnclosedBlock);
        assert_eq!(d[0].line, 3);
    }

    #[test]
    fn missing_end_var_reported_at_body() {
        let src = "PROGRAM P\nVAR\n  x : INT;\nx := 1;\nEND_PROGRAM\n";
        assert_eq!(codes(src), vec![(Code::UnclosedBlock, 4)]);
    }

    #[test]
    fn unsupported_block_is_a_warning() {
        let src = "METHOD Foo\nVAR x : INT; END_VAR\nx := 1;\nEND_METHOD\n";
        let d = parse_src(src).diagnostics;
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::UnsupportedConstruct);
        assert!(!d[0].is_error());
    }

    #[test]
    fn assignment_with_equals_gets_hint() {
        let d = parse_src("x = 1;").diagnostics;
        assert_eq!(d.len(), 1);
        assert!(d[0].hint.is_some());
    }

    #[test]
    fn scl_header_and_begin() {
        let src = "FUNCTION_BLOCK \"HighBay\"\n{ S7_Optimized_Access := 'TRUE' }\nVERSION : 0.1\nVAR_INPUT\n  go : BOOL;\nEND_VAR\nBEGIN\n  #go := FALSE;\nEND_FUNCTION_BLOCK\n";
        let p = parse_src(src);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        assert_eq!(p.tree.pous().next().unwrap().name.name, "HighBay");
    }

    #[test]
    fn empty_and_comment_only() {
        assert!(parse_src("").tree.items.is_empty());
        let p = parse_src("(* nothing *)\n// here\n");
        assert!(p.tree.items.is_empty());
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn function_call_forms() {
        let src = "y := LIMIT(0, x, 10); f(a := 1, b => c, NOT d => e); z := arr[1, 2].field^;";
        let p = parse_src(src);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
    }
}
