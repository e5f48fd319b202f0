use crate::token::Span;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntaxTree {
    pub items: Vec<Item>,
    pub span: Span,
}

impl SyntaxTree {
    pub fn pous(&self) -> impl Iterator<Item = &Pou> {
        self.items.iter().filter_map(|i| match i {
            Item::Pou(p) => Some(p),
            _ => None,
        })
    }

    pub fn type_decls(&self) -> impl Iterator<Item = &TypeDecl> {
        self.items
            .iter()
            .filter_map(|i| match i {
                Item::Types(t) => Some(t.decls.iter()),
                _ => None,
            })
            .flatten()
    }

    pub fn loose_statements(&self) -> impl Iterator<Item = &Stmt> {
        self.items.iter().filter_map(|i| match i {
            Item::Statement(s) => Some(s),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Pou(Pou),
    Types(TypeBlock),
    Globals(VarBlock),
    /// A statement outside of any program organization unit. Parsing accepts
    /// these so that snippets can be checked; scope resolution rejects them.
    Statement(Stmt),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PouKind {
    Program,
    Function,
    FunctionBlock,
}

impl PouKind {
    pub fn keyword(self) -> &'static str {
        match self {
            PouKind::Program => "PROGRAM",
            PouKind::Function => "FUNCTION",
            PouKind::FunctionBlock => "FUNCTION_BLOCK",
        }
    }

    pub fn end_keyword(self) -> &'static str {
        match self {
            PouKind::Program => "END_PROGRAM",
            PouKind::Function => "END_FUNCTION",
            PouKind::FunctionBlock => "END_FUNCTION_BLOCK",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pou {
    pub kind: PouKind,
    pub name: Ident,
    pub return_type: Option<TypeSpec>,
    pub var_blocks: Vec<VarBlock>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl Pou {
    pub fn declarations(&self) -> impl Iterator<Item = (&VarBlock, &VarDecl)> {
        self.var_blocks.iter().flat_map(|b| b.decls.iter().map(move |d| (b, d)))
    }
}

/// An identifier as written. Quoted (`"RED BTN"`) and `#local` forms keep
/// their bare name in `name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub quoted: bool,
    pub local_prefix: bool,
    pub span: Span,
}

impl Ident {
    pub fn from_lexeme(lexeme: &str, span: Span) -> Ident {
        if let Some(inner) = lexeme.strip_prefix('"') {
            let name = inner.strip_suffix('"').unwrap_or(inner).to_string();
            Ident { name, quoted: true, local_prefix: false, span }
        } else if let Some(inner) = lexeme.strip_prefix('#') {
            Ident { name: inner.to_string(), quoted: false, local_prefix: true, span }
        } else {
            Ident { name: lexeme.to_string(), quoted: false, local_prefix: false, span }
        }
    }

    /// Lookup key. Plain names are case-insensitive; quoted names are matched
    /// exactly, but a quoted name whose content is a plain identifier also
    /// refers to the plain symbol (SCL allows `"x"` and `x` interchangeably).
    pub fn key(&self) -> String {
        name_key(&self.name, self.quoted)
    }

    pub fn is_direct_address(&self) -> bool {
        self.name.starts_with('%')
    }

    pub fn source_form(&self) -> String {
        if self.quoted {
            format!("\"{}\"", self.name)
        } else if self.local_prefix {
            format!("#{}", self.name)
        } else {
            self.name.clone()
        }
    }
}

pub fn name_key(name: &str, quoted: bool) -> String {
    let plain = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if quoted && !plain {
        format!("\"{name}\"")
    } else {
        name.to_ascii_uppercase()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Var,
    Input,
    Output,
    InOut,
    Global,
    Temp,
    External,
}

impl VarKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Var => "VAR",
            VarKind::Input => "VAR_INPUT",
            VarKind::Output => "VAR_OUTPUT",
            VarKind::InOut => "VAR_IN_OUT",
            VarKind::Global => "VAR_GLOBAL",
            VarKind::Temp => "VAR_TEMP",
            VarKind::External => "VAR_EXTERNAL",
        }
    }

    pub fn is_parameter(self) -> bool {
        matches!(self, VarKind::Input | VarKind::Output | VarKind::InOut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarQualifier {
    Constant,
    Retain,
    NonRetain,
}

impl VarQualifier {
    pub fn keyword(self) -> &'static str {
        match self {
            VarQualifier::Constant => "CONSTANT",
            VarQualifier::Retain => "RETAIN",
            VarQualifier::NonRetain => "NON_RETAIN",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub kind: VarKind,
    pub qualifier: Option<VarQualifier>,
    pub decls: Vec<VarDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub names: Vec<Ident>,
    /// Direct address from an `AT %IX0.0` clause.
    pub location: Option<Ident>,
    pub ty: TypeSpec,
    pub init: Option<Initializer>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeSpec {
    /// Elementary type, user type, or function block type.
    Named(Ident),
    String {
        wide: bool,
        length: Option<Box<Expr>>,
        span: Span,
    },
    Array {
        ranges: Vec<(Expr, Expr)>,
        element: Box<TypeSpec>,
        span: Span,
    },
    Struct {
        fields: Vec<VarDecl>,
        span: Span,
    },
    Enum {
        values: Vec<(Ident, Option<Expr>)>,
        span: Span,
    },
    /// `REF_TO T` / `POINTER TO T`; accepted with a warning.
    Reference {
        inner: Box<TypeSpec>,
        span: Span,
    },
    /// Placeholder after a reported error.
    Error(Span),
}

impl TypeSpec {
    pub fn span(&self) -> Span {
        match self {
            TypeSpec::Named(i) => i.span,
            TypeSpec::String { span, .. }
            | TypeSpec::Array { span, .. }
            | TypeSpec::Struct { span, .. }
            | TypeSpec::Enum { span, .. }
            | TypeSpec::Reference { span, .. }
            | TypeSpec::Error(span) => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    Expr(Expr),
    Array { items: Vec<ArrayInit>, span: Span },
    Struct { fields: Vec<(Ident, Initializer)>, span: Span },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayInit {
    pub repeat: Option<Expr>,
    pub value: Option<Initializer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeBlock {
    pub decls: Vec<TypeDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDecl {
    pub name: Ident,
    pub spec: TypeSpec,
    pub init: Option<Initializer>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign { target: Expr, value: Expr },
    Call(Expr),
    If { branches: Vec<(Expr, Vec<Stmt>)>, else_body: Option<Vec<Stmt>> },
    Case { selector: Expr, arms: Vec<CaseArm>, else_body: Option<Vec<Stmt>> },
    For { var: Ident, from: Expr, to: Expr, by: Option<Expr>, body: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    Repeat { body: Vec<Stmt>, until: Expr },
    Exit,
    Continue,
    Return,
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseArm {
    pub labels: Vec<CaseLabel>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseLabel {
    Single(Expr),
    Range(Expr, Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LiteralKind {
    Integer,
    Real,
    Typed,
    String,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Or,
    Xor,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

impl BinaryOp {
    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::Xor => 2,
            BinaryOp::And => 3,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 6,
            BinaryOp::Pow => 7,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "OR",
            BinaryOp::Xor => "XOR",
            BinaryOp::And => "AND",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "MOD",
            BinaryOp::Pow => "**",
        }
    }
}

/// Precedence of prefix operators: above every binary operator.
pub const UNARY_PRECEDENCE: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Positional(Expr),
    /// `name := value`
    Named {
        name: Ident,
        value: Expr,
    },
    /// `name => target`, optionally `NOT name => target`
    Output {
        name: Ident,
        target: Expr,
        negated: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Literal { kind: LiteralKind, text: String },
    Var(Ident),
    Member { base: Box<Expr>, field: Ident },
    Index { base: Box<Expr>, indices: Vec<Expr> },
    Deref(Box<Expr>),
    Call { callee: Box<Expr>, args: Vec<Arg> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Paren(Box<Expr>),
    Error,
}

impl Expr {
    /// Root variable of an access path such as `a.b[1].c`.
    pub fn root_ident(&self) -> Option<&Ident> {
        match &self.kind {
            ExprKind::Var(i) => Some(i),
            ExprKind::Member { base, .. } | ExprKind::Index { base, .. } | ExprKind::Deref(base) => base.root_ident(),
            _ => None,
        }
    }
}

/// Pre-order visit of every statement, nested ones included.
pub fn walk_statements<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { branches, else_body } => {
                for (_, body) in branches {
                    walk_statements(body, f);
                }
                if let Some(b) = else_body {
                    walk_statements(b, f);
                }
            }
            StmtKind::Case { arms, else_body, .. } => {
                for arm in arms {
                    walk_statements(&arm.body, f);
                }
                if let Some(b) = else_body {
                    walk_statements(b, f);
                }
            }
            StmtKind::For { body, .. } | StmtKind::While { body, .. } | StmtKind::Repeat { body, .. } => {
                walk_statements(body, f)
            }
            _ => {}
        }
    }
}

impl SyntaxTree {
    /// Every statement in the tree in source order, nested ones included.
    pub fn all_statements(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        for item in &self.items {
            match item {
                Item::Pou(p) => walk_statements(&p.body, &mut |s| out.push(s)),
                Item::Statement(s) => walk_statements(std::slice::from_ref(s), &mut |s| out.push(s)),
                _ => {}
            }
        }
        out
    }
}
