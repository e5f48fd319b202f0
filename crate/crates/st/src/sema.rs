//! Scope, arity and unknown-type checks. No type inference is attempted:
//! member accesses are checked at their root only, and expression types
//! are never compared.

use std::collections::HashMap;

use crate::ast::*;
use crate::builtins;
use crate::diagnostic::{Code, Diagnostic};
use crate::token::Span;

#[derive(Debug, Clone)]
enum Global {
    Function { inputs: Vec<String>, outputs: Vec<String> },
    FunctionBlock { params: Vec<String> },
    Program,
    Type,
    EnumValue,
    Var { ty: Option<String> },
}

#[derive(Debug, Clone)]
struct Local {
    /// Key of the declared named type, when the type is a plain name.
    ty: Option<String>,
}

pub fn resolve(tree: &SyntaxTree) -> Vec<Diagnostic> {
    let mut r = Resolver { globals: HashMap::new(), diags: Vec::new() };
    r.collect_globals(tree);
    for item in &tree.items {
        match item {
            Item::Pou(p) => r.pou(p),
            Item::Types(block) => {
                let scope = HashMap::new();
                for d in &block.decls {
                    r.type_spec(&d.spec, &scope);
                    if let Some(init) = &d.init {
                        r.initializer(init, &scope);
                    }
                }
            }
            Item::Globals(block) => {
                let scope = HashMap::new();
                for d in &block.decls {
                    r.type_spec(&d.ty, &scope);
                    if let Some(init) = &d.init {
                        r.initializer(init, &scope);
                    }
                }
            }
            Item::Statement(_) => {}
        }
    }
    if let Some(first) = tree.loose_statements().next() {
        r.diags.push(
            Diagnostic::new(
                Code::StatementOutsidePou,
                first.span,
                "statement outside of a program organization unit".to_string(),
            )
            .with_hint("wrap the statements in a PROGRAM, FUNCTION or FUNCTION_BLOCK"),
        );
    }
    r.diags
}

struct Resolver {
    globals: HashMap<String, (Global, Span)>,
    diags: Vec<Diagnostic>,
}

fn params_of(pou: &Pou, pred: impl Fn(VarKind) -> bool) -> Vec<String> {
    pou.declarations().filter(|(b, _)| pred(b.kind)).flat_map(|(_, d)| d.names.iter().map(|n| n.key())).collect()
}

fn type_key(ty: &TypeSpec) -> Option<String> {
    match ty {
        TypeSpec::Named(i) => Some(i.key()),
        TypeSpec::Reference { inner, .. } => type_key(inner),
        _ => None,
    }
}

impl Resolver {
    fn declare_global(&mut self, name: &Ident, sym: Global) {
        let key = name.key();
        if let Some((_, first)) = self.globals.get(&key) {
            let msg = format!("duplicate declaration of '{}' (first declared at line {})", name.name, first.line);
            self.diags.push(Diagnostic::new(Code::DuplicateDeclaration, name.span, msg));
            return;
        }
        self.globals.insert(key, (sym, name.span));
    }

    fn collect_globals(&mut self, tree: &SyntaxTree) {
        for item in &tree.items {
            match item {
                Item::Pou(p) => {
                    let sym = match p.kind {
                        PouKind::Function => Global::Function {
                            inputs: params_of(p, |k| matches!(k, VarKind::Input | VarKind::InOut)),
                            outputs: params_of(p, |k| matches!(k, VarKind::Output | VarKind::InOut)),
                        },
                        PouKind::FunctionBlock => Global::FunctionBlock { params: params_of(p, VarKind::is_parameter) },
                        PouKind::Program => Global::Program,
                    };
                    if !p.name.name.is_empty() {
                        self.declare_global(&p.name, sym);
                    }
                }
                Item::Types(block) => {
                    for d in &block.decls {
                        self.declare_global(&d.name, Global::Type);
                        if let TypeSpec::Enum { values, .. } = &d.spec {
                            for (v, _) in values {
                                self.globals.entry(v.key()).or_insert((Global::EnumValue, v.span));
                            }
                        }
                    }
                }
                Item::Globals(block) => {
                    for d in &block.decls {
                        for n in &d.names {
                            self.declare_global(n, Global::Var { ty: type_key(&d.ty) });
                        }
                    }
                }
                Item::Statement(_) => {}
            }
        }
    }

    fn is_fb_type(&self, key: &str) -> Option<Vec<String>> {
        if let Some((Global::FunctionBlock { params }, _)) = self.globals.get(key) {
            return Some(params.clone());
        }
        builtins::function_block_params(key).map(|p| p.iter().map(|s| s.to_string()).collect())
    }

    fn known_type_names(&self) -> Vec<String> {
        let mut names: Vec<String> = builtins::ELEMENTARY_TYPES.iter().map(|s| s.to_string()).collect();
        names.extend(builtins::function_block_names().map(str::to_string));
        names.extend(
            self.globals
                .iter()
                .filter(|(_, (g, _))| matches!(g, Global::Type | Global::FunctionBlock { .. }))
                .map(|(k, _)| k.clone()),
        );
        names.sort();
        names
    }

    fn type_spec(&mut self, ty: &TypeSpec, scope: &HashMap<String, Local>) {
        match ty {
            TypeSpec::Named(ident) => {
                let key = ident.key();
                if builtins::is_elementary_type(&key) || self.is_fb_type(&key).is_some() {
                    return;
                }
                match self.globals.get(&key) {
                    Some((Global::Type, _)) => {}
                    Some(_) => {
                        let msg = format!("'{}' is not a type", ident.name);
                        self.diags.push(Diagnostic::new(Code::UnknownType, ident.span, msg));
                    }
                    None => {
                        let mut d =
                            Diagnostic::new(Code::UnknownType, ident.span, format!("unknown type '{}'", ident.name));
                        if let Some(s) = suggest(&key, self.known_type_names().iter().map(String::as_str)) {
                            d = d.with_hint(format!("did you mean '{s}'?"));
                        }
                        self.diags.push(d);
                    }
                }
            }
            TypeSpec::String { length, .. } => {
                if let Some(len) = length {
                    self.expr(len, scope);
                }
            }
            TypeSpec::Array { ranges, element, .. } => {
                for (lo, hi) in ranges {
                    self.expr(lo, scope);
                    self.expr(hi, scope);
                }
                self.type_spec(element, scope);
            }
            TypeSpec::Struct { fields, .. } => {
                let mut seen: HashMap<String, Span> = HashMap::new();
                for f in fields {
                    for n in &f.names {
                        if let Some(first) = seen.get(&n.key()) {
                            let msg = format!("duplicate field '{}' (first declared at line {})", n.name, first.line);
                            self.diags.push(Diagnostic::new(Code::DuplicateDeclaration, n.span, msg));
                        } else {
                            seen.insert(n.key(), n.span);
                        }
                    }
                    self.type_spec(&f.ty, scope);
                }
            }
            TypeSpec::Enum { values, .. } => {
                for (_, v) in values {
                    if let Some(v) = v {
                        self.expr(v, scope);
                    }
                }
            }
            TypeSpec::Reference { inner, .. } => self.type_spec(inner, scope),
            TypeSpec::Error(_) => {}
        }
    }

    fn initializer(&mut self, init: &Initializer, scope: &HashMap<String, Local>) {
        match init {
            Initializer::Expr(e) => self.expr(e, scope),
            Initializer::Array { items, .. } => {
                for item in items {
                    if let Some(r) = &item.repeat {
                        self.expr(r, scope);
                    }
                    if let Some(v) = &item.value {
                        self.initializer(v, scope);
                    }
                }
            }
            // Field names belong to the structure type and are not resolved.
            Initializer::Struct { fields, .. } => {
                for (_, v) in fields {
                    self.initializer(v, scope);
                }
            }
        }
    }

    fn pou(&mut self, pou: &Pou) {
        let mut scope: HashMap<String, Local> = HashMap::new();
        let mut first_seen: HashMap<String, Span> = HashMap::new();
        if let (PouKind::Function, Some(ret)) = (pou.kind, &pou.return_type) {
            self.type_spec(ret, &scope);
            scope.insert(pou.name.key(), Local { ty: type_key(ret) });
        }
        for (_, decl) in pou.declarations() {
            for n in &decl.names {
                let key = n.key();
                if let Some(first) = first_seen.get(&key) {
                    let msg = format!("duplicate declaration of '{}' (first declared at line {})", n.name, first.line);
                    self.diags.push(Diagnostic::new(Code::DuplicateDeclaration, n.span, msg));
                    continue;
                }
                first_seen.insert(key.clone(), n.span);
                scope.insert(key, Local { ty: type_key(&decl.ty) });
            }
        }
        for (_, decl) in pou.declarations() {
            self.type_spec(&decl.ty, &scope);
            if let Some(init) = &decl.init {
                self.initializer(init, &scope);
            }
        }
        self.statements(&pou.body, &scope);
    }

    fn statements(&mut self, stmts: &[Stmt], scope: &HashMap<String, Local>) {
        for s in stmts {
            self.statement(s, scope);
        }
    }

    fn statement(&mut self, s: &Stmt, scope: &HashMap<String, Local>) {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                self.expr(target, scope);
                self.expr(value, scope);
            }
            StmtKind::Call(e) => self.expr(e, scope),
            StmtKind::If { branches, else_body } => {
                for (cond, body) in branches {
                    self.expr(cond, scope);
                    self.statements(body, scope);
                }
                if let Some(b) = else_body {
                    self.statements(b, scope);
                }
            }
            StmtKind::Case { selector, arms, else_body } => {
                self.expr(selector, scope);
                for arm in arms {
                    for label in &arm.labels {
                        match label {
                            CaseLabel::Single(e) => self.expr(e, scope),
                            CaseLabel::Range(a, b) => {
                                self.expr(a, scope);
                                self.expr(b, scope);
                            }
                        }
                    }
                    self.statements(&arm.body, scope);
                }
                if let Some(b) = else_body {
                    self.statements(b, scope);
                }
            }
            StmtKind::For { var, from, to, by, body } => {
                if !var.name.is_empty() {
                    self.name(var, scope);
                }
                self.expr(from, scope);
                self.expr(to, scope);
                if let Some(by) = by {
                    self.expr(by, scope);
                }
                self.statements(body, scope);
            }
            StmtKind::While { cond, body } => {
                self.expr(cond, scope);
                self.statements(body, scope);
            }
            StmtKind::Repeat { body, until } => {
                self.statements(body, scope);
                self.expr(until, scope);
            }
            StmtKind::Exit | StmtKind::Continue | StmtKind::Return | StmtKind::Empty => {}
        }
    }

    fn name(&mut self, ident: &Ident, scope: &HashMap<String, Local>) {
        if ident.is_direct_address() {
            return;
        }
        let key = ident.key();
        if scope.contains_key(&key) || self.globals.contains_key(&key) {
            return;
        }
        let mut d =
            Diagnostic::new(Code::UndeclaredIdentifier, ident.span, format!("undeclared identifier '{}'", ident.name));
        let candidates = scope.keys().chain(self.globals.keys()).map(String::as_str);
        if let Some(s) = suggest(&key, candidates) {
            d = d.with_hint(format!("did you mean '{s}'?"));
        } else {
            d = d.with_hint("declare it in a VAR block");
        }
        self.diags.push(d);
    }

    fn expr(&mut self, e: &Expr, scope: &HashMap<String, Local>) {
        match &e.kind {
            ExprKind::Var(i) => self.name(i, scope),
            ExprKind::Member { base, .. } => self.expr(base, scope),
            ExprKind::Index { base, indices } => {
                self.expr(base, scope);
                for i in indices {
                    self.expr(i, scope);
                }
            }
            ExprKind::Deref(b) | ExprKind::Paren(b) => self.expr(b, scope),
            ExprKind::Unary { operand, .. } => self.expr(operand, scope),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.expr(lhs, scope);
                self.expr(rhs, scope);
            }
            ExprKind::Call { callee, args } => self.call(callee, args, scope),
            ExprKind::Literal { .. } | ExprKind::Error => {}
        }
    }

    fn args(&mut self, args: &[Arg], scope: &HashMap<String, Local>) {
        for a in args {
            match a {
                Arg::Positional(e) | Arg::Named { value: e, .. } => self.expr(e, scope),
                Arg::Output { target, .. } => self.expr(target, scope),
            }
        }
    }

    fn call(&mut self, callee: &Expr, args: &[Arg], scope: &HashMap<String, Local>) {
        self.args(args, scope);
        let ExprKind::Var(ident) = &callee.kind else {
            self.expr(callee, scope);
            return;
        };
        let key = ident.key();
        if let Some(local) = scope.get(&key) {
            match local.ty.as_deref().and_then(|t| self.is_fb_type(t).map(|p| (t.to_string(), p))) {
                Some((fb, params)) => self.fb_args(&fb, &params, args),
                None => {
                    let msg = format!("'{}' is not callable", ident.name);
                    self.diags.push(Diagnostic::new(Code::NotCallable, ident.span, msg));
                }
            }
            return;
        }
        match self.globals.get(&key).map(|(g, _)| g.clone()) {
            Some(Global::Function { inputs, outputs }) => self.function_args(ident, &inputs, &outputs, args),
            Some(Global::Var { ty }) => match ty.and_then(|t| self.is_fb_type(&t).map(|p| (t, p))) {
                Some((fb, params)) => self.fb_args(&fb, &params, args),
                None => {
                    let msg = format!("'{}' is not callable", ident.name);
                    self.diags.push(Diagnostic::new(Code::NotCallable, ident.span, msg));
                }
            },
            Some(Global::FunctionBlock { .. })
            | Some(Global::Type)
            | Some(Global::Program)
            | Some(Global::EnumValue) => {
                let msg = format!("'{}' is not callable; declare an instance and call that", ident.name);
                self.diags.push(Diagnostic::new(Code::NotCallable, ident.span, msg));
            }
            None => {
                if let Some((min, max)) = builtins::function_arity(&key) {
                    let n = args.len();
                    if n < min || max.is_some_and(|m| n > m) {
                        let expected = match max {
                            Some(m) if m == min => format!("{min}"),
                            Some(m) => format!("{min} to {m}"),
                            None => format!("at least {min}"),
                        };
                        let msg = format!("function '{}' expects {expected} argument(s), found {n}", ident.name);
                        self.diags.push(Diagnostic::new(Code::ArgumentCount, ident.span, msg));
                    }
                } else if builtins::function_block_params(&key).is_some() {
                    let msg = format!("'{}' is a function block type; declare an instance and call that", ident.name);
                    self.diags.push(Diagnostic::new(Code::NotCallable, ident.span, msg));
                } else {
                    let mut d = Diagnostic::new(
                        Code::UndeclaredIdentifier,
                        ident.span,
                        format!("undeclared function '{}'", ident.name),
                    );
                    let user_fns: Vec<String> = self
                        .globals
                        .iter()
                        .filter(|(_, (g, _))| matches!(g, Global::Function { .. }))
                        .map(|(k, _)| k.clone())
                        .collect();
                    let mut candidates: Vec<&str> = builtins::function_names().collect();
                    candidates.extend(user_fns.iter().map(String::as_str));
                    if let Some(s) = suggest(&key, candidates.into_iter()) {
                        d = d.with_hint(format!("did you mean '{s}'?"));
                    }
                    self.diags.push(d);
                }
            }
        }
    }

    fn function_args(&mut self, ident: &Ident, inputs: &[String], outputs: &[String], args: &[Arg]) {
        if args.iter().all(|a| matches!(a, Arg::Positional(_))) {
            if args.len() != inputs.len() {
                let msg =
                    format!("function '{}' expects {} argument(s), found {}", ident.name, inputs.len(), args.len());
                self.diags.push(Diagnostic::new(Code::ArgumentCount, ident.span, msg));
            }
            return;
        }
        for a in args {
            let (name, known) = match a {
                Arg::Named { name, .. } => (name, inputs.contains(&name.key())),
                Arg::Output { name, .. } => (name, outputs.contains(&name.key())),
                Arg::Positional(_) => continue,
            };
            if !known {
                let msg = format!("function '{}' has no parameter '{}'", ident.name, name.name);
                self.diags.push(Diagnostic::new(Code::UnknownParameter, name.span, msg));
            }
        }
    }

    fn fb_args(&mut self, fb: &str, params: &[String], args: &[Arg]) {
        for a in args {
            match a {
                Arg::Named { name, .. } | Arg::Output { name, .. } => {
                    if !params.contains(&name.key()) {
                        let mut d = Diagnostic::new(
                            Code::UnknownParameter,
                            name.span,
                            format!("function block '{fb}' has no parameter '{}'", name.name),
                        );
                        if let Some(s) = suggest(&name.key(), params.iter().map(String::as_str)) {
                            d = d.with_hint(format!("did you mean '{s}'?"));
                        }
                        self.diags.push(d);
                    }
                }
                Arg::Positional(e) => {
                    let msg = format!("function block '{fb}' must be called with named parameters");
                    self.diags.push(Diagnostic::new(Code::ArgumentCount, e.span, msg));
                }
            }
        }
    }
}

/// Closest candidate within edit distance 2, ties broken alphabetically.
fn suggest<'a>(key: &str, candidates: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut best: Option<(usize, &str)> = None;
    for c in candidates {
        if c == key {
            continue;
        }
        let d = strsim::levenshtein(key, c);
        if d > 2 || d >= key.len().max(1) {
            continue;
        }
        match best {
            Some((bd, bc)) if (bd, bc) <= (d, c) => {}
            _ => best = Some((d, c)),
        }
    }
    best.map(|(_, c)| c.to_string())
}
