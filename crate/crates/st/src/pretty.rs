//! Canonical Structured Text rendering of a syntax tree.
//!
//! Output re-parses to the same tree shape. Parentheses are emitted only
//! where precedence requires them, plus wherever the tree holds an explicit
//! `Paren` node. Comments are not part of the tree and are not reproduced.
//! Trees containing error nodes render with `?` placeholders.

use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "    ";

pub fn pretty(tree: &SyntaxTree) -> String {
    let mut out = String::new();
    for (i, item) in tree.items.iter().enumerate() {
        let loose = matches!(item, Item::Statement(_));
        let prev_loose = i > 0 && matches!(tree.items[i - 1], Item::Statement(_));
        if i > 0 && !(loose && prev_loose) {
            out.push('\n');
        }
        match item {
            Item::Pou(p) => pou(&mut out, p),
            Item::Types(t) => type_block(&mut out, t),
            Item::Globals(b) => var_block(&mut out, b, 0),
            Item::Statement(s) => statement(&mut out, s, 0),
        }
    }
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str(INDENT);
    }
}

fn pou(out: &mut String, p: &Pou) {
    out.push_str(p.kind.keyword());
    out.push(' ');
    out.push_str(&p.name.source_form());
    if let Some(ret) = &p.return_type {
        out.push_str(" : ");
        type_spec(out, ret, 0);
    }
    out.push('\n');
    for b in &p.var_blocks {
        var_block(out, b, 0);
    }
    for s in &p.body {
        statement(out, s, 1);
    }
    out.push_str(p.kind.end_keyword());
    out.push('\n');
}

fn var_block(out: &mut String, b: &VarBlock, level: usize) {
    indent(out, level);
    out.push_str(b.kind.keyword());
    if let Some(q) = b.qualifier {
        out.push(' ');
        out.push_str(q.keyword());
    }
    out.push('\n');
    for d in &b.decls {
        var_decl(out, d, level + 1);
    }
    indent(out, level);
    out.push_str("END_VAR\n");
}

fn var_decl(out: &mut String, d: &VarDecl, level: usize) {
    indent(out, level);
    let names: Vec<String> = d.names.iter().map(Ident::source_form).collect();
    out.push_str(&names.join(", "));
    if let Some(loc) = &d.location {
        out.push_str(" AT ");
        out.push_str(&loc.source_form());
    }
    out.push_str(" : ");
    type_spec(out, &d.ty, level);
    if let Some(init) = &d.init {
        out.push_str(" := ");
        initializer(out, init);
    }
    out.push_str(";\n");
}

fn type_block(out: &mut String, t: &TypeBlock) {
    out.push_str("TYPE\n");
    for d in &t.decls {
        indent(out, 1);
        out.push_str(&d.name.source_form());
        out.push_str(" : ");
        type_spec(out, &d.spec, 1);
        if let Some(init) = &d.init {
            out.push_str(" := ");
            initializer(out, init);
        }
        out.push_str(";\n");
    }
    out.push_str("END_TYPE\n");
}

fn type_spec(out: &mut String, t: &TypeSpec, level: usize) {
    match t {
        TypeSpec::Named(i) => out.push_str(&i.source_form()),
        TypeSpec::String { wide, length, .. } => {
            out.push_str(if *wide { "WSTRING" } else { "STRING" });
            if let Some(len) = length {
                out.push('[');
                out.push_str(&expr_string(len));
                out.push(']');
            }
        }
        TypeSpec::Array { ranges, element, .. } => {
            let ranges: Vec<String> =
                ranges.iter().map(|(lo, hi)| format!("{}..{}", expr_string(lo), expr_string(hi))).collect();
            let _ = write!(out, "ARRAY[{}] OF ", ranges.join(", "));
            type_spec(out, element, level);
        }
        TypeSpec::Struct { fields, .. } => {
            out.push_str("STRUCT\n");
            for f in fields {
                var_decl(out, f, level + 1);
            }
            indent(out, level);
            out.push_str("END_STRUCT");
        }
        TypeSpec::Enum { values, .. } => {
            let values: Vec<String> = values
                .iter()
                .map(|(name, v)| match v {
                    Some(v) => format!("{} := {}", name.source_form(), expr_string(v)),
                    None => name.source_form(),
                })
                .collect();
            let _ = write!(out, "({})", values.join(", "));
        }
        TypeSpec::Reference { inner, .. } => {
            out.push_str("REF_TO ");
            type_spec(out, inner, level);
        }
        TypeSpec::Error(_) => out.push('?'),
    }
}

fn initializer(out: &mut String, init: &Initializer) {
    match init {
        Initializer::Expr(e) => out.push_str(&expr_string(e)),
        Initializer::Array { items, .. } => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match (&item.repeat, &item.value) {
                    (Some(r), v) => {
                        out.push_str(&expr_string(r));
                        out.push('(');
                        if let Some(v) = v {
                            initializer(out, v);
                        }
                        out.push(')');
                    }
                    (None, Some(v)) => initializer(out, v),
                    (None, None) => {}
                }
            }
            out.push(']');
        }
        Initializer::Struct { fields, .. } => {
            out.push('(');
            for (i, (name, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&name.source_form());
                out.push_str(" := ");
                initializer(out, v);
            }
            out.push(')');
        }
    }
}

fn body(out: &mut String, stmts: &[Stmt], level: usize) {
    for s in stmts {
        statement(out, s, level);
    }
}

fn statement(out: &mut String, s: &Stmt, level: usize) {
    indent(out, level);
    match &s.kind {
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{} := {};", expr_string(target), expr_string(value));
        }
        StmtKind::Call(e) => {
            let _ = writeln!(out, "{};", expr_string(e));
        }
        StmtKind::If { branches, else_body } => {
            for (i, (cond, b)) in branches.iter().enumerate() {
                if i > 0 {
                    indent(out, level);
                }
                let kw = if i == 0 { "IF" } else { "ELSIF" };
                let _ = writeln!(out, "{kw} {} THEN", expr_string(cond));
                body(out, b, level + 1);
            }
            if let Some(b) = else_body {
                indent(out, level);
                out.push_str("ELSE\n");
                body(out, b, level + 1);
            }
            indent(out, level);
            out.push_str("END_IF;\n");
        }
        StmtKind::Case { selector, arms, else_body } => {
            let _ = writeln!(out, "CASE {} OF", expr_string(selector));
            for arm in arms {
                indent(out, level + 1);
                let labels: Vec<String> = arm
                    .labels
                    .iter()
                    .map(|l| match l {
                        CaseLabel::Single(e) => expr_string(e),
                        CaseLabel::Range(a, b) => format!("{}..{}", expr_string(a), expr_string(b)),
                    })
                    .collect();
                let _ = writeln!(out, "{}:", labels.join(", "));
                body(out, &arm.body, level + 2);
            }
            if let Some(b) = else_body {
                indent(out, level);
                out.push_str("ELSE\n");
                body(out, b, level + 1);
            }
            indent(out, level);
            out.push_str("END_CASE;\n");
        }
        StmtKind::For { var, from, to, by, body: b } => {
            let _ = write!(out, "FOR {} := {} TO {}", var.source_form(), expr_string(from), expr_string(to));
            if let Some(by) = by {
                let _ = write!(out, " BY {}", expr_string(by));
            }
            out.push_str(" DO\n");
            body(out, b, level + 1);
            indent(out, level);
            out.push_str("END_FOR;\n");
        }
        StmtKind::While { cond, body: b } => {
            let _ = writeln!(out, "WHILE {} DO", expr_string(cond));
            body(out, b, level + 1);
            indent(out, level);
            out.push_str("END_WHILE;\n");
        }
        StmtKind::Repeat { body: b, until } => {
            out.push_str("REPEAT\n");
            body(out, b, level + 1);
            indent(out, level);
            let _ = writeln!(out, "UNTIL {}", expr_string(until));
            indent(out, level);
            out.push_str("END_REPEAT;\n");
        }
        StmtKind::Exit => out.push_str("EXIT;\n"),
        StmtKind::Continue => out.push_str("CONTINUE;\n"),
        StmtKind::Return => out.push_str("RETURN;\n"),
        StmtKind::Empty => out.push_str(";\n"),
    }
}

/// Binding strength of the outermost operator of `e`.
fn strength(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => UNARY_PRECEDENCE,
        _ => u8::MAX,
    }
}

fn wrapped(e: &Expr, min: u8) -> String {
    if strength(e) < min {
        format!("({})", expr_string(e))
    } else {
        expr_string(e)
    }
}

/// Whether `e` can be followed by `.`, `[`, `^` or `(` without parentheses.
fn is_postfix_base(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Var(_)
            | ExprKind::Member { .. }
            | ExprKind::Index { .. }
            | ExprKind::Deref(_)
            | ExprKind::Call { .. }
            | ExprKind::Paren(_)
    )
}

fn postfix_base(e: &Expr) -> String {
    if is_postfix_base(e) {
        expr_string(e)
    } else {
        format!("({})", expr_string(e))
    }
}

/// Type as written in a declaration, e.g. `ARRAY[1..3] OF INT`.
pub fn type_string(t: &TypeSpec) -> String {
    let mut out = String::new();
    type_spec(&mut out, t, 0);
    out
}

pub fn expr_string(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Literal { text, .. } => text.clone(),
        ExprKind::Var(i) => i.source_form(),
        ExprKind::Member { base, field } => format!("{}.{}", postfix_base(base), field.source_form()),
        ExprKind::Index { base, indices } => {
            let idx: Vec<String> = indices.iter().map(expr_string).collect();
            format!("{}[{}]", postfix_base(base), idx.join(", "))
        }
        ExprKind::Deref(base) => format!("{}^", postfix_base(base)),
        ExprKind::Call { callee, args } => {
            let args: Vec<String> = args
                .iter()
                .map(|a| match a {
                    Arg::Positional(e) => expr_string(e),
                    Arg::Named { name, value } => format!("{} := {}", name.source_form(), expr_string(value)),
                    Arg::Output { name, target, negated } => {
                        let not = if *negated { "NOT " } else { "" };
                        format!("{not}{} => {}", name.source_form(), expr_string(target))
                    }
                })
                .collect();
            format!("{}({})", postfix_base(callee), args.join(", "))
        }
        ExprKind::Unary { op, operand } => {
            let inner = wrapped(operand, UNARY_PRECEDENCE);
            match op {
                UnaryOp::Not => format!("NOT {inner}"),
                UnaryOp::Neg => format!("-{inner}"),
                UnaryOp::Plus => format!("+{inner}"),
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            // Left-associative: the right operand needs strictly tighter binding.
            format!("{} {} {}", wrapped(lhs, p), op.symbol(), wrapped(rhs, p + 1))
        }
        ExprKind::Paren(inner) => format!("({})", expr_string(inner)),
        ExprKind::Error => "?".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::check;
    use crate::lexer::tokenize;
    use crate::parser::parse;

    fn round_trip(src: &str) -> String {
        let p = parse(&tokenize(src).tokens);
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        pretty(&p.tree)
    }

    #[test]
    fn minimal_parentheses() {
        let out = round_trip("x := (a + b) * c - (d - e) + f * g;");
        assert_eq!(out, "x := (a + b) * c - (d - e) + f * g;\n");
        let out = round_trip("x := NOT (a AND b) OR -c ** 2;");
        assert_eq!(out, "x := NOT (a AND b) OR -c ** 2;\n");
    }

    #[test]
    fn redundant_parentheses_survive() {
        assert_eq!(round_trip("x := (a * b) + c;"), "x := (a * b) + c;\n");
    }

    #[test]
    fn program_layout() {
        let src = "program p var x:int:=0; t : TON; end_var if x>1 then x:=0; elsif x=1 then t(IN:=TRUE, PT:=T#1s); else x:=x+1; end_if end_program";
        let out = round_trip(src);
        let expected = "PROGRAM p\nVAR\n    x : int := 0;\n    t : TON;\nEND_VAR\n    IF x > 1 THEN\n        x := 0;\n    ELSIF x = 1 THEN\n        t(IN := TRUE, PT := T#1s);\n    ELSE\n        x := x + 1;\n    END_IF;\nEND_PROGRAM\n";
        assert_eq!(out, expected);
        assert!(check(&out).pass);
    }

    #[test]
    fn fixpoint_on_all_constructs() {
        let src = "TYPE Mode : (IDLE, RUN := 5); Pt : STRUCT x, y : REAL := 1.5; END_STRUCT; END_TYPE\n\
                   FUNCTION_BLOCK FB\nVAR_INPUT m : Mode; END_VAR\nVAR_OUTPUT done : BOOL; END_VAR\n\
                   VAR arr : ARRAY[1..3, 0..1] OF INT := [2(0), 4(1)]; s : STRING[20] := 'a$'b'; p : Pt := (x := 1.0); END_VAR\n\
                   CASE m OF IDLE: done := FALSE; RUN, 7..9: FOR i := 1 TO 3 BY 1 DO arr[i, 0] := i MOD 2; END_FOR; ELSE RETURN; END_CASE;\n\
                   WHILE NOT done DO done := TRUE; EXIT; END_WHILE; REPEAT ; UNTIL done END_REPEAT;\nEND_FUNCTION_BLOCK";
        let once = round_trip(src);
        let twice = round_trip(&once);
        assert_eq!(once, twice);
    }
}
