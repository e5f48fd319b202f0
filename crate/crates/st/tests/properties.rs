use proptest::prelude::*;
use regex::Regex;

use stforge_st::ast::*;
use stforge_st::{check, parse_source, pretty, tokenize, Span, TokenKind};

const VARS: &[&str] = &["a", "b", "count", "level", "x"];

fn ident(name: &str) -> Ident {
    Ident { name: name.to_string(), quoted: false, local_prefix: false, span: Span::default() }
}

fn expr(kind: ExprKind) -> Expr {
    Expr { kind, span: Span::default() }
}

fn stmt(kind: StmtKind) -> Stmt {
    Stmt { kind, span: Span::default() }
}

/// Wraps `e` in an explicit `Paren` when it binds looser than `min`, as the
/// parser would have to see it, so generated trees are exactly parseable.
fn paren_below(e: Expr, min: u8) -> Expr {
    let strength = match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary { .. } => UNARY_PRECEDENCE,
        _ => u8::MAX,
    };
    if strength < min {
        expr(ExprKind::Paren(Box::new(e)))
    } else {
        e
    }
}

fn arb_literal() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..1000).prop_map(|n| (LiteralKind::Integer, n.to_string())),
        (0u32..100, 1u32..100).prop_map(|(a, b)| (LiteralKind::Real, format!("{a}.{b}"))),
        any::<bool>().prop_map(|b| (LiteralKind::Bool, if b { "TRUE" } else { "FALSE" }.to_string())),
        Just((LiteralKind::Typed, "T#1s".to_string())),
        Just((LiteralKind::Integer, "16#FF".to_string())),
        Just((LiteralKind::String, "'text'".to_string())),
    ]
    .prop_map(|(kind, text)| expr(ExprKind::Literal { kind, text }))
}

fn arb_var() -> impl Strategy<Value = Expr> {
    prop::sample::select(VARS).prop_map(|v| expr(ExprKind::Var(ident(v))))
}

fn arb_binop() -> impl Strategy<Value = BinaryOp> {
    prop::sample::select(vec![
        BinaryOp::Or,
        BinaryOp::Xor,
        BinaryOp::And,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::Lt,
        BinaryOp::Le,
        BinaryOp::Gt,
        BinaryOp::Ge,
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Mod,
        BinaryOp::Pow,
    ])
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![arb_literal(), arb_var()];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (arb_binop(), inner.clone(), inner.clone()).prop_map(|(op, l, r)| {
                let p = op.precedence();
                expr(ExprKind::Binary { op, lhs: Box::new(paren_below(l, p)), rhs: Box::new(paren_below(r, p + 1)) })
            }),
            (prop::sample::select(vec![UnaryOp::Not, UnaryOp::Neg]), inner.clone()).prop_map(|(op, e)| {
                expr(ExprKind::Unary { op, operand: Box::new(paren_below(e, UNARY_PRECEDENCE)) })
            }),
            inner.clone().prop_map(|e| expr(ExprKind::Paren(Box::new(e)))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| expr(ExprKind::Call {
                callee: Box::new(expr(ExprKind::Var(ident("MAX")))),
                args: vec![Arg::Positional(a), Arg::Positional(b)],
            })),
        ]
    })
}

fn arb_stmt() -> impl Strategy<Value = Stmt> {
    let simple = prop_oneof![
        (arb_var(), arb_expr()).prop_map(|(t, v)| stmt(StmtKind::Assign { target: t, value: v })),
        Just(stmt(StmtKind::Return)),
        Just(stmt(StmtKind::Call(expr(ExprKind::Call {
            callee: Box::new(expr(ExprKind::Var(ident("timer")))),
            args: vec![
                Arg::Named { name: ident("IN"), value: expr(ExprKind::Var(ident("a"))) },
                Arg::Output { name: ident("Q"), target: expr(ExprKind::Var(ident("b"))), negated: false },
            ],
        })))),
    ];
    simple.prop_recursive(3, 16, 3, |inner| {
        let body = prop::collection::vec(inner.clone(), 0..3);
        prop_oneof![
            (prop::collection::vec((arb_expr(), body.clone()), 1..3), prop::option::of(body.clone()))
                .prop_map(|(branches, else_body)| stmt(StmtKind::If { branches, else_body })),
            (arb_expr(), body.clone()).prop_map(|(cond, body)| stmt(StmtKind::While { cond, body })),
            (body.clone(), arb_expr()).prop_map(|(body, until)| stmt(StmtKind::Repeat { body, until })),
            (arb_expr(), arb_expr(), prop::option::of(arb_expr()), body.clone())
                .prop_map(|(from, to, by, body)| { stmt(StmtKind::For { var: ident("x"), from, to, by, body }) }),
            (arb_var(), prop::collection::vec((1u32..5, body.clone()), 1..3), prop::option::of(body.clone())).prop_map(
                |(selector, arms, else_body)| {
                    let arms = arms
                        .into_iter()
                        .enumerate()
                        .map(|(i, (w, body))| {
                            let lo = (i as u32) * 10;
                            let label =
                                |n: u32| expr(ExprKind::Literal { kind: LiteralKind::Integer, text: n.to_string() });
                            CaseArm {
                                labels: vec![
                                    CaseLabel::Single(label(lo)),
                                    CaseLabel::Range(label(lo + 1), label(lo + w + 1)),
                                ],
                                body,
                                span: Span::default(),
                            }
                        })
                        .collect();
                    stmt(StmtKind::Case { selector, arms, else_body })
                }
            ),
        ]
    })
}

fn program(body: Vec<Stmt>) -> SyntaxTree {
    let mut decls: Vec<VarDecl> = VARS
        .iter()
        .map(|v| VarDecl {
            names: vec![ident(v)],
            location: None,
            ty: TypeSpec::Named(ident("INT")),
            init: None,
            span: Span::default(),
        })
        .collect();
    decls.push(VarDecl {
        names: vec![ident("timer")],
        location: None,
        ty: TypeSpec::Named(ident("TON")),
        init: None,
        span: Span::default(),
    });
    let pou = Pou {
        kind: PouKind::Program,
        name: ident("Main"),
        return_type: None,
        var_blocks: vec![VarBlock { kind: VarKind::Var, qualifier: None, decls, span: Span::default() }],
        body,
        span: Span::default(),
    };
    SyntaxTree { items: vec![Item::Pou(pou)], span: Span::default() }
}

fn without_spans(tree: &SyntaxTree) -> String {
    let re = Regex::new(r"span: Span \{[^}]*\}").unwrap();
    re.replace_all(&format!("{:?}", tree.items), "span").into_owned()
}

const BREAKERS: &[&str] = &[
    "x := 1 y := 2;",
    "x := ;",
    "x = = 3;",
    "IF x THEN y := 1; END_WHILE;",
    "x := (1 + 2;",
    "FOR := 1 TO 3 DO END_FOR;",
    "x := y +* 3;",
    "count := @;",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tokens_partition_the_input(src in "[ -~\n\t]{0,200}") {
        let lexed = tokenize(&src);
        let mut cursor = 0usize;
        for t in &lexed.tokens {
            prop_assert!(t.span.offset >= cursor, "overlapping spans");
            prop_assert_eq!(&src[t.span.offset..t.span.end()], t.lexeme.as_str());
            let gap = &src[cursor..t.span.offset];
            let gap_ok = gap.chars().all(char::is_whitespace)
                || lexed.diagnostics.iter().any(|d| d.offset >= cursor && d.offset < t.span.offset);
            prop_assert!(gap_ok, "unexplained gap {:?}", gap);
            cursor = t.span.end();
        }
        let tail = &src[cursor..];
        prop_assert!(
            tail.chars().all(char::is_whitespace) || lexed.diagnostics.iter().any(|d| d.offset >= cursor)
        );
    }

    #[test]
    fn check_is_total_sorted_bounded_and_deterministic(src in "[ -~\n]{0,300}") {
        let a = check(&src);
        let b = check(&src);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.pass, a.error_count == 0);
        prop_assert_eq!(a.error_count, a.diagnostics.iter().filter(|d| d.is_error()).count());
        let lines = src.split('\n').count() as u32;
        for w in a.diagnostics.windows(2) {
            prop_assert!(w[0].position() <= w[1].position());
        }
        for d in &a.diagnostics {
            prop_assert!(d.offset <= src.len());
            prop_assert!(d.line >= 1 && d.line <= lines);
            prop_assert!(!d.to_string().contains('\n'));
        }
    }

    #[test]
    fn independent_errors_are_each_reported(picks in prop::collection::vec(0..BREAKERS.len(), 1..6)) {
        let mut src = String::from("PROGRAM Main\nVAR x : INT; y : INT; count : INT; END_VAR\n");
        for &i in &picks {
            src.push_str(BREAKERS[i]);
            src.push_str("\ncount := count + 1;\n");
        }
        src.push_str("END_PROGRAM\n");
        let r = check(&src);
        prop_assert!(r.error_count >= picks.len(), "{} errors for {} breaks:\n{}\n{}", r.error_count, picks.len(), src, r.render());
    }

    #[test]
    fn pretty_output_reparses_to_the_same_tree(body in prop::collection::vec(arb_stmt(), 0..6)) {
        let tree = program(body);
        let text = pretty(&tree);
        let parsed = parse_source(&text);
        prop_assert!(parsed.diagnostics.is_empty(), "{}\n{:?}", text, parsed.diagnostics);
        let (got, want) = (without_spans(&parsed.tree), without_spans(&tree));
        let at = got.bytes().zip(want.bytes()).take_while(|(a, b)| a == b).count();
        prop_assert!(got == want, "{}\ndiverges at: {} | {}", text, &got[at.saturating_sub(80)..(at + 80).min(got.len())], &want[at.saturating_sub(80)..(at + 80).min(want.len())]);
        prop_assert_eq!(pretty(&parsed.tree), text.clone());
        let r = check(&text);
        prop_assert!(r.pass, "{}\n{}", text, r.render());
    }

    #[test]
    fn tree_spans_nest(body in prop::collection::vec(arb_stmt(), 1..5)) {
        let text = pretty(&program(body));
        let parsed = parse_source(&text);
        for pou in parsed.tree.pous() {
            prop_assert!(parsed.tree.span.contains(&pou.span) || parsed.tree.span == Span::default());
            for s in &pou.body {
                prop_assert!(pou.span.contains(&s.span));
                nested_ok(s)?;
            }
        }
    }
}

fn expr_nested(parent: &Span, e: &Expr) -> Result<(), TestCaseError> {
    prop_assert!(parent.contains(&e.span), "{:?} not within {:?}", e.span, parent);
    match &e.kind {
        ExprKind::Binary { lhs, rhs, .. } => {
            expr_nested(&e.span, lhs)?;
            expr_nested(&e.span, rhs)?;
        }
        ExprKind::Unary { operand, .. } | ExprKind::Paren(operand) => expr_nested(&e.span, operand)?,
        ExprKind::Call { callee, args } => {
            expr_nested(&e.span, callee)?;
            for a in args {
                match a {
                    Arg::Positional(x) | Arg::Named { value: x, .. } | Arg::Output { target: x, .. } => {
                        expr_nested(&e.span, x)?
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}

fn nested_ok(s: &Stmt) -> Result<(), TestCaseError> {
    let mut inner = Vec::new();
    match &s.kind {
        StmtKind::Assign { target, value } => {
            expr_nested(&s.span, target)?;
            expr_nested(&s.span, value)?;
        }
        StmtKind::If { branches, else_body } => {
            for (c, b) in branches {
                expr_nested(&s.span, c)?;
                inner.extend(b.iter());
            }
            inner.extend(else_body.iter().flatten());
        }
        StmtKind::While { cond, body } => {
            expr_nested(&s.span, cond)?;
            inner.extend(body.iter());
        }
        StmtKind::Repeat { body, until } => {
            expr_nested(&s.span, until)?;
            inner.extend(body.iter());
        }
        StmtKind::For { from, to, body, .. } => {
            expr_nested(&s.span, from)?;
            expr_nested(&s.span, to)?;
            inner.extend(body.iter());
        }
        StmtKind::Case { arms, else_body, .. } => {
            for arm in arms {
                prop_assert!(s.span.contains(&arm.span));
                inner.extend(arm.body.iter());
            }
            inner.extend(else_body.iter().flatten());
        }
        _ => {}
    }
    for child in inner {
        prop_assert!(s.span.contains(&child.span), "{:?} not within {:?}", child.span, s.span);
        nested_ok(child)?;
    }
    Ok(())
}

#[test]
fn token_kinds_cover_every_class() {
    let lexed = tokenize("IF x THEN y := 1.5 + T#2s; s := 'a'; END_IF (* c *)");
    let kinds: std::collections::HashSet<&str> = lexed.tokens.iter().map(|t| t.kind.class_name()).collect();
    for k in [
        "keyword",
        "identifier",
        "real-literal",
        "typed-literal",
        "string-literal",
        "operator",
        "punctuation",
        "comment",
    ] {
        assert!(kinds.contains(k), "missing {k}");
    }
    assert!(lexed.tokens.iter().all(|t| t.kind != TokenKind::IntegerLiteral || t.lexeme == "1"));
}
