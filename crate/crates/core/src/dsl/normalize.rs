use std::fmt::Write;

use super::{Decl, Literal, Positional, WorkflowAst};

/// Shortest decimal text that parses back to the same `f64`.
///
/// Rust's `Display` for floats already produces the shortest round-trip
/// digits and never uses exponent notation, so the output is always a plain
/// decimal literal.
pub fn format_number(n: f64) -> String {
    if n == 0.0 {
        // folds -0 into 0
        return "0".to_string();
    }
    format!("{n}")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub(crate) fn render_positional(arg: &Positional) -> String {
    match arg {
        Positional::Ref(name) => name.clone(),
        Positional::Str(s) => quote(s),
        Positional::Num(n) => format_number(*n),
    }
}

pub(crate) fn render_literal(lit: &Literal) -> String {
    match lit {
        Literal::Str(s) => quote(s),
        Literal::Num(n) => format_number(*n),
        Literal::Ident(s) => s.clone(),
    }
}

/// Canonical single-line text of one declaration.
pub fn render_decl(decl: &Decl) -> String {
    let mut args: Vec<String> = decl.positional.iter().map(render_positional).collect();
    args.extend(
        decl.named
            .iter()
            .map(|(k, v)| format!("{k}={}", render_literal(v))),
    );
    format!(
        "{} {} = {}({})",
        decl.kind,
        decl.name,
        decl.func,
        args.join(", ")
    )
}

/// Canonical program text: header line, then one declaration per line.
pub fn normalize(ast: &WorkflowAst) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "workflow {}", ast.name);
    for decl in &ast.decls {
        out.push_str(&render_decl(decl));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::{parse, DeclKind, KNOWN_FUNCS};
    use super::*;

    #[test]
    fn keyword_args_are_sorted() {
        let ast = parse("workflow w\nsim a = sim(k2=1, k1=2)\n").unwrap();
        assert_eq!(normalize(&ast), "workflow w\nsim a = sim(k1=2, k2=1)\n");
    }

    #[test]
    fn numbers_use_shortest_form() {
        let ast = parse("workflow w\nsim a = sim(1.0, 0.10, -0, 2.50e1)\n").unwrap();
        assert_eq!(normalize(&ast), "workflow w\nsim a = sim(1, 0.1, 0, 25)\n");
    }

    #[test]
    fn idempotent() {
        let src = "workflow w\n  source d = csv( \"x.csv\" )  # c\n\nsim s = sim(d,size_kb=3 , cost_ms=2)\n";
        let once = normalize(&parse(src).unwrap());
        let twice = normalize(&parse(&once).unwrap());
        assert_eq!(once, twice);
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,6}".prop_filter("keywords", |s| s != "workflow")
    }

    fn literal() -> impl Strategy<Value = Literal> {
        prop_oneof![
            "[ -~]{0,8}".prop_map(Literal::Str),
            (-1.0e6f64..1.0e6).prop_map(Literal::Num),
            (0i64..1000).prop_map(|n| Literal::Num(n as f64)),
            ident().prop_map(Literal::Ident),
        ]
    }

    fn kind() -> impl Strategy<Value = DeclKind> {
        prop_oneof![
            Just(DeclKind::Source),
            Just(DeclKind::Extractor),
            Just(DeclKind::Features),
            Just(DeclKind::Learner),
            Just(DeclKind::Output),
            Just(DeclKind::Metric),
            Just(DeclKind::Sim),
        ]
    }

    type RawDecl = (
        DeclKind,
        usize,
        Vec<(bool, usize, Literal)>,
        Vec<(String, Literal)>,
    );

    fn raw_decl() -> impl Strategy<Value = RawDecl> {
        (
            kind(),
            0..KNOWN_FUNCS.len(),
            prop::collection::vec((any::<bool>(), 0usize..64, literal()), 0..4),
            prop::collection::vec((ident(), literal()), 0..4),
        )
    }

    /// Builds a valid AST: names are unique, references point backwards.
    fn ast() -> impl Strategy<Value = WorkflowAst> {
        (ident(), prop::collection::vec(raw_decl(), 0..8)).prop_map(|(wname, raws)| {
            let mut decls: Vec<Decl> = Vec::new();
            for (i, (kind, func, pos, named)) in raws.into_iter().enumerate() {
                let positional = pos
                    .into_iter()
                    .map(|(is_ref, pick, lit)| {
                        if is_ref && i > 0 {
                            Positional::Ref(decls[pick % i].name.clone())
                        } else {
                            match lit {
                                Literal::Num(n) => Positional::Num(n),
                                Literal::Str(s) | Literal::Ident(s) => Positional::Str(s),
                            }
                        }
                    })
                    .collect();
                decls.push(Decl {
                    kind,
                    name: format!("n{i}"),
                    func: KNOWN_FUNCS[func].to_string(),
                    positional,
                    named: named.into_iter().collect(),
                    line: 0,
                });
            }
            WorkflowAst { name: wname, decls }
        })
    }

    /// Re-renders the program with arbitrary spacing, blank lines and comments.
    fn noisy_render(ast: &WorkflowAst, seed: &[u8]) -> String {
        let mut k = 0usize;
        let mut pick = |n: usize| {
            let v = seed[k % seed.len()] as usize;
            k += 1;
            v % n
        };
        let spaces = [" ", "  ", "\t", " \t "];
        let mut out = String::from("# header comment\n\n");
        out.push_str(&format!("workflow {}  # name\n", ast.name));
        for d in &ast.decls {
            if pick(3) == 0 {
                out.push_str("   \n# between\n");
            }
            out.push_str(spaces[pick(spaces.len())]);
            out.push_str(&format!("{} {}", d.kind, d.name));
            out.push_str(spaces[pick(spaces.len())]);
            out.push('=');
            out.push_str(spaces[pick(spaces.len())]);
            out.push_str(&d.func);
            out.push('(');
            let mut args: Vec<String> = d.positional.iter().map(render_positional).collect();
            args.extend(
                d.named
                    .iter()
                    .rev()
                    .map(|(key, v)| format!("{key} = {}", render_literal(v))),
            );
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                    out.push_str(spaces[pick(spaces.len())]);
                }
                out.push_str(a);
            }
            out.push(')');
            if pick(2) == 0 {
                out.push_str(" # trailing, with ( punctuation \"");
            }
            out.push('\n');
        }
        out
    }

    proptest! {
        #[test]
        fn round_trip(ast in ast()) {
            let text = normalize(&ast);
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &ast);
            prop_assert_eq!(normalize(&back), text);
        }

        #[test]
        fn whitespace_and_comments_do_not_matter(ast in ast(), seed in prop::collection::vec(any::<u8>(), 1..32)) {
            let noisy = noisy_render(&ast, &seed);
            let parsed = parse(&noisy).unwrap();
            prop_assert_eq!(normalize(&parsed), normalize(&ast));
        }

        #[test]
        fn parser_never_accepts_cycles(ast in ast()) {
            // every reference points strictly backwards in file order
            let back = parse(&normalize(&ast)).unwrap();
            for (i, d) in back.decls.iter().enumerate() {
                for p in d.parents() {
                    let j = back.decls.iter().position(|x| x.name == p).unwrap();
                    prop_assert!(j < i);
                }
            }
        }
    }
}
