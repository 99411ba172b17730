use std::fmt::Write;

use crate::ir::{Decl, Expr, NonlinExpr, Program, ScalarRule};

/// Canonical text of a program; parsing it back yields an equal program.
pub fn print_program(p: &Program) -> String {
    print_decls(&p.to_decls())
}

pub fn print_decls(decls: &[Decl]) -> String {
    let mut out = String::new();
    for d in decls {
        print_decl(&mut out, d);
        out.push('\n');
    }
    out
}

fn print_decl(out: &mut String, d: &Decl) {
    match d {
        Decl::Class { name, ratio } => write!(out, "class {name} ratio {ratio}"),
        Decl::Matrix {
            name,
            rows,
            cols,
            sigma2,
        } => write!(out, "matrix {name} : {rows} x {cols} var {sigma2}"),
        Decl::Vector {
            name,
            class,
            mean,
            var,
        } => write!(out, "vector {name} : {class} mean {mean} var {var}"),
        Decl::Cov { a, b, value } => write!(out, "cov {a} {b} {value}"),
        Decl::Scalar { name, limit, rule } => {
            write!(out, "scalar {name} limit {limit}").unwrap();
            match rule {
                ScalarRule::Constant => Ok(()),
                ScalarRule::Rational { num, den } => {
                    write!(out, " rule {} / {}", list(num), list(den))
                }
            }
        }
        Decl::MatMul {
            output,
            matrix,
            transposed,
            input,
        } => {
            let t = if *transposed { "^T" } else { "" };
            write!(out, "{output} = matmul {matrix}{t} {input}")
        }
        Decl::Nonlin {
            output,
            expr,
            inputs,
            params,
        } => write!(out, "{output} = nonlin {}", call(expr, inputs, params)),
        Decl::Moment {
            output,
            expr,
            inputs,
            params,
        } => write!(out, "{output} = moment {}", call(expr, inputs, params)),
    }
    .unwrap();
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn call(expr: &NonlinExpr, inputs: &[String], params: &[String]) -> String {
    let mut s = format!("[{}](", print_expr(expr.expr()));
    s.push_str(&inputs.join(", "));
    if !params.is_empty() {
        s.push_str("; ");
        s.push_str(&params.join(", "));
    }
    s.push(')');
    s
}

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn wrap(e: &Expr, min: u8) -> String {
    let s = print_expr(e);
    if level(e) < min {
        format!("({s})")
    } else {
        s
    }
}

/// Precedence-aware rendering; the right operand of a binary operator is
/// parenthesized at equal precedence so the tree shape survives.
pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Const(c) if c.is_sign_negative() => format!("(-{})", -c),
        Expr::Const(c) => c.to_string(),
        Expr::Input(i) => format!("x{i}"),
        Expr::Param(i) => format!("p{i}"),
        Expr::Add(a, b) => format!("{} + {}", wrap(a, 1), wrap(b, 2)),
        Expr::Sub(a, b) => format!("{} - {}", wrap(a, 1), wrap(b, 2)),
        Expr::Mul(a, b) => format!("{} * {}", wrap(a, 2), wrap(b, 3)),
        Expr::Neg(a) => match **a {
            Expr::Input(_)
            | Expr::Param(_)
            | Expr::Abs(_)
            | Expr::Max(..)
            | Expr::Min(..)
            | Expr::Clamp(..)
            | Expr::Relu(_)
            | Expr::Step(_)
            | Expr::Tanh(_) => format!("-{}", print_expr(a)),
            _ => format!("-({})", print_expr(a)),
        },
        Expr::Pow(a, k) => format!("{}^{k}", wrap(a, 5)),
        Expr::Abs(a) => format!("abs({})", print_expr(a)),
        Expr::Max(a, b) => format!("max({}, {})", print_expr(a), print_expr(b)),
        Expr::Min(a, b) => format!("min({}, {})", print_expr(a), print_expr(b)),
        Expr::Clamp(a, lo, hi) => format!("clamp({}, {lo}, {hi})", print_expr(a)),
        Expr::Relu(a) => format!("relu({})", print_expr(a)),
        Expr::Step(a) => format!("step({})", print_expr(a)),
        Expr::Tanh(a) => format!("tanh({})", print_expr(a)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_expr;

    fn roundtrip(e: Expr) {
        let s = print_expr(&e);
        let back = parse_expr(&s).unwrap();
        assert_eq!(back.expr(), &e, "{s}");
    }

    #[test]
    fn precedence_survives() {
        let x = Expr::input;
        roundtrip(x(0) - (x(1) - x(2)));
        roundtrip((x(0) - x(1)) - x(2));
        roundtrip(x(0) * (x(1) * x(2)));
        roundtrip((x(0) + x(1)) * x(2));
        roundtrip((-x(0)).pow(2));
        roundtrip(-(x(0).pow(2)));
        roundtrip(-Expr::Const(3.0));
        roundtrip(Expr::Const(-3.0).pow(2));
        roundtrip(-(-x(0)));
        roundtrip(x(0).pow(2).pow(3));
        roundtrip(x(0).clamp(-1.5, 2.0) * -Expr::param(0));
        roundtrip(Expr::Const(1e-7) + Expr::Const(1e21));
    }

    #[test]
    fn canonical_spacing() {
        let e = parse_expr("x0+x1*  x2").unwrap();
        assert_eq!(print_expr(e.expr()), "x0 + x1 * x2");
    }
}
