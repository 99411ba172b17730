//! Seeded generator of well-formed programs for round-trip testing.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{Decl, Expr, NonlinExpr, ScalarRule};

fn constant(rng: &mut ChaCha8Rng) -> f64 {
    // quarter steps print exactly, so text equality is meaningful
    f64::from(rng.random_range(-12i32..=12)) / 4.0
}

fn expr(rng: &mut ChaCha8Rng, inputs: usize, params: usize, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.3) {
        return match rng.random_range(0..4) {
            0 => Expr::Const(constant(rng)),
            1 if params > 0 => Expr::Param(rng.random_range(0..params)),
            _ => Expr::Input(rng.random_range(0..inputs)),
        };
    }
    let mut sub = || Box::new(expr(rng, inputs, params, depth - 1));
    let (a, b) = (sub(), sub());
    match rng.random_range(0..13) {
        0 => Expr::Neg(a),
        1 => Expr::Add(a, b),
        2 => Expr::Sub(a, b),
        3 => Expr::Mul(a, b),
        4 => Expr::Pow(a, rng.random_range(1..=4)),
        5 => Expr::Abs(a),
        6 => Expr::Max(a, b),
        7 => Expr::Min(a, b),
        8 => {
            let lo = constant(rng);
            Expr::Clamp(a, lo, lo + 1.0)
        }
        9 => Expr::Relu(a),
        10 => Expr::Step(a),
        11 => Expr::Tanh(a),
        _ => Expr::Add(a, Box::new(Expr::Input(inputs - 1))),
    }
}

/// Nonlinearity mentioning slot `inputs − 1`, so its arity is exact.
fn nonlin(rng: &mut ChaCha8Rng, inputs: usize, params: usize) -> NonlinExpr {
    let body = Expr::Add(
        Box::new(expr(rng, inputs, params, 3)),
        Box::new(Expr::Input(inputs - 1)),
    );
    NonlinExpr::new(body, inputs, params).expect("slots are in range")
}

/// Declarations of a random program with about `size` instructions. Every
/// reference is declared first and every shape agrees, so the result
/// always builds.
pub fn random_decls(seed: u64, size: usize) -> Vec<Decl> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = ["n", "m"];
    let mut decls = vec![
        Decl::Class {
            name: "n".into(),
            ratio: 1.0,
        },
        Decl::Class {
            name: "m".into(),
            ratio: f64::from(rng.random_range(1..=8)) / 4.0,
        },
    ];
    let mut matrices = Vec::new();
    for i in 0..rng.random_range(1..=3) {
        let rows = *classes.choose(&mut rng).unwrap();
        let cols = *classes.choose(&mut rng).unwrap();
        decls.push(Decl::Matrix {
            name: format!("W{i}"),
            rows: rows.into(),
            cols: cols.into(),
            sigma2: f64::from(rng.random_range(1..=8)) / 4.0,
        });
        matrices.push((format!("W{i}"), rows, cols));
    }
    // vectors by class
    let mut vecs: Vec<(String, &str)> = Vec::new();
    for (i, &c) in classes.iter().enumerate() {
        decls.push(Decl::Vector {
            name: format!("v{i}"),
            class: c.into(),
            mean: constant(&mut rng),
            var: f64::from(rng.random_range(1..=8)) / 4.0,
        });
        vecs.push((format!("v{i}"), c));
    }
    decls.push(Decl::Vector {
        name: "u".into(),
        class: "n".into(),
        mean: 0.0,
        var: 1.0,
    });
    vecs.push(("u".into(), "n"));
    if rng.random_bool(0.5) {
        // |cov| ≤ 1/4 against variances ≥ 1/4 times 1 stays PSD
        decls.push(Decl::Cov {
            a: "v0".into(),
            b: "u".into(),
            value: f64::from(rng.random_range(-1..=1)) / 4.0,
        });
    }
    let mut scalars = vec!["c".to_string()];
    let limit = constant(&mut rng);
    decls.push(Decl::Scalar {
        name: "c".into(),
        limit,
        rule: if rng.random_bool(0.5) {
            ScalarRule::Constant
        } else {
            ScalarRule::Rational {
                num: vec![limit, constant(&mut rng)],
                den: vec![1.0, 1.0],
            }
        },
    });
    for t in 0..size {
        let out = format!("t{t}");
        match rng.random_range(0..3) {
            0 => {
                let (name, rows, cols) = matrices.choose(&mut rng).unwrap().clone();
                let transposed = rng.random_bool(0.5);
                let (from, to) = if transposed {
                    (rows, cols)
                } else {
                    (cols, rows)
                };
                let pool: Vec<&(String, &str)> = vecs.iter().filter(|v| v.1 == from).collect();
                let Some(input) = pool.choose(&mut rng) else {
                    continue;
                };
                decls.push(Decl::MatMul {
                    output: out.clone(),
                    matrix: name,
                    transposed,
                    input: input.0.clone(),
                });
                vecs.push((out, to));
            }
            kind => {
                let class = *classes.choose(&mut rng).unwrap();
                let pool: Vec<String> = vecs
                    .iter()
                    .filter(|v| v.1 == class)
                    .map(|v| v.0.clone())
                    .collect();
                let k = rng.random_range(1..=pool.len().min(3));
                let inputs: Vec<String> = pool.choose_multiple(&mut rng, k).cloned().collect();
                let np = rng.random_range(0..=scalars.len().min(1));
                let params: Vec<String> = scalars[..np].to_vec();
                let expr = nonlin(&mut rng, k, np);
                if kind == 1 {
                    decls.push(Decl::Nonlin {
                        output: out.clone(),
                        expr,
                        inputs,
                        params,
                    });
                    vecs.push((out, class));
                } else {
                    decls.push(Decl::Moment {
                        output: out.clone(),
                        expr,
                        inputs,
                        params,
                    });
                    scalars.push(out);
                }
            }
        }
    }
    decls
}
