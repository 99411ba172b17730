use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use netsor::dsl::fuzz::random_decls;
use netsor::dsl::{load_program, print_expr, print_program};
use netsor::ir::{build_program, compute_cdc, Expr, Instruction, NonlinExpr};
use netsor::laws::{free_mul_conv, moments_from_s, s_transform, MomentSeq};
use netsor::limit::pseudoinverse;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Moments of a random discrete law on `[0.2, 3]`.
fn discrete_law(seed: u64, k: usize) -> MomentSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms: usize = rng.random_range(1..=5);
    let xs: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.2..3.0)).collect();
    let ws: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = ws.iter().sum();
    MomentSeq::new(
        (1..=k)
            .map(|r| {
                xs.iter()
                    .zip(&ws)
                    .map(|(x, w)| w * x.powi(r as i32))
                    .sum::<f64>()
                    / total
            })
            .collect(),
    )
}

fn close(a: &MomentSeq, b: &MomentSeq, tol: f64) -> bool {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(Expr::Const),
        (0usize..2).prop_map(Expr::Input),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let b = |e: Expr| Box::new(e);
        prop_oneof![
            inner.clone().prop_map(move |a| Expr::Neg(b(a))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Add(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Sub(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Mul(b(x), b(y))),
            (inner.clone(), 0u32..4).prop_map(move |(x, k)| Expr::Pow(b(x), k)),
            inner.clone().prop_map(move |a| Expr::Abs(b(a))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Max(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Min(b(x), b(y))),
            (inner.clone(), -2.0f64..0.0, 0.0f64..2.0).prop_map(move |(x, lo, hi)| Expr::Clamp(
                b(x),
                lo,
                hi
            )),
            inner.clone().prop_map(move |a| Expr::Relu(b(a))),
            inner.clone().prop_map(move |a| Expr::Step(b(a))),
            inner.prop_map(move |a| Expr::Tanh(b(a))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_programs_parse_back(seed in any::<u64>(), size in 0usize..20) {
        let p = build_program(&random_decls(seed, size)).unwrap();
        let text = print_program(&p);
        prop_assert_eq!(load_program(&text).unwrap(), p);
    }

    #[test]
    fn expressions_round_trip(e in expr_strategy()) {
        let text = print_expr(&e);
        let back = netsor::dsl::parse_expr(&text).unwrap();
        prop_assert_eq!(print_expr(back.expr()), text);
    }

    #[test]
    fn cdc_is_idempotent_and_respects_shapes(seed in any::<u64>(), size in 0usize..20) {
        let p = build_program(&random_decls(seed, size)).unwrap();
        let cdc = compute_cdc(&p);
        prop_assert_eq!(&cdc, p.cdc());
        let again = build_program(&p.to_decls()).unwrap();
        prop_assert_eq!(compute_cdc(&again), cdc.clone());
        for ins in p.instructions() {
            if let Instruction::Nonlin { inputs, output, .. } = ins {
                for v in inputs {
                    prop_assert_eq!(cdc.block_of(*v), cdc.block_of(*output));
                }
            }
        }
        let members: usize = cdc.blocks().iter().map(Vec::len).sum();
        prop_assert_eq!(members, p.vectors().len());
    }

    #[test]
    fn range_bounds_every_value(e in expr_strategy(), x in prop::array::uniform2(-6.0f64..6.0)) {
        let f = NonlinExpr::new(e, 2, 0).unwrap();
        let r = f.range();
        let v = f.eval(&x, &[]);
        let slack = 1e-9 * v.abs().max(1.0);
        prop_assert!(v >= r.lo - slack && v <= r.hi + slack, "{v} outside [{}, {}]", r.lo, r.hi);
    }

    #[test]
    fn penrose_conditions(seed in any::<u64>(), m in 2usize..9, n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.random_range(1..m.min(n));
        let a = gaussian(&mut rng, m, rank) * gaussian(&mut rng, rank, n);
        let x = pseudoinverse(&a, 1e-10);
        let (na, nx) = (a.norm(), x.norm());
        let ax = &a * &x;
        let xa = &x * &a;
        prop_assert!((&ax * &a - &a).norm() <= 1e-10 * na);
        prop_assert!((&xa * &x - &x).norm() <= 1e-10 * nx);
        prop_assert!((&ax - ax.transpose()).norm() <= 1e-10 * ax.norm().max(1.0));
        prop_assert!((&xa - xa.transpose()).norm() <= 1e-10 * xa.norm().max(1.0));
    }

    #[test]
    fn s_transform_round_trip(seed in any::<u64>()) {
        let m = discrete_law(seed, 8);
        let back = moments_from_s(&s_transform(&m).unwrap(), 8).unwrap();
        prop_assert!(close(&m, &back, 1e-9), "{:?} vs {:?}", m, back);
    }

    #[test]
    fn box_product_algebra(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let k = 8;
        let (a, b, c) = (discrete_law(s1, k), discrete_law(s2, k), discrete_law(s3, k));
        let ab = free_mul_conv(&a, &b, k).unwrap();
        prop_assert!(close(&ab, &free_mul_conv(&b, &a, k).unwrap(), 1e-9));
        let left = free_mul_conv(&ab, &c, k).unwrap();
        let right = free_mul_conv(&a, &free_mul_conv(&b, &c, k).unwrap(), k).unwrap();
        prop_assert!(close(&left, &right, 1e-9));
        let unit = free_mul_conv(&a, &MomentSeq::point_mass(1.0, k), k).unwrap();
        prop_assert!(close(&unit, &a, 1e-9));
    }
}
