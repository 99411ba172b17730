use nalgebra::{DMatrix, DVector};
use netsor::dsl::{load_program, parse_expr, parse_word};
use netsor::finite::{
    instantiate, instantiate_with, materialize, spectral_moments, trace_moment, word_apply,
    DimAssignment, ExecConfig, MatrixWord, Realization, TraceMethod,
};
use netsor::freeness::{
    centered_trace, fip_witness_program, freeness_sweep, AlternatingWord, CollectionSpec,
    FreenessError, WITNESS_SCALAR,
};
use netsor::ir::Program;
use netsor::numeric::mean_stderr;

const BASE: &str = "\
class m ratio 0.5
matrix W : n x n var 1
matrix A : m x n var 1
vector v : n
vector x : n
h = matmul W v
";

fn setup(n: usize, seed: u64) -> (Program, Realization) {
    let p = load_program(BASE).unwrap();
    let config = ExecConfig {
        exact_cap: 2048,
        ..ExecConfig::default()
    };
    let r = instantiate_with(&p, &DimAssignment::from_ratios(&p, n), seed, config).unwrap();
    (p, r)
}

fn word(p: &Program, src: &str) -> AlternatingWord {
    AlternatingWord::from_file(p, &parse_word(src).unwrap()).unwrap()
}

#[test]
fn word_apply_matches_dense_product() {
    let (p, r) = setup(48, 3);
    let w = MatrixWord::mat(&p, "A", true)
        .unwrap()
        .then(MatrixWord::mat(&p, "A", false).unwrap())
        .then(MatrixWord::diag(&p, &["h"], parse_expr("tanh(x0)").unwrap()).unwrap())
        .then(MatrixWord::mat(&p, "W", false).unwrap());
    let dense = r.matrix("A").unwrap().transpose()
        * r.matrix("A").unwrap()
        * DMatrix::from_diagonal(&r.vector("h").unwrap().map(f64::tanh))
        * r.matrix("W").unwrap();
    assert!((materialize(&r, &w).unwrap() - &dense).amax() < 1e-12);
    let z = DVector::from_fn(48, |i, _| (i as f64).sin());
    assert!((word_apply(&r, &w, &z).unwrap() - &dense * &z).amax() < 1e-12);
}

#[test]
fn hutchinson_tracks_exact_trace() {
    let (p, r) = setup(512, 5);
    let w = MatrixWord::mat(&p, "W", false)
        .unwrap()
        .then(MatrixWord::mat(&p, "W", true).unwrap());
    let (exact, _) = trace_moment(&r, &w, TraceMethod::Exact).unwrap();
    let (est, se) = trace_moment(&r, &w, TraceMethod::Hutchinson(64)).unwrap();
    assert!((est - exact).abs() <= 4.0 * se, "{est} ± {se} vs {exact}");
    let ex = spectral_moments(&r, &w, 3, TraceMethod::Exact).unwrap();
    let hu = spectral_moments(&r, &w, 3, TraceMethod::Hutchinson(64)).unwrap();
    for (e, (h, se)) in ex.iter().zip(&hu) {
        assert!((h - e.0).abs() <= 4.0 * se, "{h} ± {se} vs {}", e.0);
    }
}

#[test]
fn centered_trace_is_cyclic() {
    let (p, r) = setup(96, 9);
    let w = word(
        &p,
        "mat W W^T\ndiag h step\nmat W + W^T\ndiag h [clamp(x0, -1, 1)]\n",
    );
    let (base, _) = centered_trace(&r, &w, TraceMethod::Exact).unwrap();
    for k in 1..w.len() {
        let (rot, _) = centered_trace(&r, &w.rotate(k), TraceMethod::Exact).unwrap();
        assert!(
            (rot - base).abs() < 1e-12 * base.abs().max(1.0),
            "rotation {k}"
        );
    }
}

#[test]
fn exact_centered_trace_matches_dense_oracle() {
    let (p, r) = setup(64, 2);
    let w = word(&p, "mat W W^T\ndiag h step\n");
    let n = 64.0;
    let a = materialize(&r, &w.parts()[0].1).unwrap();
    let d = materialize(&r, &w.parts()[1].1).unwrap();
    let ca = &a - DMatrix::identity(64, 64) * (a.trace() / n);
    let cd = &d - DMatrix::identity(64, 64) * (d.trace() / n);
    let oracle = (ca * cd).trace() / n;
    let (v, se) = centered_trace(&r, &w, TraceMethod::Exact).unwrap();
    assert_eq!(se, 0.0);
    assert!((v - oracle).abs() < 1e-12);
}

#[test]
fn single_polynomial_centres_to_zero() {
    let (p, r) = setup(128, 1);
    let w = word(&p, "mat W + W^T\n");
    for m in [TraceMethod::Exact, TraceMethod::Hutchinson(8)] {
        assert!(centered_trace(&r, &w, m).unwrap().0.abs() < 1e-12);
    }
}

#[test]
fn adjacent_collections_are_rejected() {
    let p = load_program(BASE).unwrap();
    let f = parse_word("mat W\nmat W^T\n").unwrap();
    assert!(matches!(
        AlternatingWord::from_file(&p, &f),
        Err(FreenessError::NotAlternating(_))
    ));
    let d = parse_word("diag h step\ndiag x step\n").unwrap();
    assert!(AlternatingWord::from_file(&p, &d).is_err());
    let labelled = parse_word("diag h step\ndiag x step as E\n").unwrap();
    let w = AlternatingWord::from_file(&p, &labelled).unwrap();
    assert_eq!(w.parts()[1].0, CollectionSpec::Diag("E".into()));
}

#[test]
fn commuting_diagonals_do_not_decouple() {
    // step(x) and step(x) − 1/2 commute: the centred trace tends to 1/4
    let p = load_program(BASE).unwrap();
    let w = word(&p, "diag x step\ndiag x [step(x0) - 0.5] as E\n");
    let rep = freeness_sweep(&p, &w, &[128, 512], 6, |_| TraceMethod::Exact).unwrap();
    for row in &rep.rows {
        assert!((row.median_abs - 0.25).abs() < 0.03, "{row:?}");
    }
    assert!(rep.slope.abs() < 0.2);
}

#[test]
fn alternating_word_decays() {
    let p = load_program(BASE).unwrap();
    let w = word(&p, "mat W W^T\ndiag h step\n");
    let rep = freeness_sweep(&p, &w, &[64, 256, 1024], 6, |_| TraceMethod::Exact).unwrap();
    assert!(rep.rows[2].median_abs < rep.rows[0].median_abs);
    assert!(rep.slope < -0.5, "slope {}", rep.slope);
}

#[test]
fn witness_tracks_centered_trace() {
    let base = load_program(BASE).unwrap();
    let w = word(&base, "mat W W^T\ndiag h step\n");
    let witness = fip_witness_program(&base, &w).unwrap();
    let n = 1024;
    let diffs: Vec<f64> = (0..8)
        .map(|seed| {
            let rw = instantiate(&witness, &DimAssignment::from_ratios(&witness, n), seed).unwrap();
            let (_, r) = setup(n, seed);
            let exact = centered_trace(&r, &w, TraceMethod::Exact).unwrap().0;
            rw.scalar(WITNESS_SCALAR).unwrap() - exact
        })
        .collect();
    let (m, se) = mean_stderr(&diffs);
    assert!(m.abs() <= 4.0 * se, "{m} ± {se}");
}
