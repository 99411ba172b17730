use std::path::PathBuf;
use std::process::Command;

use proptest::prelude::*;

use netsor::dsl::{load_program, print_program};
use netsor::freeness::{mlp_program, Activation};
use netsor_cli::{gap_verdict, parse_args, parse_method, run, GapRow, MethodArg};

fn programs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs")
}

fn path(file: &str) -> String {
    programs().join(file).display().to_string()
}

fn bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_netsor"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
    )
}

fn tmp(name: &str, text: &str) -> String {
    let p = std::env::temp_dir().join(format!("netsor-cli-{}-{name}", std::process::id()));
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn bundled_mlp_programs_match_builder() {
    for l in [2, 3] {
        for phi in ["identity", "relu", "tanh"] {
            let text =
                std::fs::read_to_string(programs().join(format!("mlp_L{l}_{phi}.ntp"))).unwrap();
            let built = mlp_program(l, &Activation::by_name(phi).unwrap(), 1.0).unwrap();
            assert_eq!(text, print_program(&built), "L{l} {phi}");
        }
    }
}

#[test]
fn every_bundled_file_loads() {
    for e in std::fs::read_dir(programs()).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let args: Vec<String> = if name.ends_with(".ntp") {
            vec!["fmt".into(), "--program".into(), p.display().to_string()]
        } else {
            vec![
                "free".into(),
                "--word".into(),
                p.display().to_string(),
                "--witness".into(),
            ]
        };
        let cli = parse_args(std::iter::once("netsor".to_string()).chain(args)).unwrap();
        let out = run(&cli).unwrap_or_else(|e| panic!("{name}: {e}"));
        load_program(&out.csv).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn fmt_is_idempotent() {
    let (code, once) = bin(&["fmt", "--program", &path("gia_break.ntp")]);
    assert_eq!(code, 0);
    let (_, twice) = bin(&["fmt", "--program", &tmp("fmt.ntp", &once)]);
    assert_eq!(once, twice);
}

#[test]
fn errors_are_csv_rows_with_kinds() {
    let (code, out) = bin(&["fmt", "--program", "/no/such/file.ntp"]);
    assert_eq!(code, 2);
    assert!(out.starts_with("error,Io,"), "{out}");

    let bad = tmp("bad.ntp", "matrix W : n x n var 1\nx = matmul W\n");
    let (code, out) = bin(&["limit", "--program", &bad]);
    assert_eq!(code, 2);
    assert!(out.starts_with("error,SyntaxError,"), "{out}");

    let undeclared = tmp("undeclared.ntp", "vector v : n\ny = nonlin add(v, w)\n");
    let (_, out) = bin(&["sim", "--program", &undeclared, "--n", "8"]);
    assert!(out.starts_with("error,UndeclaredSymbol,"), "{out}");

    let base = tmp("base.ntp", "matrix W : n x n var 1\nvector v : n\n");
    let word = tmp("bad.word", &format!("program {base}\nmat W\nmat W^T\n"));
    let (_, out) = bin(&["free", "--word", &word, "--n", "16,32"]);
    assert!(out.starts_with("error,NotAlternating,"), "{out}");

    let (code, out) = bin(&["verify", "--program", &path("ata.ntp"), "--n", "64,32"]);
    assert_eq!(code, 2);
    assert!(out.starts_with("error,Usage,"), "{out}");
}

#[test]
fn method_flags() {
    assert_eq!(parse_method("auto"), Ok(MethodArg::Auto));
    assert!(parse_method("hutch:0").is_err());
    assert!(parse_method("hutch:x").is_err());
    assert!(parse_method("dense").is_err());
    assert!(parse_method("hutch:12").is_ok());
}

#[test]
fn law_tables() {
    let (code, out) = bin(&[
        "law",
        "mp",
        "--rho",
        "2",
        "--rmax",
        "3",
        "--mp-method",
        "recurrence",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out, "law,r,moment\nmp(2),1,1\nmp(2),2,3\nmp(2),3,11\n");
    let (_, dens) = bin(&["law", "semicircle", "--density", "4"]);
    assert_eq!(dens.lines().count(), 5);
}

#[test]
fn failing_tolerance_exits_one() {
    // a relative tolerance of 1e-9 cannot hold at n = 64
    let (code, out) = bin(&[
        "jacobian", "--layers", "2", "--n", "64", "--seeds", "2", "--tol", "1e-9",
    ]);
    assert_eq!(code, 1, "{out}");
    let (code, _) = bin(&[
        "jacobian", "--layers", "2", "--n", "64", "--seeds", "2", "--tol", "1",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn output_file_flag() {
    let target = std::env::temp_dir().join(format!("netsor-cli-{}-out.csv", std::process::id()));
    let (code, stdout) = bin(&[
        "law",
        "semicircle",
        "--rmax",
        "2",
        "--out",
        &target.display().to_string(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(target).unwrap(),
        "law,r,moment\nsemicircle,1,0\nsemicircle,2,1\n"
    );
}

fn gap_rows() -> impl Strategy<Value = Vec<GapRow>> {
    prop::collection::vec((0.0f64..0.3, 0.0f64..0.05), 1..4).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (gap, se))| GapRow {
                object: "m".into(),
                n: 256 << (2 * i),
                empirical: 0.0,
                empirical_stderr: 0.0,
                limit: 0.0,
                limit_stderr: 0.0,
                rel_gap: gap,
                rel_stderr: se,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn verdict_is_monotone_in_tolerance(rows in gap_rows(), a in 0.0f64..0.3, b in 0.0f64..0.3) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(!gap_verdict(&rows, lo) || gap_verdict(&rows, hi));
    }
}
