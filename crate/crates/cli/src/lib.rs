//! Experiment driver for tensor programs.
//!
//! Every command renders one CSV table. Rows are produced in a fixed
//! order from seeded computations, so identical arguments give
//! byte-identical output at any thread count.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use netsor::dsl::{load_program, parse_word, print_program, DslError, WordFile};
use netsor::finite::{
    instantiate, instantiate_with, spectral_moments, DimAssignment, ExecConfig, FiniteError,
    TraceMethod, DEFAULT_EXACT_CAP,
};
use netsor::freeness::{
    default_method, fip_witness_program, freeness_sweep, jacobian_finite, jacobian_limit_moments,
    resolve_word, word_product, Activation, AlternatingWord, FreenessError, EXACT_TRACE_MAX,
};
use netsor::ir::{IrError, Origin, Program};
use netsor::laws::{
    law_density, mp_moment, mp_support, semicircle_moment, Law, MpMethod, MAX_TRUNC,
};
use netsor::limit::{LimitConfig, LimitError, LimitState, DEFAULT_REPLICATES, DEFAULT_SAMPLES};
use netsor::numeric::mean_stderr;

/// Probes per trace estimate when a command picks the method itself.
pub const DEFAULT_PROBES: usize = 32;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Finite(#[from] FiniteError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Freeness(#[from] FreenessError),
    #[error("{0}")]
    Usage(String),
}

fn ir_kind(e: &IrError) -> &'static str {
    match e {
        IrError::UndeclaredSymbol(_) => "UndeclaredSymbol",
        IrError::DuplicateSymbol(_) => "DuplicateSymbol",
        IrError::ArityMismatch { .. } => "ArityMismatch",
        IrError::DimClassConflict(_) => "DimClassConflict",
        IrError::InvalidDecl(_) => "InvalidDecl",
    }
}

fn finite_kind(e: &FiniteError) -> &'static str {
    match e {
        FiniteError::ShapeMismatch(_) => "ShapeMismatch",
        FiniteError::CapExceeded { .. } => "CapExceeded",
        FiniteError::UnboundedDiag => "UnboundedDiag",
        FiniteError::Ir(e) => ir_kind(e),
    }
}

fn limit_kind(e: &LimitError) -> &'static str {
    match e {
        LimitError::NonPSDExtension { .. } => "NonPSDExtension",
        LimitError::UnknownSymbol(_) => "UnknownSymbol",
        LimitError::Ir(e) => ir_kind(e),
    }
}

impl CliError {
    /// Machine-readable error class for the error row.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "Io",
            CliError::Dsl(e) => e.kind(),
            CliError::Finite(e) => finite_kind(e),
            CliError::Limit(e) => limit_kind(e),
            CliError::Freeness(e) => match e {
                FreenessError::NotAlternating(_) => "NotAlternating",
                FreenessError::Finite(e) => finite_kind(e),
                FreenessError::Limit(e) => limit_kind(e),
                FreenessError::Series(_) => "NonInvertibleSeries",
                FreenessError::Ir(e) => ir_kind(e),
                FreenessError::Build(_) => "InvalidDecl",
            },
            CliError::Usage(_) => "Usage",
        }
    }

    /// `error,<kind>,<message>` as one CSV record.
    pub fn csv_row(&self) -> String {
        let mut t = Table::new(&["error", "kind", "message"]);
        t.row([
            "error".to_string(),
            self.kind().to_string(),
            self.to_string(),
        ]);
        let s = t.finish();
        s.lines().nth(1).unwrap_or_default().to_string() + "\n"
    }
}

/// Trace method flag: `exact`, `hutch:<probes>` or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Auto,
    Fixed(TraceMethod),
}

impl MethodArg {
    /// An explicit `exact` raises the dense cap to the largest supported side.
    fn exec_config(self) -> ExecConfig {
        let mut c = ExecConfig::default();
        if self == MethodArg::Fixed(TraceMethod::Exact) {
            c.exact_cap = c.exact_cap.max(EXACT_TRACE_MAX);
        }
        c
    }

    fn resolve(self, n: usize, cap: usize) -> TraceMethod {
        match self {
            MethodArg::Auto => TraceMethod::auto(n, cap, DEFAULT_PROBES),
            MethodArg::Fixed(m) => m,
        }
    }
}

pub fn parse_method(s: &str) -> Result<MethodArg, String> {
    match s {
        "auto" => Ok(MethodArg::Auto),
        "exact" => Ok(MethodArg::Fixed(TraceMethod::Exact)),
        _ => {
            let p = s
                .strip_prefix("hutch:")
                .ok_or_else(|| format!("unknown method `{s}` (exact, hutch:<p>, auto)"))?;
            match p.parse::<usize>() {
                Ok(p) if p > 0 => Ok(MethodArg::Fixed(TraceMethod::Hutchinson(p))),
                _ => Err(format!("probe count in `{s}` must be a positive integer")),
            }
        }
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(x) if x > 0 => Ok(x),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "netsor",
    about = "Finite-width and infinite-width experiments on tensor programs"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = positive_usize)]
    pub threads: Option<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-width statistics: program scalars, or spectral moments of a word.
    Sim(SimArgs),
    /// Infinite-width scalar limits and ZDot coefficients.
    Limit(LimitArgs),
    /// Finite-width scalars against their limits over a width sweep.
    Verify(VerifyArgs),
    /// Moments or densities of the semicircle and Marchenko–Pastur laws.
    Law(LawArgs),
    /// Centred alternating traces over a width sweep.
    Free(FreeArgs),
    /// Jacobian singular-value moments of a random MLP, finite against limit.
    Jacobian(JacobianArgs),
    /// Canonical text of a program.
    Fmt(FmtArgs),
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    /// Number of seeds per width.
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    pub seeds: usize,
    /// First seed; seeds run `seed, seed+1, …`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Word file; switches to spectral moments `n⁻¹ tr M^k`.
    #[arg(long)]
    pub word: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1024", value_parser = positive_usize)]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub seeds: SeedArgs,
    /// Highest spectral moment.
    #[arg(long = "trunc", default_value_t = 4, value_parser = positive_usize)]
    pub trunc: usize,
    #[arg(long, default_value = "auto", value_parser = parse_method)]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Limit-engine Monte Carlo samples.
    #[arg(long, default_value_t = DEFAULT_SAMPLES, value_parser = positive_usize)]
    pub ensemble: usize,
    /// Independent replicate ensembles used for standard errors.
    #[arg(long, default_value_t = DEFAULT_REPLICATES, value_parser = positive_usize)]
    pub replicates: usize,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096", value_parser = positive_usize)]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Relative gap accepted at the largest width.
    #[arg(long, default_value_t = 0.05, value_parser = positive_f64)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    Semicircle,
    Mp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MpMethodArg {
    Explicit,
    Recurrence,
}

#[derive(Debug, Args)]
pub struct LawArgs {
    #[arg(value_enum)]
    pub law: LawKind,
    /// Shape ratio of the Marchenko–Pastur law.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub rho: f64,
    #[arg(long, default_value_t = 8, value_parser = positive_usize)]
    pub rmax: usize,
    /// Emit the density on this many grid points instead of moments.
    #[arg(long, value_parser = positive_usize)]
    pub density: Option<usize>,
    #[arg(long, value_enum, default_value_t = MpMethodArg::Explicit)]
    pub mp_method: MpMethodArg,
}

#[derive(Debug, Args)]
pub struct FreeArgs {
    #[arg(long)]
    pub word: PathBuf,
    /// Base program; defaults to the word file's `program` line.
    #[arg(long)]
    pub program: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048", value_parser = positive_usize)]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[arg(long, default_value = "auto", value_parser = parse_method)]
    pub method: MethodArg,
    /// Fail unless the median at the largest width is at most this.
    #[arg(long, value_parser = positive_f64)]
    pub max_median: Option<f64>,
    /// Fail unless the median at the largest width is below the smallest.
    #[arg(long)]
    pub require_decay: bool,
    /// Print the witness program for the word instead of sweeping.
    #[arg(long)]
    pub witness: bool,
}

#[derive(Debug, Args)]
pub struct JacobianArgs {
    /// Number of layers `L`.
    #[arg(long, default_value_t = 2, value_parser = positive_usize)]
    pub layers: usize,
    /// identity, relu or tanh.
    #[arg(long, default_value = "identity")]
    pub phi: String,
    #[arg(long, default_value_t = 1024, value_parser = positive_usize)]
    pub n: usize,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[arg(long, default_value_t = 3, value_parser = positive_usize)]
    pub trunc: usize,
    /// Variance of the first preactivation.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub q1: f64,
    /// Relative gap accepted per moment.
    #[arg(long, default_value_t = 0.1, value_parser = positive_f64)]
    pub tol: f64,
    #[arg(long, default_value = "auto", value_parser = parse_method)]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct FmtArgs {
    #[arg(long)]
    pub program: PathBuf,
}

/// Rendered command output.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    /// Whether every configured tolerance held.
    pub pass: bool,
    /// Human-readable remarks for standard error.
    pub notes: Vec<String>,
}

impl Outcome {
    fn ok(csv: String) -> Self {
        Outcome {
            csv,
            pass: true,
            notes: Vec::new(),
        }
    }
}

/// Thin CSV builder over the `csv` crate.
struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table { w }
    }

    fn row<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn f(x: impl Display) -> String {
    x.to_string()
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn read_program(path: &Path) -> Result<Program, CliError> {
    Ok(load_program(&read(path)?)?)
}

/// Word file and the program it refers to (`override_program` wins).
pub fn read_word(
    path: &Path,
    override_program: Option<&Path>,
) -> Result<(Program, WordFile), CliError> {
    let file = parse_word(&read(path)?)?;
    let program = match (override_program, &file.program) {
        (Some(p), _) => read_program(p)?,
        (None, Some(rel)) => {
            let base = path.parent().unwrap_or(Path::new("."));
            read_program(&base.join(rel))?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "word file has no `program` line and no --program was given".into(),
            ))
        }
    };
    Ok((program, file))
}

fn seed_list(s: &SeedArgs) -> Vec<u64> {
    (0..s.seeds as u64).map(|i| s.seed + i).collect()
}

fn check_ascending(n: &[usize]) -> Result<(), CliError> {
    if n.is_empty() || n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "--n must be a strictly ascending list".into(),
        ));
    }
    Ok(())
}

/// Program scalars computed by instructions, in program order.
fn moment_scalars(p: &Program) -> Vec<String> {
    p.scalars()
        .iter()
        .filter(|s| matches!(s.origin, Origin::Instruction(_)))
        .map(|s| s.name.clone())
        .collect()
}

/// Per-seed finite values of every moment scalar at width `n`.
fn finite_scalars(p: &Program, n: usize, seeds: &[u64]) -> Result<Vec<Vec<f64>>, CliError> {
    let names = moment_scalars(p);
    let dims = DimAssignment::from_ratios(p, n);
    seeds
        .par_iter()
        .map(|&seed| {
            let r = instantiate(p, &dims, seed)?;
            names
                .iter()
                .map(|s| r.scalar(s).map_err(CliError::from))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect()
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn sim(a: &SimArgs) -> Result<Outcome, CliError> {
    check_ascending(&a.n)?;
    let seeds = seed_list(&a.seeds);
    if let Some(word_path) = &a.word {
        let (p, file) = read_word(word_path, a.program.as_deref())?;
        let word = word_product(&resolve_word(&p, &file)?);
        let mut t = Table::new(&["n", "k", "mean", "stderr", "seeds"]);
        for &n in &a.n {
            let dims = DimAssignment::from_ratios(&p, n);
            let per_seed = seeds
                .par_iter()
                .map(|&seed| {
                    let r = instantiate_with(&p, &dims, seed, a.method.exec_config())?;
                    let dim = match word.shape(&p)? {
                        Some((rows, _)) => dims.get(rows),
                        None => n,
                    };
                    let m = spectral_moments(
                        &r,
                        &word,
                        a.trunc,
                        a.method.resolve(dim, DEFAULT_EXACT_CAP),
                    )?;
                    Ok(m.into_iter().map(|x| x.0).collect())
                })
                .collect::<Result<Vec<Vec<f64>>, CliError>>()?;
            for k in 0..a.trunc {
                let (m, se) = mean_stderr(&column(&per_seed, k));
                t.row([f(n), f(k + 1), f(m), f(se), f(seeds.len())]);
            }
        }
        return Ok(Outcome::ok(t.finish()));
    }
    let path = a
        .program
        .as_ref()
        .ok_or_else(|| CliError::Usage("sim needs --program or --word".into()))?;
    let p = read_program(path)?;
    let names = moment_scalars(&p);
    let mut t = Table::new(&["n", "object", "mean", "stderr", "seeds"]);
    for &n in &a.n {
        let vals = finite_scalars(&p, n, &seeds)?;
        for (j, name) in names.iter().enumerate() {
            let (m, se) = mean_stderr(&column(&vals, j));
            t.row([f(n), name.clone(), f(m), f(se), f(seeds.len())]);
        }
    }
    Ok(Outcome::ok(t.finish()))
}

fn limit_config(e: &EnsembleArgs, seed: u64) -> LimitConfig {
    LimitConfig {
        samples: e.ensemble,
        seed,
        replicates: e.replicates,
        ..LimitConfig::default()
    }
}

fn limit(a: &LimitArgs) -> Result<Outcome, CliError> {
    let p = read_program(&a.program)?;
    let s = LimitState::run(&p, limit_config(&a.ensemble, a.seed))?;
    let mut t = Table::new(&["object", "kind", "value", "stderr"]);
    for r in s.report() {
        t.row([r.object, r.kind, f(r.value), f(r.stderr)]);
    }
    let notes = s
        .diagnostics()
        .into_iter()
        .map(|d| format!("{}: {} ({})", d.kind, d.object, d.detail))
        .collect();
    Ok(Outcome {
        csv: t.finish(),
        pass: true,
        notes,
    })
}

/// One row of a verification sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub object: String,
    pub n: usize,
    pub empirical: f64,
    pub empirical_stderr: f64,
    pub limit: f64,
    pub limit_stderr: f64,
    /// `|empirical − limit| / max(|limit|, 1)`.
    pub rel_gap: f64,
    pub rel_stderr: f64,
}

/// Verdict for one object given its rows in ascending `n`: the final gap
/// is within `max(3·stderr, tol)`, and it either shrank from the first
/// width or is already within `3·stderr`.
pub fn gap_verdict(rows: &[GapRow], tol: f64) -> bool {
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return false;
    };
    let noise = 3.0 * last.rel_stderr;
    let close = last.rel_gap <= noise.max(tol);
    let shrinks = rows.len() == 1 || last.rel_gap < first.rel_gap || last.rel_gap <= noise;
    close && shrinks
}

pub fn verify_rows(
    p: &Program,
    n_list: &[usize],
    seeds: &[u64],
    config: LimitConfig,
) -> Result<Vec<GapRow>, CliError> {
    check_ascending(n_list)?;
    let names = moment_scalars(p);
    if names.is_empty() {
        return Err(CliError::Usage(
            "program has no moment scalar to verify".into(),
        ));
    }
    let s = LimitState::run(p, config)?;
    let limits = names
        .iter()
        .map(|n| s.scalar_limit(n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for &n in n_list {
        let vals = finite_scalars(p, n, seeds)?;
        for (j, name) in names.iter().enumerate() {
            let (e, ese) = mean_stderr(&column(&vals, j));
            let (l, lse) = limits[j];
            let scale = l.abs().max(1.0);
            rows.push(GapRow {
                object: name.clone(),
                n,
                empirical: e,
                empirical_stderr: ese,
                limit: l,
                limit_stderr: lse,
                rel_gap: (e - l).abs() / scale,
                rel_stderr: (ese * ese + lse * lse).sqrt() / scale,
            });
        }
    }
    rows.sort_by(|a, b| {
        let ia = names.iter().position(|x| *x == a.object);
        let ib = names.iter().position(|x| *x == b.object);
        ia.cmp(&ib).then(a.n.cmp(&b.n))
    });
    Ok(rows)
}

fn verify(a: &VerifyArgs) -> Result<Outcome, CliError> {
    let p = read_program(&a.program)?;
    let rows = verify_rows(
        &p,
        &a.n,
        &seed_list(&a.seeds),
        limit_config(&a.ensemble, a.seeds.seed),
    )?;
    let mut t = Table::new(&[
        "object",
        "n",
        "empirical",
        "empirical_stderr",
        "limit",
        "limit_stderr",
        "rel_gap",
        "rel_stderr",
        "pass",
    ]);
    let mut pass = true;
    for group in rows.chunk_by(|a, b| a.object == b.object) {
        let ok = gap_verdict(group, a.tol);
        pass &= ok;
        for (i, r) in group.iter().enumerate() {
            let verdict = if i + 1 == group.len() {
                if ok {
                    "pass"
                } else {
                    "fail"
                }
            } else {
                ""
            };
            t.row([
                r.object.clone(),
                f(r.n),
                f(r.empirical),
                f(r.empirical_stderr),
                f(r.limit),
                f(r.limit_stderr),
                f(r.rel_gap),
                f(r.rel_stderr),
                verdict.to_string(),
            ]);
        }
    }
    Ok(Outcome {
        csv: t.finish(),
        pass,
        notes: Vec::new(),
    })
}

fn law(a: &LawArgs) -> Result<Outcome, CliError> {
    let (name, law) = match a.law {
        LawKind::Semicircle => ("semicircle".to_string(), Law::Semicircle),
        LawKind::Mp => (format!("mp({})", a.rho), Law::MarchenkoPastur(a.rho)),
    };
    if let Some(points) = a.density {
        let (lo, hi) = match law {
            Law::Semicircle => (-2.0, 2.0),
            Law::MarchenkoPastur(rho) => mp_support(rho),
        };
        let mut t = Table::new(&["law", "x", "density", "atom"]);
        for i in 0..points {
            // cell midpoints avoid the edges where the density vanishes
            let x = lo + (hi - lo) * (i as f64 + 0.5) / points as f64;
            let (d, atom) = law_density(law, x);
            t.row([name.clone(), f(x), f(d), f(atom)]);
        }
        return Ok(Outcome::ok(t.finish()));
    }
    let cap = 4 * MAX_TRUNC;
    if a.rmax > cap {
        return Err(CliError::Usage(format!("--rmax must be at most {cap}")));
    }
    let method = match a.mp_method {
        MpMethodArg::Explicit => MpMethod::Explicit,
        MpMethodArg::Recurrence => MpMethod::Recurrence,
    };
    let mut t = Table::new(&["law", "r", "moment"]);
    for r in 1..=a.rmax {
        let m = match law {
            Law::Semicircle => semicircle_moment(r),
            Law::MarchenkoPastur(rho) => mp_moment(r, rho, method),
        };
        t.row([name.clone(), f(r), f(m)]);
    }
    Ok(Outcome::ok(t.finish()))
}

fn free(a: &FreeArgs) -> Result<Outcome, CliError> {
    let (p, file) = read_word(&a.word, a.program.as_deref())?;
    let word = AlternatingWord::from_file(&p, &file)?;
    if a.witness {
        return Ok(Outcome::ok(print_program(&fip_witness_program(&p, &word)?)));
    }
    check_ascending(&a.n)?;
    if a.seeds.seed != 0 {
        return Err(CliError::Usage("free always runs seeds 0..seeds".into()));
    }
    let method = a.method;
    let rep = freeness_sweep(&p, &word, &a.n, a.seeds.seeds, move |n| match method {
        MethodArg::Auto => default_method(n),
        MethodArg::Fixed(m) => m,
    })?;
    let (first, last) = (&rep.rows[0], &rep.rows[rep.rows.len() - 1]);
    let mut pass = true;
    if let Some(max) = a.max_median {
        pass &= last.median_abs <= max;
    }
    if a.require_decay {
        pass &= last.median_abs < first.median_abs;
    }
    Ok(Outcome {
        csv: rep.to_csv(),
        pass,
        notes: vec![format!("slope {}", rep.slope)],
    })
}

fn jacobian(a: &JacobianArgs) -> Result<Outcome, CliError> {
    let act = Activation::by_name(&a.phi)
        .ok_or_else(|| CliError::Usage(format!("unknown activation `{}`", a.phi)))?;
    if a.layers < 2 {
        return Err(CliError::Usage("--layers must be at least 2".into()));
    }
    if a.trunc > MAX_TRUNC {
        return Err(CliError::Usage(format!(
            "--trunc must be at most {MAX_TRUNC}"
        )));
    }
    let lim = jacobian_limit_moments(a.layers, &act, a.q1, &[], a.trunc)?;
    let method = a.method.resolve(a.n, DEFAULT_EXACT_CAP);
    let per_seed = seed_list(&a.seeds)
        .par_iter()
        .map(|&seed| {
            let m = jacobian_finite(a.layers, a.n, &act, a.q1, seed, a.trunc, method)?;
            Ok(m.into_iter().map(|x| x.0).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, CliError>>()?;
    let mut t = Table::new(&["k", "empirical", "limit", "rel_gap"]);
    let mut pass = true;
    for k in 1..=a.trunc {
        let (e, _) = mean_stderr(&column(&per_seed, k - 1));
        let l = lim.get(k);
        let gap = (e - l).abs() / l.abs().max(f64::MIN_POSITIVE);
        pass &= gap <= a.tol;
        t.row([f(k), f(e), f(l), f(gap)]);
    }
    Ok(Outcome {
        csv: t.finish(),
        pass,
        notes: Vec::new(),
    })
}

fn fmt(a: &FmtArgs) -> Result<Outcome, CliError> {
    Ok(Outcome::ok(print_program(&read_program(&a.program)?)))
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Sim(a) => sim(a),
        Command::Limit(a) => limit(a),
        Command::Verify(a) => verify(a),
        Command::Law(a) => law(a),
        Command::Free(a) => free(a),
        Command::Jacobian(a) => jacobian(a),
        Command::Fmt(a) => fmt(a),
    }
}

/// Runs the command on a dedicated pool when `--threads` is given.
pub fn run_with_threads(cli: &Cli) -> Result<Outcome, CliError> {
    match cli.threads {
        None => run(cli),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| run(cli)),
    }
}

/// Parses arguments the way the binary does.
pub fn parse_args<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}
