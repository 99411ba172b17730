//! Empirical asymptotic freeness and Jacobian spectra.

use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{parse_expr, WordFactor, WordFile};
use crate::finite::{
    instantiate, instantiate_with, materialize, rng, spectral_moments, word_apply_block,
    DimAssignment, ExecConfig, Factor, FiniteError, MatrixWord, Realization, TraceMethod,
};
use crate::ir::{build_program, BuildError, Decl, Expr, IrError, MatId, NonlinExpr, Program};
use crate::laws::{free_mul_conv, mp_moment_seq, MomentSeq, SeriesError};
use crate::limit::LimitError;
use crate::numeric::{mean, mean_stderr, median, pairwise_sum, std_dev, GaussHermite};

use nalgebra::DMatrix;

/// Exact traces at or below this width; probes above. Centred traces
/// decay faster than the probe noise, so the sweep stays exact as long
/// as dense products are affordable.
pub const EXACT_TRACE_MAX: usize = 2048;
pub const DEFAULT_PROBES: usize = 32;
pub const QUADRATURE_ORDER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FreenessError {
    #[error("word is not alternating: {0}")]
    NotAlternating(String),
    #[error(transparent)]
    Finite(#[from] FiniteError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("generated program is invalid: {0}")]
    Build(String),
}

impl From<BuildError> for FreenessError {
    fn from(e: BuildError) -> Self {
        FreenessError::Build(e.error.to_string())
    }
}

/// A family that the principle treats as one free unit: `{W, Wᵀ}` for a
/// matrix, or a labelled set of bounded diagonal matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CollectionSpec {
    Matrix(MatId),
    Diag(String),
}

/// `(collection, P_i)` pairs with no two neighbours in one collection.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingWord {
    parts: Vec<(CollectionSpec, MatrixWord)>,
}

fn collection_of(word: &MatrixWord) -> Result<Option<CollectionSpec>, FreenessError> {
    let mut found: Option<CollectionSpec> = None;
    let mut merge = |c: CollectionSpec| -> Result<(), FreenessError> {
        match &found {
            Some(prev) if *prev != c => Err(FreenessError::NotAlternating(
                "a polynomial mixes collections".into(),
            )),
            _ => {
                found = Some(c);
                Ok(())
            }
        }
    };
    for f in &word.factors {
        match f {
            Factor::Mat { matrix, .. } => merge(CollectionSpec::Matrix(*matrix))?,
            Factor::Diag { .. } => {
                merge(CollectionSpec::Diag(crate::dsl::DEFAULT_DIAG_LABEL.into()))?
            }
            Factor::Sum(terms) => {
                for (_, w) in terms {
                    if let Some(c) = collection_of(w)? {
                        merge(c)?;
                    }
                }
            }
        }
    }
    Ok(found)
}

impl AlternatingWord {
    pub fn new(parts: Vec<(CollectionSpec, MatrixWord)>) -> Result<Self, FreenessError> {
        for (i, pair) in parts.windows(2).enumerate() {
            if pair[0].0 == pair[1].0 {
                return Err(FreenessError::NotAlternating(format!(
                    "factors {} and {} share a collection",
                    i + 1,
                    i + 2
                )));
            }
        }
        Ok(AlternatingWord { parts })
    }

    /// Collections inferred from the factors; diagonal factors all fall
    /// in the default `D` collection.
    pub fn infer(polys: Vec<MatrixWord>) -> Result<Self, FreenessError> {
        let parts = polys
            .into_iter()
            .map(|w| {
                let c = collection_of(&w)?.ok_or_else(|| {
                    FreenessError::NotAlternating("identity polynomial has no collection".into())
                })?;
                Ok((c, w))
            })
            .collect::<Result<Vec<_>, FreenessError>>()?;
        Self::new(parts)
    }

    /// Resolves a parsed word file against a program.
    pub fn from_file(p: &Program, file: &WordFile) -> Result<Self, FreenessError> {
        Self::new(resolve_word(p, file)?)
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[(CollectionSpec, MatrixWord)] {
        &self.parts
    }

    /// Cyclic rotation by `k` places to the left.
    pub fn rotate(&self, k: usize) -> Self {
        let mut parts = self.parts.clone();
        if !parts.is_empty() {
            let len = parts.len();
            parts.rotate_left(k % len);
        }
        AlternatingWord { parts }
    }
}

/// Factors of a word file with their collections, in file order.
pub fn resolve_word(
    p: &Program,
    file: &WordFile,
) -> Result<Vec<(CollectionSpec, MatrixWord)>, FreenessError> {
    let mut parts = Vec::with_capacity(file.factors.len());
    for f in &file.factors {
        match f {
            WordFactor::Mat { terms } => {
                let mut ws = Vec::with_capacity(terms.len());
                for t in terms {
                    let mut w = MatrixWord::identity();
                    for (name, tr) in &t.factors {
                        w = w.then(MatrixWord::mat(p, name, *tr)?);
                    }
                    ws.push((t.coef, w));
                }
                let word = if ws.len() == 1 && ws[0].0 == 1.0 {
                    ws.pop().unwrap().1
                } else {
                    MatrixWord::sum(ws)
                };
                let c = collection_of(&word)?.ok_or_else(|| {
                    FreenessError::NotAlternating("mat factor without matrices".into())
                })?;
                parts.push((c, word));
            }
            WordFactor::Diag {
                vectors,
                expr,
                label,
            } => {
                let names: Vec<&str> = vectors.iter().map(String::as_str).collect();
                let word = MatrixWord::diag(p, &names, expr.clone())?;
                parts.push((CollectionSpec::Diag(label.clone()), word));
            }
        }
    }
    Ok(parts)
}

/// Product of all factors, leftmost first.
pub fn word_product(parts: &[(CollectionSpec, MatrixWord)]) -> MatrixWord {
    parts
        .iter()
        .fold(MatrixWord::identity(), |acc, (_, w)| acc.then(w.clone()))
}

fn square_dim(r: &Realization, word: &AlternatingWord) -> Result<Option<usize>, FreenessError> {
    let p = r.program();
    let mut class = None;
    for (_, w) in word.parts() {
        match w.shape(p)? {
            None => {}
            Some((a, b)) if a != b => {
                return Err(FiniteError::ShapeMismatch("polynomial is not square".into()).into())
            }
            Some((a, _)) => match class {
                Some(c) if c != a => {
                    return Err(FiniteError::ShapeMismatch(
                        "polynomials act on different spaces".into(),
                    )
                    .into())
                }
                _ => class = Some(a),
            },
        }
    }
    Ok(class.map(|c| r.dims().get(c)))
}

/// `n⁻¹ tr Π (P_i − τ_i)` with `τ_i = n⁻¹ tr P_i` on the same realization,
/// and its standard error (zero when exact). The rightmost factor acts
/// first.
///
/// The probe estimator uses probes rescaled to `|z|² = n` and estimates
/// each `τ_i` from the same probes, so a single factor centres to zero.
pub fn centered_trace(
    r: &Realization,
    word: &AlternatingWord,
    method: TraceMethod,
) -> Result<(f64, f64), FreenessError> {
    let Some(n) = square_dim(r, word)? else {
        return Ok((if word.is_empty() { 1.0 } else { 0.0 }, 0.0));
    };
    match method {
        TraceMethod::Exact => {
            let cap = r.config().exact_cap;
            if n > cap {
                return Err(FiniteError::CapExceeded { n, cap }.into());
            }
            let mut acc = Acc::Identity;
            for (i, (_, w)) in word.parts().iter().enumerate().rev() {
                let f = match w.factors.as_slice() {
                    [Factor::Diag { vectors, psi }] => {
                        let mut d = r.diag_of(vectors, psi);
                        let tau = crate::numeric::mean(&d);
                        d.iter_mut().for_each(|x| *x -= tau);
                        Acc::Diag(d)
                    }
                    _ => {
                        let mut m = materialize(r, w)?;
                        let tau = m.trace() / n as f64;
                        for j in 0..n {
                            m[(j, j)] -= tau;
                        }
                        Acc::Dense(m)
                    }
                };
                if i == 0 {
                    return Ok((f.trace_with(&acc, n) / n as f64, 0.0));
                }
                acc = f.times(acc);
            }
            Ok((1.0, 0.0))
        }
        TraceMethod::Hutchinson(p) => {
            let p = p.max(1);
            let mut data = vec![0.0; n * p];
            rng::fill_normal_chunked(r.seed(), "centered-probe", &mut data, n, 1.0);
            let mut z = DMatrix::from_vec(n, p, data);
            for mut col in z.column_iter_mut() {
                let s = (n as f64).sqrt() / col.norm();
                col *= s;
            }
            let dots = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> Vec<f64> {
                a.column_iter()
                    .zip(b.column_iter())
                    .map(|(x, y)| {
                        let prod: Vec<f64> = x.iter().zip(y.iter()).map(|(u, v)| u * v).collect();
                        pairwise_sum(&prod) / n as f64
                    })
                    .collect()
            };
            let mut taus = Vec::with_capacity(word.len());
            for (_, w) in word.parts() {
                let y = word_apply_block(r, w, &z)?;
                taus.push(mean(&dots(&z, &y)));
            }
            let mut y = z.clone();
            for ((_, w), tau) in word.parts().iter().zip(&taus).rev() {
                let next = word_apply_block(r, w, &y)?;
                y = next - &y * *tau;
            }
            Ok(mean_stderr(&dots(&z, &y)))
        }
    }
}

/// Running right factor of an exact centred product.
enum Acc {
    Identity,
    Diag(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Acc {
    fn times(self, right: Acc) -> Acc {
        match (self, right) {
            (a, Acc::Identity) => a,
            (Acc::Identity, b) => b,
            (Acc::Diag(d), Acc::Diag(e)) => {
                Acc::Diag(d.iter().zip(&e).map(|(x, y)| x * y).collect())
            }
            (Acc::Diag(d), Acc::Dense(mut m)) => {
                for mut col in m.column_iter_mut() {
                    col.iter_mut().zip(&d).for_each(|(v, s)| *v *= s);
                }
                Acc::Dense(m)
            }
            (Acc::Dense(mut m), Acc::Diag(d)) => {
                for (mut col, s) in m.column_iter_mut().zip(&d) {
                    col *= *s;
                }
                Acc::Dense(m)
            }
            (Acc::Dense(a), Acc::Dense(b)) => Acc::Dense(a * b),
        }
    }

    /// `tr(self · right)` without forming the product.
    fn trace_with(&self, right: &Acc, n: usize) -> f64 {
        match (self, right) {
            (Acc::Identity, Acc::Identity) => n as f64,
            (Acc::Identity, b) | (b, Acc::Identity) => match b {
                Acc::Diag(d) => pairwise_sum(d),
                Acc::Dense(m) => m.trace(),
                Acc::Identity => unreachable!(),
            },
            (Acc::Diag(d), Acc::Diag(e)) => {
                pairwise_sum(&d.iter().zip(e).map(|(x, y)| x * y).collect::<Vec<_>>())
            }
            (Acc::Diag(d), Acc::Dense(m)) | (Acc::Dense(m), Acc::Diag(d)) => pairwise_sum(
                &d.iter()
                    .enumerate()
                    .map(|(i, x)| x * m[(i, i)])
                    .collect::<Vec<_>>(),
            ),
            // tr(AB) = Σ_ij A_ij B_ji
            (Acc::Dense(a), Acc::Dense(b)) => a.dot(&b.transpose()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreenessRow {
    pub n: usize,
    pub seed_count: usize,
    pub median_abs: f64,
    pub mean_abs: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreenessReport {
    pub rows: Vec<FreenessRow>,
    /// Least-squares slope of `ln median_abs` against `ln n`.
    pub slope: f64,
}

impl FreenessReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,seed_count,median_abs,mean_abs,std\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e}\n",
                r.n, r.seed_count, r.median_abs, r.mean_abs, r.std
            ));
        }
        s
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Default trace method for width `n`.
pub fn default_method(n: usize) -> TraceMethod {
    TraceMethod::auto(n, EXACT_TRACE_MAX, DEFAULT_PROBES)
}

/// `|centered_trace|` over seeds `0..seeds` at each `n`. The word is
/// resolved against the program once and reused at every width.
pub fn freeness_sweep(
    program: &Program,
    word: &AlternatingWord,
    n_list: &[usize],
    seeds: usize,
    method: impl Fn(usize) -> TraceMethod + Sync,
) -> Result<FreenessReport, FreenessError> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FiniteError::ShapeMismatch("n list must be strictly ascending".into()).into());
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let dims = DimAssignment::from_ratios(program, n);
        let vals = (0..seeds as u64)
            .into_par_iter()
            .map(|seed| {
                let config = ExecConfig {
                    exact_cap: EXACT_TRACE_MAX.max(ExecConfig::default().exact_cap),
                    ..ExecConfig::default()
                };
                let r = instantiate_with(program, &dims, seed, config)?;
                Ok(centered_trace(&r, word, method(n))?.0.abs())
            })
            .collect::<Result<Vec<f64>, FreenessError>>()?;
        rows.push(FreenessRow {
            n,
            seed_count: seeds,
            median_abs: median(&vals),
            mean_abs: mean(&vals),
            std: std_dev(&vals),
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.median_abs.max(1e-300).ln()).collect();
    let slope = ls_slope(&lx, &ly);
    Ok(FreenessReport { rows, slope })
}

struct Namer<'a> {
    program: &'a Program,
    taken: std::collections::HashSet<String>,
    counter: usize,
}

impl Namer<'_> {
    fn fresh(&mut self, stem: &str) -> String {
        loop {
            let name = format!("fip_{stem}{}", self.counter);
            self.counter += 1;
            if self.program.symbol(&name).is_none() && self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Appends instructions computing `word · input` and returns the name of
/// the result.
fn emit_apply(
    p: &Program,
    word: &MatrixWord,
    input: &str,
    namer: &mut Namer,
    out: &mut Vec<Decl>,
) -> Result<String, FreenessError> {
    let mut cur = input.to_string();
    for f in word.factors.iter().rev() {
        cur = match f {
            Factor::Mat { matrix, transposed } => {
                let name = namer.fresh("m");
                out.push(Decl::MatMul {
                    output: name.clone(),
                    matrix: p.matrix(*matrix).name.clone(),
                    transposed: *transposed,
                    input: cur,
                });
                name
            }
            Factor::Diag { vectors, psi } => {
                let k = vectors.len();
                let args: Vec<Expr> = (0..k).map(Expr::input).collect();
                let expr = psi.expr().substitute(&args) * Expr::input(k);
                let mut inputs: Vec<String> =
                    vectors.iter().map(|v| p.vector(*v).name.clone()).collect();
                inputs.push(cur);
                let name = namer.fresh("d");
                out.push(Decl::Nonlin {
                    output: name.clone(),
                    expr: NonlinExpr::infer(expr)?,
                    inputs,
                    params: Vec::new(),
                });
                name
            }
            Factor::Sum(terms) => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|(_, w)| emit_apply(p, w, &cur, namer, out))
                    .collect::<Result<_, _>>()?;
                let expr = terms
                    .iter()
                    .enumerate()
                    .map(|(i, (c, _))| Expr::constant(*c) * Expr::input(i))
                    .reduce(|a, b| a + b)
                    .unwrap_or_else(|| Expr::constant(0.0) * Expr::input(0));
                let inputs = if parts.is_empty() { vec![cur] } else { parts };
                let name = namer.fresh("s");
                out.push(Decl::Nonlin {
                    output: name.clone(),
                    expr: NonlinExpr::infer(expr)?,
                    inputs,
                    params: Vec::new(),
                });
                name
            }
        };
    }
    Ok(cur)
}

/// Name of the final scalar of a witness program.
pub const WITNESS_SCALAR: &str = "fip_final";

/// Extends `base` with the probe recursion
/// `v⁰ = v`, `vⁱ = Aⁱ vⁱ⁻¹ − cᵢ vⁱ⁻¹`, `cᵢ = (1/n) uⁱᵀ Aⁱ uⁱ`,
/// where `Aⁱ` runs through the word from the right, and a final scalar
/// `(1/n) vᵀ vᵗ`. The `cᵢ` are named `fip_tau<i>` in word order.
pub fn fip_witness_program(
    base: &Program,
    word: &AlternatingWord,
) -> Result<Program, FreenessError> {
    let mut decls = base.to_decls();
    let class = {
        let mut c = None;
        for (_, w) in word.parts() {
            if let Some((a, b)) = w.shape(base)? {
                if a != b || c.is_some_and(|x| x != a) {
                    return Err(FiniteError::ShapeMismatch("word is not square".into()).into());
                }
                c = Some(a);
            }
        }
        c.map(|c| base.class(c).name.clone())
            .unwrap_or_else(|| "n".to_string())
    };
    let mut namer = Namer {
        program: base,
        taken: Default::default(),
        counter: 0,
    };
    let v = namer.fresh("v");
    let t = word.len();
    let us: Vec<String> = (0..t).map(|_| namer.fresh("u")).collect();
    for name in std::iter::once(&v).chain(&us) {
        decls.push(Decl::Vector {
            name: name.clone(),
            class: class.clone(),
            mean: 0.0,
            var: 1.0,
        });
    }
    let mut cur = v.clone();
    for (i, u) in us.iter().enumerate() {
        // word position of Aⁱ counted from the right
        let pos = t - 1 - i;
        let a = &word.parts()[pos].1;
        let au = emit_apply(base, a, u, &mut namer, &mut decls)?;
        let tau = format!("fip_tau{}", pos + 1);
        decls.push(Decl::Moment {
            output: tau.clone(),
            expr: NonlinExpr::product(),
            inputs: vec![u.clone(), au],
            params: Vec::new(),
        });
        let av = emit_apply(base, a, &cur, &mut namer, &mut decls)?;
        let next = namer.fresh("w");
        decls.push(Decl::Nonlin {
            output: next.clone(),
            expr: NonlinExpr::new(Expr::input(0) - Expr::param(0) * Expr::input(1), 2, 1)?,
            inputs: vec![av, cur],
            params: vec![tau],
        });
        cur = next;
    }
    decls.push(Decl::Moment {
        output: WITNESS_SCALAR.to_string(),
        expr: NonlinExpr::product(),
        inputs: vec![v, cur],
        params: Vec::new(),
    });
    Ok(build_program(&decls)?)
}

/// Activation with an explicitly supplied (weak) derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub name: String,
    pub phi: NonlinExpr,
    pub phi_prime: NonlinExpr,
}

impl Activation {
    pub fn identity() -> Self {
        Activation {
            name: "identity".into(),
            phi: NonlinExpr::identity(),
            phi_prime: NonlinExpr::new(Expr::constant(1.0), 1, 0).expect("constant derivative"),
        }
    }

    pub fn relu() -> Self {
        Activation {
            name: "relu".into(),
            phi: NonlinExpr::relu(),
            phi_prime: NonlinExpr::step(),
        }
    }

    pub fn tanh() -> Self {
        Activation {
            name: "tanh".into(),
            phi: NonlinExpr::tanh(),
            phi_prime: parse_expr("1 - tanh(x0)^2").expect("valid derivative"),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "identity" | "linear" => Some(Self::identity()),
            "relu" => Some(Self::relu()),
            "tanh" => Some(Self::tanh()),
            _ => None,
        }
    }
}

fn eval1(f: &NonlinExpr, x: f64) -> f64 {
    f.eval(&[x], &[])
}

/// `[q₁, …, q_L]` with `q_l = E φ(√q_{l−1} ξ)²`.
pub fn mlp_forward_variances(phi: &NonlinExpr, q1: f64, l: usize) -> Vec<f64> {
    let gh = GaussHermite::new(QUADRATURE_ORDER);
    let mut q = Vec::with_capacity(l);
    if l == 0 {
        return q;
    }
    q.push(q1);
    for _ in 1..l {
        let s = q.last().unwrap().max(0.0).sqrt();
        q.push(gh.expect(|x| eval1(phi, s * x).powi(2)));
    }
    q
}

/// `m_k = E φ'(√q ξ)^{2k}` for `k = 1..=k_max`.
pub fn d_squared_moments(phi_prime: &NonlinExpr, q: f64, k_max: usize) -> MomentSeq {
    let gh = GaussHermite::new(QUADRATURE_ORDER);
    let s = q.max(0.0).sqrt();
    MomentSeq::new(
        (1..=k_max)
            .map(|k| gh.expect(|x| eval1(phi_prime, s * x).powi(2 * k as i32)))
            .collect(),
    )
}

/// Limiting moments of `JᵀJ` for an `L`-layer network with input
/// preactivation variance `q1`: the `⊠` fold of the `L−1` squared
/// diagonal laws and the `L−1` MP laws with the given ratios (1 when
/// the list is short).
pub fn jacobian_limit_moments(
    l: usize,
    act: &Activation,
    q1: f64,
    rho_list: &[f64],
    k_max: usize,
) -> Result<MomentSeq, FreenessError> {
    let q = mlp_forward_variances(&act.phi, q1, l.saturating_sub(1));
    let mut acc = MomentSeq::point_mass(1.0, k_max);
    for (i, ql) in q.iter().enumerate() {
        let d = d_squared_moments(&act.phi_prime, *ql, k_max);
        acc = free_mul_conv(&acc, &d, k_max)?;
        let rho = rho_list.get(i).copied().unwrap_or(1.0);
        acc = free_mul_conv(&acc, &mp_moment_seq(k_max, rho), k_max)?;
    }
    Ok(acc)
}

/// Program of the first `L−1` layers: `h¹ ~ N(0, q1)`,
/// `x^l = φ(h^l)`, `h^{l+1} = W^{l+1} x^l`, all widths `n`, with the
/// moments `q<l> = (1/n)|h^l|²`.
pub fn mlp_program(l: usize, act: &Activation, q1: f64) -> Result<Program, FreenessError> {
    let mut decls = Vec::new();
    for i in 2..=l {
        decls.push(Decl::Matrix {
            name: format!("W{i}"),
            rows: "n".into(),
            cols: "n".into(),
            sigma2: 1.0,
        });
    }
    decls.push(Decl::Vector {
        name: "h1".into(),
        class: "n".into(),
        mean: 0.0,
        var: q1,
    });
    for i in 1..l {
        decls.push(Decl::Moment {
            output: format!("q{i}"),
            expr: NonlinExpr::square(),
            inputs: vec![format!("h{i}")],
            params: Vec::new(),
        });
        if i + 1 == l {
            break;
        }
        decls.push(Decl::Nonlin {
            output: format!("x{i}"),
            expr: act.phi.clone(),
            inputs: vec![format!("h{i}")],
            params: Vec::new(),
        });
        decls.push(Decl::MatMul {
            output: format!("h{}", i + 1),
            matrix: format!("W{}", i + 1),
            transposed: false,
            input: format!("x{i}"),
        });
    }
    Ok(build_program(&decls)?)
}

/// `J = W^L D^{L−1} W^{L−1} ⋯ W² D¹` with `D^l = Diag(φ'(h^l))`.
pub fn jacobian_word(p: &Program, l: usize, act: &Activation) -> Result<MatrixWord, FreenessError> {
    let mut j = MatrixWord::identity();
    for i in (1..l).rev() {
        j = j
            .then(MatrixWord::mat(p, &format!("W{}", i + 1), false)?)
            .then(MatrixWord::diag(
                p,
                &[&format!("h{i}")],
                act.phi_prime.clone(),
            )?);
    }
    Ok(j)
}

/// Empirical `[(1/n) tr (JᵀJ)^k]` for `k = 1..=k_max` at width `n`.
pub fn jacobian_finite(
    l: usize,
    n: usize,
    act: &Activation,
    q1: f64,
    seed: u64,
    k_max: usize,
    method: TraceMethod,
) -> Result<Vec<(f64, f64)>, FreenessError> {
    let p = mlp_program(l, act, q1)?;
    let r = instantiate(&p, &DimAssignment::from_ratios(&p, n), seed)?;
    let j = jacobian_word(&p, l, act)?;
    let jtj = j.transpose().then(j);
    Ok(spectral_moments(&r, &jtj, k_max, method)?)
}
