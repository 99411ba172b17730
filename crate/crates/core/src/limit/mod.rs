//! Infinite-width limits of programs.
//!
//! Every vector `h` gets a column of `N` joint samples of its limit `Z^h`.
//! A `MatMul` output is split as `Z = Ẑ + Ż`:
//!
//! * `Ẑ` belongs to the hat family of `(W, direction)`. Members of one
//!   family are jointly Gaussian with covariance `σ̊² E Z^x Z^y` over their
//!   inputs; distinct families are independent of each other and of the
//!   initial vectors. New members are drawn by Gaussian conditioning.
//! * `Ż` is a linear combination of the inputs `yⁱ` of the opposite
//!   family, with coefficients `(σ̊²_dir / σ̊²_opp) C⁺ b`, where
//!   `C_ij = E Z^{yⁱ} Z^{yʲ}` and `b_i = E Ẑ^{opp_i} Z^x`.
//!
//! `σ̊²` is `σ_W²` forward and `(rows/cols) σ_W²` transposed, with the
//! ratio taken from the declared class ratios.

mod hermite;
mod linalg;

pub use hermite::{hermite_coeffs, hermite_pair_expectation, HermitePair};
pub use linalg::{clip_psd, pseudoinverse};

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::finite::rng;
use crate::ir::{
    eval_columns, Instruction, IrError, MatId, NonlinExpr, Origin, Program, ScalarId, VecId,
};
use crate::numeric::{mean_stderr, pairwise_sum};

pub const DEFAULT_SAMPLES: usize = 200_000;
pub const DEFAULT_REPLICATES: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("covariance extension is not PSD: eigenvalue {min:e} against variance {var:e}")]
    NonPSDExtension { min: f64, var: f64 },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConfig {
    pub samples: usize,
    pub seed: u64,
    /// Relative singular-value cutoff for pseudoinverses.
    pub rel_tol: f64,
    /// Independent ensembles the samples are split into; standard errors
    /// come from their spread (per-sample errors when 1).
    pub replicates: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            rel_tol: 1e-10,
            replicates: DEFAULT_REPLICATES,
        }
    }
}

/// Symbolic shape of a limit variable.
#[derive(Debug, Clone, PartialEq)]
pub enum ZNode {
    InitGaussian(usize),
    GVarSum {
        family: usize,
        hat: usize,
        dot: Vec<(VecId, f64)>,
    },
    NonlinApp {
        expr: NonlinExpr,
        children: Vec<VecId>,
        params: Vec<f64>,
    },
}

/// Jointly Gaussian hat variables of one `(matrix, direction)` pair.
#[derive(Debug, Clone)]
pub struct HatFamily {
    pub matrix: MatId,
    pub transposed: bool,
    pub sigma2: f64,
    pub inputs: Vec<VecId>,
    pub outputs: Vec<VecId>,
    hats: Vec<Vec<f64>>,
    cov: DMatrix<f64>,
}

impl HatFamily {
    pub fn len(&self) -> usize {
        self.hats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hats.is_empty()
    }

    /// Target covariance `Σ_F` of the hat members.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn hat(&self, i: usize) -> &[f64] {
        &self.hats[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZDotCoef {
    pub gvar: VecId,
    pub y: VecId,
    pub coef: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: &'static str,
    pub object: String,
    pub detail: String,
}

/// One independent sample ensemble of all limit variables. Only ever
/// grows.
#[derive(Debug, Clone)]
pub struct Ensemble {
    program: Program,
    config: LimitConfig,
    replicate: usize,
    samples: usize,
    pos: usize,
    cols: Vec<Vec<f64>>,
    nodes: Vec<ZNode>,
    scalars: Vec<Option<(f64, f64)>>,
    families: Vec<HatFamily>,
    family_of: HashMap<(MatId, bool), usize>,
    zdots: Vec<ZDotCoef>,
    diagnostics: Vec<Diagnostic>,
}

/// `(1/N) Σ a_s b_s` with a fixed reduction order.
pub fn sample_dot(a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&p) / a.len() as f64
}

/// Sample correlation (uncentered means are removed first).
pub fn sample_corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (crate::numeric::mean(a), crate::numeric::mean(b));
    let ca: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let cb: Vec<f64> = b.iter().map(|x| x - mb).collect();
    let d = (sample_dot(&ca, &ca) * sample_dot(&cb, &cb)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        sample_dot(&ca, &cb) / d
    }
}

fn normal_column(seed: u64, key: &str, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    rng::fill_normal_chunked(seed, key, &mut v, 4096, 1.0);
    v
}

impl Ensemble {
    /// State before the first instruction: initial vectors sampled from
    /// their joint Gaussian, initial scalars at their limits.
    pub fn new(program: &Program, config: LimitConfig, replicate: usize, samples: usize) -> Self {
        let n = samples;
        let k = program.n_initial();
        let mut cols = Vec::with_capacity(program.vectors().len());
        let mut nodes = Vec::new();
        if k > 0 {
            let eig = SymmetricEigen::new(program.init_cov().clone());
            let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            let l = &eig.eigenvectors * DMatrix::from_diagonal(&root);
            let noise: Vec<Vec<f64>> = (0..k)
                .map(|j| {
                    let key = format!("limit:{replicate}:init:{}", program.vectors()[j].name);
                    normal_column(config.seed, &key, n)
                })
                .collect();
            for i in 0..k {
                let mut col = vec![program.init_mean()[i]; n];
                for (j, xi) in noise.iter().enumerate() {
                    let c = l[(i, j)];
                    if c != 0.0 {
                        for (o, x) in col.iter_mut().zip(xi) {
                            *o += c * x;
                        }
                    }
                }
                cols.push(col);
                nodes.push(ZNode::InitGaussian(i));
            }
        }
        let mut scalars = vec![None; program.scalars().len()];
        for (i, s) in program.init_scalars().iter().enumerate() {
            scalars[i] = Some((s.limit, 0.0));
        }
        Ensemble {
            program: program.clone(),
            config,
            replicate,
            samples,
            pos: 0,
            cols,
            nodes,
            scalars,
            families: Vec::new(),
            family_of: HashMap::new(),
            zdots: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn config(&self) -> LimitConfig {
        self.config
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Number of instructions processed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn families(&self) -> &[HatFamily] {
        &self.families
    }

    pub fn family(&self, matrix: &str, transposed: bool) -> Option<&HatFamily> {
        let m = self.program.matrix_id(matrix).ok()?;
        self.family_of
            .get(&(m, transposed))
            .map(|&i| &self.families[i])
    }

    pub fn zdots(&self) -> &[ZDotCoef] {
        &self.zdots
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn node(&self, v: VecId) -> &ZNode {
        &self.nodes[v.0]
    }

    /// Samples of `Z^v`; only defined for vectors already processed.
    pub fn column(&self, v: VecId) -> &[f64] {
        &self.cols[v.0]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[f64], LimitError> {
        let id = self
            .program
            .vector_id(name)
            .map_err(|_| LimitError::UnknownSymbol(name.to_string()))?;
        self.cols
            .get(id.0)
            .map(Vec::as_slice)
            .ok_or_else(|| LimitError::UnknownSymbol(name.to_string()))
    }

    fn effective_sigma2(&self, m: MatId, transposed: bool) -> f64 {
        let d = self.program.matrix(m);
        if transposed {
            let rows = self.program.class(d.rows).ratio;
            let cols = self.program.class(d.cols).ratio;
            rows / cols * d.sigma2
        } else {
            d.sigma2
        }
    }

    fn family_index(&mut self, m: MatId, transposed: bool) -> usize {
        if let Some(&i) = self.family_of.get(&(m, transposed)) {
            return i;
        }
        let sigma2 = self.effective_sigma2(m, transposed);
        self.families.push(HatFamily {
            matrix: m,
            transposed,
            sigma2,
            inputs: Vec::new(),
            outputs: Vec::new(),
            hats: Vec::new(),
            cov: DMatrix::zeros(0, 0),
        });
        let i = self.families.len() - 1;
        self.family_of.insert((m, transposed), i);
        i
    }

    /// Adds a member to a family with covariance row `c` against the
    /// existing members and variance `v`: the new column is the
    /// conditional mean `cᵀΣ⁺(members)` plus fresh noise with the
    /// conditional variance, clamped at zero.
    pub fn hat_extend(
        &mut self,
        family: usize,
        c: &[f64],
        v: f64,
        label: &str,
    ) -> Result<usize, LimitError> {
        let n = self.samples;
        let f = &self.families[family];
        let m = f.hats.len();
        assert_eq!(c.len(), m, "covariance row length");
        let mut ext = DMatrix::zeros(m + 1, m + 1);
        ext.view_mut((0, 0), (m, m)).copy_from(&f.cov);
        for i in 0..m {
            ext[(i, m)] = c[i];
            ext[(m, i)] = c[i];
        }
        ext[(m, m)] = v;
        let (ext, min) = clip_psd(&ext);
        let scale = v.abs().max(1e-300);
        if min < -1e-6 * scale {
            return Err(LimitError::NonPSDExtension { min, var: v });
        }
        let sigma = ext.view((0, 0), (m, m)).into_owned();
        let c = ext.view((0, m), (m, 1)).into_owned();
        let v = ext[(m, m)];
        let beta = if m > 0 {
            pseudoinverse(&sigma, self.config.rel_tol) * &c
        } else {
            DMatrix::zeros(0, 1)
        };
        let cond = v - (c.transpose() * &beta)[(0, 0)];
        let cond = if cond <= 1e-10 * scale { 0.0 } else { cond };
        if cond == 0.0 {
            self.diagnostics.push(Diagnostic {
                kind: "DegenerateGVar",
                object: label.to_string(),
                detail: format!("conditional variance collapsed (variance {v:e})"),
            });
        }
        let mut col = vec![0.0; n];
        for (i, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                for (o, h) in col.iter_mut().zip(&f.hats[i]) {
                    *o += b * h;
                }
            }
        }
        if cond > 0.0 {
            let sd = cond.sqrt();
            let key = format!(
                "limit:{}:hat:{}:{}:{}",
                self.replicate,
                self.program.matrix(f.matrix).name,
                if f.transposed { "T" } else { "F" },
                m
            );
            let xi = normal_column(self.config.seed, &key, n);
            for (o, x) in col.iter_mut().zip(&xi) {
                *o += sd * x;
            }
        }
        let f = &mut self.families[family];
        f.cov = ext;
        f.hats.push(col);
        Ok(m)
    }

    /// Coefficients of `Ż` for `W x` (or `Wᵀ x`) over the inputs of the
    /// opposite family, with first-order Monte Carlo standard errors.
    pub fn zdot_coeffs(&self, matrix: MatId, transposed: bool, x: VecId) -> Vec<(VecId, f64, f64)> {
        let Some(&opp) = self.family_of.get(&(matrix, !transposed)) else {
            return Vec::new();
        };
        let f = &self.families[opp];
        let r = f.inputs.len();
        if r == 0 {
            return Vec::new();
        }
        let s = self.effective_sigma2(matrix, transposed) / f.sigma2;
        let xs = &self.cols[x.0];
        let ys: Vec<&[f64]> = f.inputs.iter().map(|y| self.cols[y.0].as_slice()).collect();
        let mut c = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..=i {
                let v = sample_dot(ys[i], ys[j]);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        let b = DVector::from_iterator(r, (0..r).map(|i| sample_dot(&f.hats[i], xs)));
        let cp = pseudoinverse(&c, self.config.rel_tol);
        let d = &cp * &b;
        // Influence of each sample on C⁺b: r_s = Ẑ_s x_s − y_s (y_sᵀ d).
        let n = xs.len();
        let mut resid = DMatrix::zeros(n, r);
        for a in 0..n {
            let yd: f64 = (0..r).map(|j| ys[j][a] * d[j]).sum();
            for i in 0..r {
                resid[(a, i)] = f.hats[i][a] * xs[a] - ys[i][a] * yd;
            }
        }
        let mut cov_r = DMatrix::zeros(r, r);
        for i in 0..r {
            let ci: Vec<f64> = resid.column(i).iter().copied().collect();
            let mi = crate::numeric::mean(&ci);
            for j in 0..=i {
                let cj: Vec<f64> = resid.column(j).iter().copied().collect();
                let mj = crate::numeric::mean(&cj);
                let p: Vec<f64> = ci
                    .iter()
                    .zip(&cj)
                    .map(|(u, v)| (u - mi) * (v - mj))
                    .collect();
                let v = pairwise_sum(&p) / (n as f64 - 1.0).max(1.0);
                cov_r[(i, j)] = v;
                cov_r[(j, i)] = v;
            }
        }
        let cov_a = &cp * cov_r * &cp * (s * s / n as f64);
        f.inputs
            .iter()
            .enumerate()
            .map(|(i, y)| (*y, s * d[i], cov_a[(i, i)].max(0.0).sqrt()))
            .collect()
    }

    /// Processes the next instruction; returns `false` at the end.
    pub fn advance(&mut self) -> Result<bool, LimitError> {
        let Some(ins) = self.program.instructions().get(self.pos).cloned() else {
            return Ok(false);
        };
        match ins {
            Instruction::MatMul {
                matrix,
                transposed,
                input,
                output,
            } => {
                let fam = self.family_index(matrix, transposed);
                let s2 = self.families[fam].sigma2;
                let xs = &self.cols[input.0];
                let c: Vec<f64> = self.families[fam]
                    .inputs
                    .iter()
                    .map(|y| s2 * sample_dot(&self.cols[y.0], xs))
                    .collect();
                let v = s2 * sample_dot(xs, xs);
                let name = self.program.vector(output).name.clone();
                let hat = self.hat_extend(fam, &c, v, &name)?;
                let dot = self.zdot_coeffs(matrix, transposed, input);
                let mut col = self.families[fam].hats[hat].clone();
                for (y, a, _) in &dot {
                    for (o, yv) in col.iter_mut().zip(&self.cols[y.0]) {
                        *o += a * yv;
                    }
                }
                for (y, a, se) in &dot {
                    self.zdots.push(ZDotCoef {
                        gvar: output,
                        y: *y,
                        coef: *a,
                        stderr: *se,
                    });
                }
                let f = &mut self.families[fam];
                f.inputs.push(input);
                f.outputs.push(output);
                self.cols.push(col);
                self.nodes.push(ZNode::GVarSum {
                    family: fam,
                    hat,
                    dot: dot.iter().map(|(y, a, _)| (*y, *a)).collect(),
                });
            }
            Instruction::Nonlin {
                expr,
                inputs,
                params,
                ..
            } => {
                let pv = self.param_values(&params);
                let col = self.eval(&expr, &inputs, &pv);
                self.cols.push(col);
                self.nodes.push(ZNode::NonlinApp {
                    expr,
                    children: inputs,
                    params: pv,
                });
            }
            Instruction::Moment {
                expr,
                inputs,
                params,
                output,
            } => {
                let pv = self.param_values(&params);
                let col = self.eval(&expr, &inputs, &pv);
                self.scalars[output.0] = Some(mean_stderr(&col));
            }
        }
        self.pos += 1;
        Ok(true)
    }

    fn param_values(&self, params: &[ScalarId]) -> Vec<f64> {
        params
            .iter()
            .map(|s| self.scalars[s.0].expect("parameters precede use").0)
            .collect()
    }

    fn eval(&self, expr: &NonlinExpr, inputs: &[VecId], params: &[f64]) -> Vec<f64> {
        let cols: Vec<&[f64]> = inputs.iter().map(|v| self.cols[v.0].as_slice()).collect();
        eval_columns(expr, &cols, params, self.samples)
    }

    /// `E ψ(Z^{h¹}, …, Z^{h^k})` with its Monte Carlo standard error.
    pub fn expect(&self, psi: &NonlinExpr, vectors: &[&str]) -> Result<(f64, f64), LimitError> {
        let ids = vectors
            .iter()
            .map(|v| {
                self.program
                    .vector_id(v)
                    .map_err(|_| LimitError::UnknownSymbol(v.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.expect_ids(psi, &ids)
    }

    pub fn expect_ids(&self, psi: &NonlinExpr, ids: &[VecId]) -> Result<(f64, f64), LimitError> {
        if psi.inputs() != ids.len() || psi.params() != 0 {
            return Err(IrError::ArityMismatch {
                what: "test function".into(),
                expected: psi.inputs(),
                got: ids.len(),
            }
            .into());
        }
        self.program.shared_class(ids)?;
        if let Some(v) = ids.iter().find(|v| v.0 >= self.cols.len()) {
            return Err(LimitError::UnknownSymbol(
                self.program.vector(*v).name.clone(),
            ));
        }
        Ok(mean_stderr(&self.eval(psi, ids, &[])))
    }

    /// `(θ̊, stderr)`: exact for initial scalars, Monte Carlo for moments.
    pub fn scalar_limit(&self, name: &str) -> Result<(f64, f64), LimitError> {
        let id = self
            .program
            .scalar_id(name)
            .map_err(|_| LimitError::UnknownSymbol(name.to_string()))?;
        self.scalars[id.0].ok_or_else(|| LimitError::UnknownSymbol(name.to_string()))
    }

    /// ZDot coefficients recorded for `gvar`, keyed by the name of `yʲ`.
    pub fn zdot_of(&self, gvar: &str) -> Vec<(String, f64, f64)> {
        let Ok(id) = self.program.vector_id(gvar) else {
            return Vec::new();
        };
        self.zdots
            .iter()
            .filter(|z| z.gvar == id)
            .map(|z| (self.program.vector(z.y).name.clone(), z.coef, z.stderr))
            .collect()
    }

    /// Rows `(object, kind, value, stderr)` for every scalar limit and
    /// every ZDot coefficient, in program order.
    pub fn report(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for (i, s) in self.program.scalars().iter().enumerate() {
            if let Some((v, se)) = self.scalars[i] {
                let kind = match s.origin {
                    Origin::Initial(_) => "initial_scalar",
                    Origin::Instruction(_) => "scalar",
                };
                out.push(ReportRow {
                    object: s.name.clone(),
                    kind: kind.into(),
                    value: v,
                    stderr: se,
                });
            }
        }
        for z in &self.zdots {
            out.push(ReportRow {
                object: format!(
                    "zdot:{}:{}",
                    self.program.vector(z.gvar).name,
                    self.program.vector(z.y).name
                ),
                kind: "zdot".into(),
                value: z.coef,
                stderr: z.stderr,
            });
        }
        out
    }
}

/// Limit computation over independent replicate ensembles. Values are
/// replicate means; with two or more replicates the standard errors are
/// batch-means errors, which include the noise of every sample-estimated
/// covariance and ZDot coefficient upstream.
#[derive(Debug, Clone)]
pub struct LimitState {
    ensembles: Vec<Ensemble>,
}

fn batch(values: &[(f64, f64)]) -> (f64, f64) {
    if values.len() == 1 {
        return values[0];
    }
    let xs: Vec<f64> = values.iter().map(|v| v.0).collect();
    mean_stderr(&xs)
}

impl LimitState {
    pub fn new(program: &Program, config: LimitConfig) -> Self {
        let r = config.replicates.max(1);
        let per = config.samples.div_ceil(r).max(1);
        LimitState {
            ensembles: (0..r)
                .map(|i| Ensemble::new(program, config, i, per))
                .collect(),
        }
    }

    pub fn run(program: &Program, config: LimitConfig) -> Result<Self, LimitError> {
        let mut s = LimitState::new(program, config);
        while s.advance()? {}
        Ok(s)
    }

    /// Processes the next instruction in every replicate.
    pub fn advance(&mut self) -> Result<bool, LimitError> {
        let mut more = false;
        for e in &mut self.ensembles {
            more = e.advance()?;
        }
        Ok(more)
    }

    pub fn program(&self) -> &Program {
        self.ensembles[0].program()
    }

    pub fn config(&self) -> LimitConfig {
        self.ensembles[0].config()
    }

    pub fn position(&self) -> usize {
        self.ensembles[0].position()
    }

    pub fn ensembles(&self) -> &[Ensemble] {
        &self.ensembles
    }

    /// Families of the first replicate.
    pub fn families(&self) -> &[HatFamily] {
        self.ensembles[0].families()
    }

    pub fn family(&self, matrix: &str, transposed: bool) -> Option<&HatFamily> {
        self.ensembles[0].family(matrix, transposed)
    }

    pub fn node(&self, v: VecId) -> &ZNode {
        self.ensembles[0].node(v)
    }

    /// Diagnostics of all replicates, first occurrence per object.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out: Vec<Diagnostic> = Vec::new();
        for e in &self.ensembles {
            for d in e.diagnostics() {
                if !out.iter().any(|o| o.kind == d.kind && o.object == d.object) {
                    out.push(d.clone());
                }
            }
        }
        out
    }

    /// ZDot coefficients with replicate means and errors.
    pub fn zdots(&self) -> Vec<ZDotCoef> {
        let first = self.ensembles[0].zdots();
        (0..first.len())
            .map(|i| {
                let vals: Vec<(f64, f64)> = self
                    .ensembles
                    .iter()
                    .map(|e| (e.zdots()[i].coef, e.zdots()[i].stderr))
                    .collect();
                let (coef, stderr) = batch(&vals);
                ZDotCoef {
                    gvar: first[i].gvar,
                    y: first[i].y,
                    coef,
                    stderr,
                }
            })
            .collect()
    }

    pub fn zdot_of(&self, gvar: &str) -> Vec<(String, f64, f64)> {
        let Ok(id) = self.program().vector_id(gvar) else {
            return Vec::new();
        };
        self.zdots()
            .into_iter()
            .filter(|z| z.gvar == id)
            .map(|z| (self.program().vector(z.y).name.clone(), z.coef, z.stderr))
            .collect()
    }

    pub fn expect(&self, psi: &NonlinExpr, vectors: &[&str]) -> Result<(f64, f64), LimitError> {
        let vals = self
            .ensembles
            .iter()
            .map(|e| e.expect(psi, vectors))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(batch(&vals))
    }

    pub fn expect_ids(&self, psi: &NonlinExpr, ids: &[VecId]) -> Result<(f64, f64), LimitError> {
        let vals = self
            .ensembles
            .iter()
            .map(|e| e.expect_ids(psi, ids))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(batch(&vals))
    }

    pub fn scalar_limit(&self, name: &str) -> Result<(f64, f64), LimitError> {
        let vals = self
            .ensembles
            .iter()
            .map(|e| e.scalar_limit(name))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(batch(&vals))
    }

    /// Rows `(object, kind, value, stderr)` for every scalar limit and
    /// every ZDot coefficient, in program order.
    pub fn report(&self) -> Vec<ReportRow> {
        let per: Vec<Vec<ReportRow>> = self.ensembles.iter().map(Ensemble::report).collect();
        (0..per[0].len())
            .map(|i| {
                let vals: Vec<(f64, f64)> = per.iter().map(|r| (r[i].value, r[i].stderr)).collect();
                let (value, stderr) = batch(&vals);
                ReportRow {
                    value,
                    stderr,
                    ..per[0][i].clone()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub object: String,
    pub kind: String,
    pub value: f64,
    pub stderr: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{load_program, parse_expr};

    fn cfg(n: usize) -> LimitConfig {
        LimitConfig {
            samples: n,
            seed: 1,
            replicates: 1,
            ..LimitConfig::default()
        }
    }

    #[test]
    fn constant_moment_is_exact() {
        let p = load_program("vector v : n\nm = moment [5 + 0 * x0](v)\n").unwrap();
        let s = LimitState::run(&p, cfg(1000)).unwrap();
        assert_eq!(s.scalar_limit("m").unwrap(), (5.0, 0.0));
    }

    #[test]
    fn initial_scalar() {
        let p = load_program("scalar c limit 0 rule [0, 1] / [1]\n").unwrap();
        let s = LimitState::run(&p, cfg(10)).unwrap();
        assert_eq!(s.scalar_limit("c").unwrap(), (0.0, 0.0));
        assert!(matches!(
            s.scalar_limit("d"),
            Err(LimitError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn first_member_is_unconditional() {
        let p = load_program("matrix W : n x n var 1\nvector v : n\n").unwrap();
        let mut s = Ensemble::new(&p, cfg(50_000), 0, 50_000);
        let f = s.family_index(MatId(0), false);
        s.hat_extend(f, &[], 2.0, "a").unwrap();
        let h = s.families[f].hat(0);
        let (m, se) = mean_stderr(&h.iter().map(|x| x * x).collect::<Vec<_>>());
        assert!((m - 2.0).abs() < 4.0 * se);
        // perfectly correlated second member copies the first
        s.hat_extend(f, &[2.0], 2.0, "b").unwrap();
        let (h0, h1) = (s.families[f].hat(0), s.families[f].hat(1));
        assert!(h0.iter().zip(h1).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0)));
        assert_eq!(s.diagnostics().len(), 1);
        assert!(matches!(
            s.hat_extend(f, &[2.0, 2.0], 1.0, "c"),
            Err(LimitError::NonPSDExtension { .. })
        ));
    }

    #[test]
    fn fresh_matrix_has_no_zdot() {
        let p = load_program("matrix W : n x n var 1\nvector v : n\nx = matmul W v\n").unwrap();
        let s = LimitState::run(&p, cfg(1000)).unwrap();
        assert!(s.zdot_of("x").is_empty());
    }

    #[test]
    fn class_conflict_in_expect() {
        let p = load_program("vector v : n\nvector u : m\n").unwrap();
        let s = LimitState::run(&p, cfg(100)).unwrap();
        assert!(matches!(
            s.expect(&parse_expr("x0 * x1").unwrap(), &["v", "u"]),
            Err(LimitError::Ir(IrError::DimClassConflict(_)))
        ));
    }
}
