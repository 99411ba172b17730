//! Finite-width sampling and execution of programs.
//!
//! Matrices are stored column-major (nalgebra's layout). Each matrix
//! column and each initial noise vector is drawn from its own keyed
//! stream, so a realization is a pure function of `(program, dims, seed)`.

pub mod rng;
mod word;

pub use word::{
    eig_spectrum, materialize, spectral_moments, trace_moment, word_apply, word_apply_block,
    Factor, MatrixWord, TraceMethod,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::ir::{eval_columns, ClassId, Instruction, IrError, NonlinExpr, Program, VecId};
use crate::numeric::pairwise_sum;

/// Products and eigendecompositions are only materialized up to this size.
pub const DEFAULT_EXACT_CAP: usize = 1024;
/// Largest matrix side `instantiate` accepts by default.
pub const DEFAULT_MAX_DIM: usize = 16384;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FiniteError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension {n} exceeds the cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("diagonal factor needs a bounded function")]
    UnboundedDiag,
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Concrete size of every dimension class, plus the base width used for
/// initial scalar rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimAssignment {
    dims: Vec<usize>,
    base: usize,
}

impl DimAssignment {
    /// Class `c` gets `round(ratio_c · n)` (at least 1).
    pub fn from_ratios(p: &Program, n: usize) -> Self {
        let dims = p
            .classes()
            .iter()
            .map(|c| ((c.ratio * n as f64).round() as usize).max(1))
            .collect();
        DimAssignment { dims, base: n }
    }

    /// Explicit sizes per class, in class order.
    pub fn explicit(dims: Vec<usize>) -> Result<Self, FiniteError> {
        if dims.contains(&0) {
            return Err(FiniteError::ShapeMismatch("dimensions must be >= 1".into()));
        }
        let base = dims.iter().copied().max().unwrap_or(1);
        Ok(DimAssignment { dims, base })
    }

    pub fn get(&self, c: ClassId) -> usize {
        self.dims[c.0]
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn max_dim(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.dims
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecConfig {
    pub max_dim: usize,
    pub exact_cap: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            max_dim: DEFAULT_MAX_DIM,
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

/// One finite-width sample of a program. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Realization {
    program: Program,
    seed: u64,
    dims: DimAssignment,
    config: ExecConfig,
    matrices: Vec<DMatrix<f64>>,
    vectors: Vec<DVector<f64>>,
    scalars: Vec<f64>,
}

pub fn instantiate(
    p: &Program,
    dims: &DimAssignment,
    seed: u64,
) -> Result<Realization, FiniteError> {
    instantiate_with(p, dims, seed, ExecConfig::default())
}

pub fn instantiate_with(
    p: &Program,
    dims: &DimAssignment,
    seed: u64,
    config: ExecConfig,
) -> Result<Realization, FiniteError> {
    if dims.as_slice().len() != p.classes().len() {
        return Err(FiniteError::ShapeMismatch(format!(
            "{} dimensions given for {} classes",
            dims.as_slice().len(),
            p.classes().len()
        )));
    }
    let widest = p
        .matrices()
        .iter()
        .map(|m| dims.get(m.rows).max(dims.get(m.cols)))
        .max()
        .unwrap_or(0);
    if widest > config.max_dim {
        return Err(FiniteError::CapExceeded {
            n: widest,
            cap: config.max_dim,
        });
    }
    let matrices = p
        .matrices()
        .iter()
        .map(|m| {
            let (r, c) = (dims.get(m.rows), dims.get(m.cols));
            let mut data = vec![0.0; r * c];
            let sd = (m.sigma2 / c as f64).sqrt();
            rng::fill_normal_chunked(seed, &format!("matrix:{}", m.name), &mut data, r, sd);
            DMatrix::from_vec(r, c, data)
        })
        .collect();
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(p.vectors().len());
    vectors.extend(sample_initial(p, dims, seed));
    let mut scalars = vec![0.0; p.scalars().len()];
    for (i, s) in p.init_scalars().iter().enumerate() {
        scalars[i] = s.value_at(dims.base());
    }
    let mut r = Realization {
        program: p.clone(),
        seed,
        dims: dims.clone(),
        config,
        matrices,
        vectors,
        scalars,
    };
    for ins in p.instructions() {
        r.execute(ins);
    }
    Ok(r)
}

/// Initial vectors: `x = μ + L ξ` per coordinate with `LLᵀ = Σ_V` and one
/// independent standard normal vector `ξ_j` per initial vector.
fn sample_initial(p: &Program, dims: &DimAssignment, seed: u64) -> Vec<DVector<f64>> {
    let k = p.n_initial();
    if k == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(p.init_cov().clone());
    let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l);
    let noise: Vec<DVector<f64>> = (0..k)
        .map(|j| {
            let v = &p.vectors()[j];
            let n = dims.get(v.class);
            let mut data = vec![0.0; n];
            rng::fill_normal_chunked(seed, &format!("vector:{}", v.name), &mut data, 4096, 1.0);
            DVector::from_vec(data)
        })
        .collect();
    (0..k)
        .map(|i| {
            let vi = &p.vectors()[i];
            let n = dims.get(vi.class);
            let mut x = DVector::from_element(n, p.init_mean()[i]);
            for (j, xi) in noise.iter().enumerate() {
                // cross-class entries of Σ_V are zero by validation
                if p.vectors()[j].class == vi.class && l[(i, j)] != 0.0 {
                    x.axpy(l[(i, j)], xi, 1.0);
                }
            }
            x
        })
        .collect()
}

impl Realization {
    fn execute(&mut self, ins: &Instruction) {
        match ins {
            Instruction::MatMul {
                matrix,
                transposed,
                input,
                ..
            } => {
                let w = &self.matrices[matrix.0];
                let x = &self.vectors[input.0];
                let y = if *transposed { w.tr_mul(x) } else { w * x };
                self.vectors.push(y);
            }
            Instruction::Nonlin {
                expr,
                inputs,
                params,
                ..
            } => {
                let y = self.apply(expr, inputs, params);
                self.vectors.push(DVector::from_vec(y));
            }
            Instruction::Moment {
                expr,
                inputs,
                params,
                output,
            } => {
                let y = self.apply(expr, inputs, params);
                self.scalars[output.0] = pairwise_sum(&y) / y.len() as f64;
            }
        }
    }

    fn apply(
        &self,
        expr: &NonlinExpr,
        inputs: &[VecId],
        params: &[crate::ir::ScalarId],
    ) -> Vec<f64> {
        let cols: Vec<&[f64]> = inputs
            .iter()
            .map(|v| self.vectors[v.0].as_slice())
            .collect();
        let pv: Vec<f64> = params.iter().map(|s| self.scalars[s.0]).collect();
        eval_columns(expr, &cols, &pv, cols[0].len())
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> &DimAssignment {
        &self.dims
    }

    pub fn config(&self) -> ExecConfig {
        self.config
    }

    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>, FiniteError> {
        Ok(&self.matrices[self.program.matrix_id(name)?.0])
    }

    pub fn vector(&self, name: &str) -> Result<&DVector<f64>, FiniteError> {
        Ok(&self.vectors[self.program.vector_id(name)?.0])
    }

    pub fn scalar(&self, name: &str) -> Result<f64, FiniteError> {
        Ok(self.scalars[self.program.scalar_id(name)?.0])
    }

    pub fn vector_by_id(&self, id: VecId) -> &DVector<f64> {
        &self.vectors[id.0]
    }

    pub fn matrix_by_id(&self, id: crate::ir::MatId) -> &DMatrix<f64> {
        &self.matrices[id.0]
    }

    /// `(1/n) Σ_α ψ(h¹_α, …, h^k_α)`, exact at this width.
    pub fn empirical_average(
        &self,
        psi: &NonlinExpr,
        vectors: &[&str],
    ) -> Result<f64, FiniteError> {
        let ids = vectors
            .iter()
            .map(|v| self.program.vector_id(v))
            .collect::<Result<Vec<_>, _>>()?;
        self.empirical_average_ids(psi, &ids)
    }

    pub fn empirical_average_ids(
        &self,
        psi: &NonlinExpr,
        ids: &[VecId],
    ) -> Result<f64, FiniteError> {
        if psi.inputs() != ids.len() || psi.params() != 0 {
            return Err(IrError::ArityMismatch {
                what: "test function".into(),
                expected: psi.inputs(),
                got: ids.len(),
            }
            .into());
        }
        let class = self.program.shared_class(ids)?;
        let n = class.map_or(self.dims.base(), |c| self.dims.get(c));
        let cols: Vec<&[f64]> = ids.iter().map(|v| self.vectors[v.0].as_slice()).collect();
        let y = eval_columns(psi, &cols, &[], n);
        Ok(pairwise_sum(&y) / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{load_program, parse_expr};

    fn semicircle(t: usize) -> Program {
        let mut s = String::from("matrix W : n x n var 0.5\nvector z0 : n\n");
        for i in 1..=t {
            s += &format!(
                "x{i} = matmul W z{j}\ny{i} = matmul W^T z{j}\nz{i} = nonlin add(x{i}, y{i})\n",
                j = i - 1
            );
        }
        load_program(&s).unwrap()
    }

    #[test]
    fn semicircle_iterates_match_powers() {
        let p = semicircle(5);
        let r = instantiate(&p, &DimAssignment::from_ratios(&p, 4), 7).unwrap();
        let w = r.matrix("W").unwrap();
        let a = w + w.transpose();
        let mut v = r.vector("z0").unwrap().clone();
        for _ in 0..5 {
            v = &a * v;
        }
        let z = r.vector("z5").unwrap();
        assert!((z - &v).norm() <= 1e-12 * v.norm());
    }

    #[test]
    fn gia_input_is_ones() {
        let p = load_program(
            "matrix W1 : n x m var 1\nvector xi : m var 0\nh1 = matmul W1 xi\nx1 = nonlin [x0 + 1](h1)\n",
        )
        .unwrap();
        let r = instantiate(&p, &DimAssignment::from_ratios(&p, 16), 3).unwrap();
        assert!(r.vector("x1").unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn deterministic() {
        let p = semicircle(2);
        let d = DimAssignment::from_ratios(&p, 64);
        let a = instantiate(&p, &d, 11).unwrap();
        let b = instantiate(&p, &d, 11).unwrap();
        assert_eq!(a.matrices, b.matrices);
        assert_eq!(a.vectors, b.vectors);
        let c = instantiate(&p, &d, 12).unwrap();
        assert_ne!(a.matrices, c.matrices);
    }

    #[test]
    fn averages() {
        let p = load_program("vector v : n\nvector w : n\n").unwrap();
        let r = instantiate(&p, &DimAssignment::from_ratios(&p, 1_000_000), 1).unwrap();
        let sq = parse_expr("x0^2").unwrap();
        assert!((r.empirical_average(&sq, &["v"]).unwrap() - 1.0).abs() < 0.01);
        let three = crate::ir::NonlinExpr::new(crate::ir::Expr::Const(3.0), 1, 0).unwrap();
        assert_eq!(r.empirical_average(&three, &["w"]).unwrap(), 3.0);
        let xy = parse_expr("x0 * x1").unwrap();
        let d = r.empirical_average(&xy, &["v", "v"]).unwrap()
            - r.empirical_average(&xy, &["v", "w"]).unwrap();
        assert!((d - 1.0).abs() < 0.01);
    }

    #[test]
    fn class_conflict_in_average() {
        let p = load_program("vector v : n\nvector u : m\n").unwrap();
        let r = instantiate(&p, &DimAssignment::from_ratios(&p, 8), 1).unwrap();
        let xy = parse_expr("x0 * x1").unwrap();
        assert!(matches!(
            r.empirical_average(&xy, &["v", "u"]),
            Err(FiniteError::Ir(IrError::DimClassConflict(_)))
        ));
    }

    #[test]
    fn correlated_initial_vectors() {
        let p =
            load_program("vector a : n mean 1 var 2\nvector b : n var 1\ncov a b 0.5\n").unwrap();
        let r = instantiate(&p, &DimAssignment::from_ratios(&p, 400_000), 5).unwrap();
        let e = |s: &str, v: &[&str]| r.empirical_average(&parse_expr(s).unwrap(), v).unwrap();
        assert!((e("x0", &["a"]) - 1.0).abs() < 0.01);
        assert!((e("(x0 - 1)^2", &["a"]) - 2.0).abs() < 0.03);
        assert!((e("(x0 - 1) * x1", &["a", "b"]) - 0.5).abs() < 0.02);
    }

    #[test]
    fn cap_enforced() {
        let p = load_program("matrix W : n x n var 1\nvector v : n\n").unwrap();
        let cfg = ExecConfig {
            max_dim: 100,
            exact_cap: 10,
        };
        assert!(matches!(
            instantiate_with(&p, &DimAssignment::from_ratios(&p, 101), 0, cfg),
            Err(FiniteError::CapExceeded { .. })
        ));
    }
}
