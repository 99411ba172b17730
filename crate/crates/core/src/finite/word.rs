use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{rng, FiniteError, Realization};
use crate::ir::{eval_columns, ClassId, IrError, MatId, NonlinExpr, Program, VecId};
use crate::numeric::{mean_stderr, pairwise_sum};

/// One factor of a matrix word.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Mat {
        matrix: MatId,
        transposed: bool,
    },
    /// `Diag(ψ(x¹, …, x^k))` with `ψ` bounded.
    Diag {
        vectors: Vec<VecId>,
        psi: NonlinExpr,
    },
    /// Linear combination of words of equal shape.
    Sum(Vec<(f64, MatrixWord)>),
}

/// Product of factors, leftmost first. The empty word is the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixWord {
    pub factors: Vec<Factor>,
}

type Shape = Option<(ClassId, ClassId)>;

fn compose(left: Shape, right: Shape, p: &Program) -> Result<Shape, FiniteError> {
    match (left, right) {
        (None, s) | (s, None) => Ok(s),
        (Some((r, c)), Some((r2, c2))) => {
            if c != r2 {
                return Err(FiniteError::ShapeMismatch(format!(
                    "factor with columns in `{}` meets factor with rows in `{}`",
                    p.class(c).name,
                    p.class(r2).name
                )));
            }
            Ok(Some((r, c2)))
        }
    }
}

impl MatrixWord {
    pub fn identity() -> Self {
        MatrixWord::default()
    }

    pub fn new(factors: Vec<Factor>) -> Self {
        MatrixWord { factors }
    }

    pub fn mat(p: &Program, name: &str, transposed: bool) -> Result<Self, FiniteError> {
        Ok(MatrixWord::new(vec![Factor::Mat {
            matrix: p.matrix_id(name)?,
            transposed,
        }]))
    }

    pub fn diag(p: &Program, vectors: &[&str], psi: NonlinExpr) -> Result<Self, FiniteError> {
        let ids = vectors
            .iter()
            .map(|v| p.vector_id(v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::diag_ids(p, ids, psi)
    }

    pub fn diag_ids(
        p: &Program,
        vectors: Vec<VecId>,
        psi: NonlinExpr,
    ) -> Result<Self, FiniteError> {
        if !psi.bounded() {
            return Err(FiniteError::UnboundedDiag);
        }
        if psi.inputs() != vectors.len() || psi.params() != 0 {
            return Err(IrError::ArityMismatch {
                what: "diagonal function".into(),
                expected: psi.inputs(),
                got: vectors.len(),
            }
            .into());
        }
        if vectors.is_empty() {
            return Err(FiniteError::ShapeMismatch(
                "diagonal factor needs a vector".into(),
            ));
        }
        p.shared_class(&vectors)?;
        Ok(MatrixWord::new(vec![Factor::Diag { vectors, psi }]))
    }

    pub fn sum(terms: Vec<(f64, MatrixWord)>) -> Self {
        MatrixWord::new(vec![Factor::Sum(terms)])
    }

    /// Concatenation: `self · other`.
    pub fn then(mut self, other: MatrixWord) -> Self {
        self.factors.extend(other.factors);
        self
    }

    pub fn power(&self, k: usize) -> Self {
        let mut out = MatrixWord::identity();
        for _ in 0..k {
            out = out.then(self.clone());
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let factors = self
            .factors
            .iter()
            .rev()
            .map(|f| match f {
                Factor::Mat { matrix, transposed } => Factor::Mat {
                    matrix: *matrix,
                    transposed: !transposed,
                },
                Factor::Diag { .. } => f.clone(),
                Factor::Sum(t) => Factor::Sum(t.iter().map(|(c, w)| (*c, w.transpose())).collect()),
            })
            .collect();
        MatrixWord { factors }
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    /// `(row class, column class)`, `None` for a shapeless identity.
    pub fn shape(&self, p: &Program) -> Result<Shape, FiniteError> {
        let mut acc: Shape = None;
        for f in &self.factors {
            let s = match f {
                Factor::Mat { matrix, transposed } => {
                    let m = p.matrix(*matrix);
                    Some(if *transposed {
                        (m.cols, m.rows)
                    } else {
                        (m.rows, m.cols)
                    })
                }
                Factor::Diag { vectors, .. } => {
                    let c = p.vector(vectors[0]).class;
                    Some((c, c))
                }
                Factor::Sum(terms) => {
                    let mut shape: Shape = None;
                    for (_, w) in terms {
                        match (shape, w.shape(p)?) {
                            (_, None) => {}
                            (None, s) => shape = s,
                            (Some(a), Some(b)) if a != b => {
                                return Err(FiniteError::ShapeMismatch(
                                    "summands of different shapes".into(),
                                ))
                            }
                            _ => {}
                        }
                    }
                    if terms.iter().any(|(_, w)| w.is_identity()) {
                        if let Some((r, c)) = shape {
                            if r != c {
                                return Err(FiniteError::ShapeMismatch(
                                    "identity added to a non-square word".into(),
                                ));
                            }
                        }
                    }
                    shape
                }
            };
            acc = compose(acc, s, p)?;
        }
        Ok(acc)
    }
}

impl Realization {
    fn diag_values(&self, vectors: &[VecId], psi: &NonlinExpr) -> Vec<f64> {
        let cols: Vec<&[f64]> = vectors
            .iter()
            .map(|v| self.vector_by_id(*v).as_slice())
            .collect();
        eval_columns(psi, &cols, &[], cols[0].len())
    }

    fn apply_unchecked(&self, word: &MatrixWord, mut x: DMatrix<f64>) -> DMatrix<f64> {
        for f in word.factors.iter().rev() {
            x = self.apply_factor(f, x);
        }
        x
    }

    fn apply_factor(&self, f: &Factor, mut x: DMatrix<f64>) -> DMatrix<f64> {
        match f {
            Factor::Mat { matrix, transposed } => {
                let w = self.matrix_by_id(*matrix);
                if *transposed {
                    w.tr_mul(&x)
                } else {
                    w * &x
                }
            }
            Factor::Diag { vectors, psi } => {
                let d = self.diag_values(vectors, psi);
                for mut col in x.column_iter_mut() {
                    for (v, s) in col.iter_mut().zip(&d) {
                        *v *= s;
                    }
                }
                x
            }
            Factor::Sum(terms) => {
                let mut acc: Option<DMatrix<f64>> = None;
                for (c, w) in terms {
                    let y = self.apply_unchecked(w, x.clone()) * *c;
                    acc = Some(match acc {
                        None => y,
                        Some(a) => a + y,
                    });
                }
                acc.unwrap_or_else(|| x * 0.0)
            }
        }
    }

    /// Dense matrix of a word acting on an `n`-dimensional space, without
    /// multiplying by an explicit identity.
    pub(crate) fn dense_unchecked(&self, word: &MatrixWord, n: usize) -> DMatrix<f64> {
        let mut acc: Option<DMatrix<f64>> = None;
        for f in word.factors.iter().rev() {
            acc = Some(match acc {
                Some(x) => self.apply_factor(f, x),
                None => match f {
                    Factor::Mat { matrix, transposed } => {
                        let w = self.matrix_by_id(*matrix);
                        if *transposed {
                            w.transpose()
                        } else {
                            w.clone()
                        }
                    }
                    Factor::Diag { vectors, psi } => {
                        DMatrix::from_diagonal(&DVector::from_vec(self.diag_values(vectors, psi)))
                    }
                    Factor::Sum(terms) => {
                        let mut out = DMatrix::zeros(0, 0);
                        for (c, w) in terms {
                            let y = self.dense_unchecked(w, n) * *c;
                            out = if out.is_empty() { y } else { out + y };
                        }
                        if out.is_empty() {
                            DMatrix::zeros(n, n)
                        } else {
                            out
                        }
                    }
                },
            });
        }
        acc.unwrap_or_else(|| DMatrix::identity(n, n))
    }

    /// Values of a diagonal factor.
    pub(crate) fn diag_of(&self, vectors: &[VecId], psi: &NonlinExpr) -> Vec<f64> {
        self.diag_values(vectors, psi)
    }

    fn check_input(&self, word: &MatrixWord, rows: usize) -> Result<Shape, FiniteError> {
        let shape = word.shape(self.program())?;
        if let Some((_, c)) = shape {
            let n = self.dims().get(c);
            if n != rows {
                return Err(FiniteError::ShapeMismatch(format!(
                    "probe has {rows} rows, word expects {n}"
                )));
            }
        }
        Ok(shape)
    }

    fn square_dim(&self, word: &MatrixWord) -> Result<Option<usize>, FiniteError> {
        match word.shape(self.program())? {
            None => Ok(None),
            Some((r, c)) if r == c => Ok(Some(self.dims().get(r))),
            Some(_) => Err(FiniteError::ShapeMismatch("word is not square".into())),
        }
    }

    fn probes(&self, n: usize, p: usize) -> DMatrix<f64> {
        let mut data = vec![0.0; n * p];
        rng::fill_normal_chunked(self.seed(), "probe", &mut data, n, 1.0);
        DMatrix::from_vec(n, p, data)
    }
}

/// `word · probe`, factor by factor from the right.
pub fn word_apply(
    r: &Realization,
    word: &MatrixWord,
    probe: &DVector<f64>,
) -> Result<DVector<f64>, FiniteError> {
    let y = word_apply_block(
        r,
        word,
        &DMatrix::from_column_slice(probe.len(), 1, probe.as_slice()),
    )?;
    Ok(y.column(0).into_owned())
}

/// `word · X` for a block of probes stored as columns.
pub fn word_apply_block(
    r: &Realization,
    word: &MatrixWord,
    block: &DMatrix<f64>,
) -> Result<DMatrix<f64>, FiniteError> {
    r.check_input(word, block.nrows())?;
    Ok(r.apply_unchecked(word, block.clone()))
}

/// Dense matrix of a word, limited to the exact cap.
pub fn materialize(r: &Realization, word: &MatrixWord) -> Result<DMatrix<f64>, FiniteError> {
    let Some((rows, cols)) = word.shape(r.program())? else {
        return Err(FiniteError::ShapeMismatch(
            "identity word has no size".into(),
        ));
    };
    let (nr, nc) = (r.dims().get(rows), r.dims().get(cols));
    let cap = r.config().exact_cap;
    if nr.max(nc) > cap {
        return Err(FiniteError::CapExceeded { n: nr.max(nc), cap });
    }
    Ok(r.dense_unchecked(word, nc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMethod {
    Exact,
    Hutchinson(usize),
}

impl TraceMethod {
    /// Exact at or below `cap`, otherwise `p` Gaussian probes.
    pub fn auto(n: usize, cap: usize, p: usize) -> Self {
        if n <= cap {
            TraceMethod::Exact
        } else {
            TraceMethod::Hutchinson(p)
        }
    }
}

fn per_probe_dots(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize) -> Vec<f64> {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| {
            let prod: Vec<f64> = x.iter().zip(y.iter()).map(|(u, v)| u * v).collect();
            pairwise_sum(&prod) / n as f64
        })
        .collect()
}

/// `(1/n) tr(word)` with its standard error (zero when exact).
pub fn trace_moment(
    r: &Realization,
    word: &MatrixWord,
    method: TraceMethod,
) -> Result<(f64, f64), FiniteError> {
    let Some(n) = r.square_dim(word)? else {
        return Ok((1.0, 0.0));
    };
    match method {
        TraceMethod::Exact => {
            let m = materialize(r, word)?;
            Ok((m.trace() / n as f64, 0.0))
        }
        TraceMethod::Hutchinson(p) => {
            let z = r.probes(n, p.max(1));
            let y = r.apply_unchecked(word, z.clone());
            Ok(mean_stderr(&per_probe_dots(&z, &y, n)))
        }
    }
}

/// `[(1/n) tr(word^r)]` for `r = 1..=k_max`. The word must be symmetric,
/// so `zᵀ M^r z = (M^a z)ᵀ(M^b z)` with `a + b = r` halves the work.
pub fn spectral_moments(
    r: &Realization,
    word: &MatrixWord,
    k_max: usize,
    method: TraceMethod,
) -> Result<Vec<(f64, f64)>, FiniteError> {
    let Some(n) = r.square_dim(word)? else {
        return Ok(vec![(1.0, 0.0); k_max]);
    };
    let half = k_max.div_ceil(2);
    match method {
        TraceMethod::Exact => {
            let m = materialize(r, word)?;
            let m = (&m + m.transpose()) * 0.5;
            let mut pw = vec![DMatrix::identity(n, n), m.clone()];
            for a in 2..=half {
                pw.push(&pw[a - 1] * &m);
            }
            Ok((1..=k_max)
                .map(|k| (pw[k / 2].dot(&pw[k - k / 2]) / n as f64, 0.0))
                .collect())
        }
        TraceMethod::Hutchinson(p) => {
            let mut ys = vec![r.probes(n, p.max(1))];
            for a in 1..=half {
                let next = r.apply_unchecked(word, ys[a - 1].clone());
                ys.push(next);
            }
            Ok((1..=k_max)
                .map(|k| mean_stderr(&per_probe_dots(&ys[k / 2], &ys[k - k / 2], n)))
                .collect())
        }
    }
}

/// Ascending spectrum of the (symmetrized) materialized word.
pub fn eig_spectrum(r: &Realization, word: &MatrixWord) -> Result<Vec<f64>, FiniteError> {
    let m = materialize(r, word)?;
    if m.nrows() != m.ncols() {
        return Err(FiniteError::ShapeMismatch("word is not square".into()));
    }
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{load_program, parse_expr};
    use crate::finite::{instantiate, instantiate_with, DimAssignment, ExecConfig};

    fn setup(n: usize) -> Realization {
        let p = load_program(
            "matrix W : n x n var 1\nmatrix Z : n x n var 1e-300\nvector v : n\nx = matmul W v\n",
        )
        .unwrap();
        instantiate(&p, &DimAssignment::from_ratios(&p, n), 3).unwrap()
    }

    #[test]
    fn first_column() {
        let r = setup(16);
        let w = MatrixWord::mat(r.program(), "W", false).unwrap();
        let mut e1 = DVector::zeros(16);
        e1[0] = 1.0;
        let y = word_apply(&r, &w, &e1).unwrap();
        assert_eq!(y, r.matrix("W").unwrap().column(0).into_owned());
    }

    #[test]
    fn associativity() {
        let r = setup(64);
        let p = r.program();
        let word = MatrixWord::mat(p, "W", true)
            .unwrap()
            .then(MatrixWord::mat(p, "W", false).unwrap());
        let v = r.vector("v").unwrap();
        let w = r.matrix("W").unwrap();
        let dense = w.transpose() * w * v;
        let y = word_apply(&r, &word, v).unwrap();
        assert!((y - &dense).norm() <= 1e-12 * dense.norm());
    }

    #[test]
    fn diag_masks() {
        let r = setup(32);
        let d = MatrixWord::diag(r.program(), &["x"], NonlinExpr::step()).unwrap();
        let v = r.vector("v").unwrap();
        let x = r.vector("x").unwrap();
        let y = word_apply(&r, &d, v).unwrap();
        for i in 0..32 {
            assert_eq!(y[i], if x[i] > 0.0 { v[i] } else { 0.0 });
        }
        assert!(matches!(
            MatrixWord::diag(r.program(), &["x"], NonlinExpr::relu()),
            Err(FiniteError::UnboundedDiag)
        ));
    }

    #[test]
    fn identity_trace() {
        let r = setup(8);
        assert_eq!(
            trace_moment(&r, &MatrixWord::identity(), TraceMethod::Exact).unwrap(),
            (1.0, 0.0)
        );
    }

    #[test]
    fn zero_and_identity_spectra() {
        let r = setup(8);
        let z = MatrixWord::mat(r.program(), "Z", false).unwrap();
        let zero = MatrixWord::sum(vec![(0.0, z)]);
        assert!(eig_spectrum(&r, &zero).unwrap().iter().all(|&x| x == 0.0));
        let d = MatrixWord::diag(r.program(), &["v"], parse_expr("1 + 0 * x0").unwrap()).unwrap();
        assert!(eig_spectrum(&r, &d)
            .unwrap()
            .iter()
            .all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn shape_errors() {
        let p = load_program("matrix A : m x n var 1\nvector v : n\n").unwrap();
        let r = instantiate(&p, &DimAssignment::explicit(vec![6, 4]).unwrap(), 1).unwrap();
        let a = MatrixWord::mat(&p, "A", false).unwrap();
        assert!(matches!(
            trace_moment(&r, &a, TraceMethod::Exact),
            Err(FiniteError::ShapeMismatch(_))
        ));
        assert!(a.clone().then(a.clone()).shape(&p).is_err());
        assert!(word_apply(&r, &a, &DVector::zeros(6)).is_err());
        let aat = a.clone().then(a.transpose());
        assert!(trace_moment(&r, &aat, TraceMethod::Exact).is_ok());
    }

    #[test]
    fn exact_cap() {
        let p = load_program("matrix W : n x n var 1\n").unwrap();
        let cfg = ExecConfig {
            max_dim: 1 << 14,
            exact_cap: 16,
        };
        let r = instantiate_with(&p, &DimAssignment::from_ratios(&p, 32), 1, cfg).unwrap();
        let w = MatrixWord::mat(&p, "W", false).unwrap();
        assert!(matches!(
            eig_spectrum(&r, &w),
            Err(FiniteError::CapExceeded { .. })
        ));
        assert!(trace_moment(&r, &w, TraceMethod::Hutchinson(4)).is_ok());
    }

    #[test]
    fn moments_exact_vs_spectrum() {
        let r = setup(96);
        let p = r.program();
        let a = MatrixWord::mat(p, "W", false).unwrap();
        let s = MatrixWord::sum(vec![(1.0, a.clone()), (1.0, a.transpose())]);
        let ev = eig_spectrum(&r, &s).unwrap();
        let m = spectral_moments(&r, &s, 5, TraceMethod::Exact).unwrap();
        for (k, (v, se)) in m.iter().enumerate() {
            let from_ev: f64 = ev.iter().map(|l| l.powi(k as i32 + 1)).sum::<f64>() / 96.0;
            assert_eq!(*se, 0.0);
            assert!((v - from_ev).abs() <= 1e-8 * from_ev.abs().max(1.0), "{k}");
        }
        let t = trace_moment(&r, &s.power(2), TraceMethod::Exact).unwrap().0;
        assert!((t - m[1].0).abs() < 1e-10 * t);
    }
}
