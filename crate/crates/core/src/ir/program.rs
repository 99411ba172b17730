use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use super::cdc::{compute_cdc, Partition};
use super::{IrError, NonlinExpr};

macro_rules! id_type {
    ($($name:ident),*) => {$(
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub usize);
    )*};
}

id_type!(VecId, MatId, ScalarId, ClassId);

/// A named dimension label with its limiting size relative to the base width.
#[derive(Debug, Clone, PartialEq)]
pub struct DimClass {
    pub name: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDecl {
    pub name: String,
    pub rows: ClassId,
    pub cols: ClassId,
    /// Entries are drawn from `N(0, sigma2 / cols)`.
    pub sigma2: f64,
}

/// Where a vector or scalar comes from: the k-th initial declaration
/// or the instruction at a program position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Initial(usize),
    Instruction(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorInfo {
    pub name: String,
    pub class: ClassId,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarInfo {
    pub name: String,
    pub origin: Origin,
}

/// Finite-width value of an initial scalar. `Rational` holds polynomial
/// coefficients in `t = 1/n`, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarRule {
    Constant,
    Rational { num: Vec<f64>, den: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitScalar {
    pub limit: f64,
    pub rule: ScalarRule,
}

impl InitScalar {
    pub fn value_at(&self, n: usize) -> f64 {
        match &self.rule {
            ScalarRule::Constant => self.limit,
            ScalarRule::Rational { num, den } => {
                let t = 1.0 / n as f64;
                horner(num, t) / horner(den, t)
            }
        }
    }
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    MatMul {
        matrix: MatId,
        transposed: bool,
        input: VecId,
        output: VecId,
    },
    Nonlin {
        expr: NonlinExpr,
        inputs: Vec<VecId>,
        params: Vec<ScalarId>,
        output: VecId,
    },
    Moment {
        expr: NonlinExpr,
        inputs: Vec<VecId>,
        params: Vec<ScalarId>,
        output: ScalarId,
    },
}

/// Surface-level declaration referring to symbols by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    Class {
        name: String,
        ratio: f64,
    },
    Matrix {
        name: String,
        rows: String,
        cols: String,
        sigma2: f64,
    },
    Vector {
        name: String,
        class: String,
        mean: f64,
        var: f64,
    },
    Cov {
        a: String,
        b: String,
        value: f64,
    },
    Scalar {
        name: String,
        limit: f64,
        rule: ScalarRule,
    },
    MatMul {
        output: String,
        matrix: String,
        transposed: bool,
        input: String,
    },
    Nonlin {
        output: String,
        expr: NonlinExpr,
        inputs: Vec<String>,
        params: Vec<String>,
    },
    Moment {
        output: String,
        expr: NonlinExpr,
        inputs: Vec<String>,
        params: Vec<String>,
    },
}

impl Decl {
    pub fn is_instruction(&self) -> bool {
        matches!(
            self,
            Decl::MatMul { .. } | Decl::Nonlin { .. } | Decl::Moment { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Matrix(MatId),
    Vector(VecId),
    Scalar(ScalarId),
}

/// A build failure tagged with the index of the offending declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildError {
    pub index: usize,
    pub error: IrError,
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "declaration {}: {}", self.index + 1, self.error)
    }
}

impl std::error::Error for BuildError {}

/// A validated program. Immutable once built.
///
/// Vector ids put initial vectors first (declaration order) and computed
/// vectors after them (instruction order); scalars likewise. The layout is
/// therefore independent of how declarations interleave with instructions.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    classes: Vec<DimClass>,
    matrices: Vec<MatrixDecl>,
    vectors: Vec<VectorInfo>,
    scalars: Vec<ScalarInfo>,
    init_mean: Vec<f64>,
    init_cov: DMatrix<f64>,
    init_scalars: Vec<InitScalar>,
    instructions: Vec<Instruction>,
    symbols: HashMap<String, Symbol>,
    cdc: Partition,
}

pub fn build_program(decls: &[Decl]) -> Result<Program, BuildError> {
    Program::build(decls)
}

struct Builder {
    classes: Vec<DimClass>,
    class_ids: HashMap<String, ClassId>,
    explicit_classes: Vec<bool>,
    matrices: Vec<MatrixDecl>,
    vectors: Vec<Option<VectorInfo>>,
    scalars: Vec<Option<ScalarInfo>>,
    n_init_vec: usize,
    n_init_scalar: usize,
    next_init_vec: usize,
    next_comp_vec: usize,
    next_init_scalar: usize,
    next_comp_scalar: usize,
    init_mean: Vec<f64>,
    init_var: Vec<f64>,
    covs: HashMap<(usize, usize), f64>,
    init_scalars: Vec<InitScalar>,
    instructions: Vec<Instruction>,
    symbols: HashMap<String, Symbol>,
}

impl Builder {
    fn class(&mut self, name: &str) -> ClassId {
        if let Some(&id) = self.class_ids.get(name) {
            return id;
        }
        let id = ClassId(self.classes.len());
        self.classes.push(DimClass {
            name: name.to_string(),
            ratio: 1.0,
        });
        self.explicit_classes.push(false);
        self.class_ids.insert(name.to_string(), id);
        id
    }

    fn fresh(&self, name: &str) -> Result<(), IrError> {
        if self.symbols.contains_key(name) {
            return Err(IrError::DuplicateSymbol(name.to_string()));
        }
        check_name(name)
    }

    fn vector(&self, name: &str) -> Result<VecId, IrError> {
        match self.symbols.get(name) {
            Some(Symbol::Vector(id)) => Ok(*id),
            Some(_) => Err(IrError::InvalidDecl(format!("`{name}` is not a vector"))),
            None => Err(IrError::UndeclaredSymbol(name.to_string())),
        }
    }

    fn scalar(&self, name: &str) -> Result<ScalarId, IrError> {
        match self.symbols.get(name) {
            Some(Symbol::Scalar(id)) => Ok(*id),
            Some(_) => Err(IrError::InvalidDecl(format!("`{name}` is not a scalar"))),
            None => Err(IrError::UndeclaredSymbol(name.to_string())),
        }
    }

    fn matrix(&self, name: &str) -> Result<MatId, IrError> {
        match self.symbols.get(name) {
            Some(Symbol::Matrix(id)) => Ok(*id),
            Some(_) => Err(IrError::InvalidDecl(format!("`{name}` is not a matrix"))),
            None => Err(IrError::UndeclaredSymbol(name.to_string())),
        }
    }

    fn class_of(&self, v: VecId) -> ClassId {
        self.vectors[v.0].as_ref().unwrap().class
    }

    fn class_name(&self, c: ClassId) -> &str {
        &self.classes[c.0].name
    }

    /// Shared class of a coordinatewise instruction's inputs.
    fn common_class(&self, inputs: &[VecId]) -> Result<ClassId, IrError> {
        let Some(&first) = inputs.first() else {
            return Err(IrError::InvalidDecl(
                "coordinatewise instruction needs at least one vector input".into(),
            ));
        };
        let c = self.class_of(first);
        for &v in &inputs[1..] {
            let cv = self.class_of(v);
            if cv != c {
                return Err(IrError::DimClassConflict(format!(
                    "inputs `{}` in `{}` and `{}` in `{}`",
                    self.vectors[first.0].as_ref().unwrap().name,
                    self.class_name(c),
                    self.vectors[v.0].as_ref().unwrap().name,
                    self.class_name(cv)
                )));
            }
        }
        Ok(c)
    }

    fn push_vector(&mut self, name: &str, class: ClassId, origin: Origin) -> VecId {
        let id = match origin {
            Origin::Initial(_) => {
                self.next_init_vec += 1;
                VecId(self.next_init_vec - 1)
            }
            Origin::Instruction(_) => {
                self.next_comp_vec += 1;
                VecId(self.n_init_vec + self.next_comp_vec - 1)
            }
        };
        self.vectors[id.0] = Some(VectorInfo {
            name: name.to_string(),
            class,
            origin,
        });
        self.symbols.insert(name.to_string(), Symbol::Vector(id));
        id
    }

    fn push_scalar(&mut self, name: &str, origin: Origin) -> ScalarId {
        let id = match origin {
            Origin::Initial(_) => {
                self.next_init_scalar += 1;
                ScalarId(self.next_init_scalar - 1)
            }
            Origin::Instruction(_) => {
                self.next_comp_scalar += 1;
                ScalarId(self.n_init_scalar + self.next_comp_scalar - 1)
            }
        };
        self.scalars[id.0] = Some(ScalarInfo {
            name: name.to_string(),
            origin,
        });
        self.symbols.insert(name.to_string(), Symbol::Scalar(id));
        id
    }

    fn coordinatewise(
        &self,
        expr: &NonlinExpr,
        inputs: &[String],
        params: &[String],
    ) -> Result<(Vec<VecId>, Vec<ScalarId>, ClassId), IrError> {
        let inputs = inputs
            .iter()
            .map(|n| self.vector(n))
            .collect::<Result<Vec<_>, _>>()?;
        let params = params
            .iter()
            .map(|n| self.scalar(n))
            .collect::<Result<Vec<_>, _>>()?;
        if expr.inputs() != inputs.len() {
            return Err(IrError::ArityMismatch {
                what: "nonlinearity inputs".into(),
                expected: expr.inputs(),
                got: inputs.len(),
            });
        }
        if expr.params() != params.len() {
            return Err(IrError::ArityMismatch {
                what: "nonlinearity parameters".into(),
                expected: expr.params(),
                got: params.len(),
            });
        }
        let class = self.common_class(&inputs)?;
        Ok((inputs, params, class))
    }

    fn apply(&mut self, decl: &Decl) -> Result<(), IrError> {
        match decl {
            Decl::Class { name, ratio } => {
                check_name(name)?;
                if !(ratio.is_finite() && *ratio > 0.0) {
                    return Err(IrError::InvalidDecl(format!(
                        "class `{name}` ratio must be positive, got {ratio}"
                    )));
                }
                if self.class_ids.contains_key(name.as_str()) {
                    return Err(IrError::DuplicateSymbol(name.clone()));
                }
                let id = self.class(name);
                self.classes[id.0].ratio = *ratio;
                self.explicit_classes[id.0] = true;
            }
            Decl::Matrix {
                name,
                rows,
                cols,
                sigma2,
            } => {
                self.fresh(name)?;
                if !(sigma2.is_finite() && *sigma2 > 0.0) {
                    return Err(IrError::InvalidDecl(format!(
                        "matrix `{name}` variance must be positive, got {sigma2}"
                    )));
                }
                check_name(rows)?;
                check_name(cols)?;
                let rows = self.class(rows);
                let cols = self.class(cols);
                let id = MatId(self.matrices.len());
                self.matrices.push(MatrixDecl {
                    name: name.clone(),
                    rows,
                    cols,
                    sigma2: *sigma2,
                });
                self.symbols.insert(name.clone(), Symbol::Matrix(id));
            }
            Decl::Vector {
                name,
                class,
                mean,
                var,
            } => {
                self.fresh(name)?;
                if !mean.is_finite() || !(var.is_finite() && *var >= 0.0) {
                    return Err(IrError::InvalidDecl(format!(
                        "vector `{name}` needs finite mean and nonnegative variance"
                    )));
                }
                check_name(class)?;
                let class = self.class(class);
                let k = self.next_init_vec;
                self.push_vector(name, class, Origin::Initial(k));
                self.init_mean.push(*mean);
                self.init_var.push(*var);
            }
            Decl::Cov { a, b, value } => {
                let (ia, ib) = (self.vector(a)?, self.vector(b)?);
                for (n, v) in [(a, ia), (b, ib)] {
                    if v.0 >= self.n_init_vec {
                        return Err(IrError::InvalidDecl(format!(
                            "cov needs initial vectors, `{n}` is computed"
                        )));
                    }
                }
                if ia == ib {
                    return Err(IrError::InvalidDecl(format!(
                        "cov of `{a}` with itself; use its variance"
                    )));
                }
                if !value.is_finite() {
                    return Err(IrError::InvalidDecl(format!("non-finite cov {value}")));
                }
                if *value != 0.0 && self.class_of(ia) != self.class_of(ib) {
                    return Err(IrError::DimClassConflict(format!(
                        "nonzero cov between `{a}` and `{b}` in different classes"
                    )));
                }
                let key = (ia.0.min(ib.0), ia.0.max(ib.0));
                if self.covs.insert(key, *value).is_some() {
                    return Err(IrError::InvalidDecl(format!("duplicate cov `{a}` `{b}`")));
                }
            }
            Decl::Scalar { name, limit, rule } => {
                self.fresh(name)?;
                check_scalar_rule(name, *limit, rule)?;
                let k = self.next_init_scalar;
                self.push_scalar(name, Origin::Initial(k));
                self.init_scalars.push(InitScalar {
                    limit: *limit,
                    rule: rule.clone(),
                });
            }
            Decl::MatMul {
                output,
                matrix,
                transposed,
                input,
            } => {
                let m = self.matrix(matrix)?;
                let x = self.vector(input)?;
                self.fresh(output)?;
                let decl = &self.matrices[m.0];
                let (need, out) = if *transposed {
                    (decl.rows, decl.cols)
                } else {
                    (decl.cols, decl.rows)
                };
                let have = self.class_of(x);
                if have != need {
                    return Err(IrError::DimClassConflict(format!(
                        "`{}{}` needs an input in `{}`, `{input}` is in `{}`",
                        matrix,
                        if *transposed { "^T" } else { "" },
                        self.class_name(need),
                        self.class_name(have)
                    )));
                }
                let pos = self.instructions.len();
                let y = self.push_vector(output, out, Origin::Instruction(pos));
                self.instructions.push(Instruction::MatMul {
                    matrix: m,
                    transposed: *transposed,
                    input: x,
                    output: y,
                });
            }
            Decl::Nonlin {
                output,
                expr,
                inputs,
                params,
            } => {
                let (inputs, params, class) = self.coordinatewise(expr, inputs, params)?;
                self.fresh(output)?;
                let pos = self.instructions.len();
                let y = self.push_vector(output, class, Origin::Instruction(pos));
                self.instructions.push(Instruction::Nonlin {
                    expr: expr.clone(),
                    inputs,
                    params,
                    output: y,
                });
            }
            Decl::Moment {
                output,
                expr,
                inputs,
                params,
            } => {
                let (inputs, params, _) = self.coordinatewise(expr, inputs, params)?;
                self.fresh(output)?;
                let pos = self.instructions.len();
                let s = self.push_scalar(output, Origin::Instruction(pos));
                self.instructions.push(Instruction::Moment {
                    expr: expr.clone(),
                    inputs,
                    params,
                    output: s,
                });
            }
        }
        Ok(())
    }
}

fn check_name(name: &str) -> Result<(), IrError> {
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(IrError::InvalidDecl(format!("bad identifier `{name}`")))
    }
}

fn check_scalar_rule(name: &str, limit: f64, rule: &ScalarRule) -> Result<(), IrError> {
    if !limit.is_finite() {
        return Err(IrError::InvalidDecl(format!(
            "scalar `{name}` limit must be finite"
        )));
    }
    if let ScalarRule::Rational { num, den } = rule {
        let finite = num.iter().chain(den).all(|c| c.is_finite());
        let (n0, d0) = (
            num.first().copied().unwrap_or(0.0),
            den.first().copied().unwrap_or(0.0),
        );
        if !finite || d0 == 0.0 {
            return Err(IrError::InvalidDecl(format!(
                "scalar `{name}` rule needs finite coefficients and a nonzero constant denominator"
            )));
        }
        let lim = n0 / d0;
        if (lim - limit).abs() > 1e-12 * limit.abs().max(1.0) {
            return Err(IrError::InvalidDecl(format!(
                "scalar `{name}` rule tends to {lim}, declared limit is {limit}"
            )));
        }
    }
    Ok(())
}

/// Symmetrizes and clips slightly negative eigenvalues; rejects a clear
/// indefinite matrix.
fn repair_psd(mut cov: DMatrix<f64>) -> Result<DMatrix<f64>, IrError> {
    let k = cov.nrows();
    if k == 0 {
        return Ok(cov);
    }
    cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov.clone());
    let norm = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(cov);
    }
    if min < -1e-10 * norm {
        return Err(IrError::InvalidDecl(format!(
            "initial covariance is not PSD (eigenvalue {min:e})"
        )));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose())
}

impl Program {
    pub fn build(decls: &[Decl]) -> Result<Program, BuildError> {
        let count = |f: fn(&Decl) -> bool| decls.iter().filter(|d| f(d)).count();
        let n_init_vec = count(|d| matches!(d, Decl::Vector { .. }));
        let n_comp_vec = count(|d| matches!(d, Decl::MatMul { .. } | Decl::Nonlin { .. }));
        let n_init_scalar = count(|d| matches!(d, Decl::Scalar { .. }));
        let n_comp_scalar = count(|d| matches!(d, Decl::Moment { .. }));
        let mut b = Builder {
            classes: Vec::new(),
            class_ids: HashMap::new(),
            explicit_classes: Vec::new(),
            matrices: Vec::new(),
            vectors: vec![None; n_init_vec + n_comp_vec],
            scalars: vec![None; n_init_scalar + n_comp_scalar],
            n_init_vec,
            n_init_scalar,
            next_init_vec: 0,
            next_comp_vec: 0,
            next_init_scalar: 0,
            next_comp_scalar: 0,
            init_mean: Vec::new(),
            init_var: Vec::new(),
            covs: HashMap::new(),
            init_scalars: Vec::new(),
            instructions: Vec::new(),
            symbols: HashMap::new(),
        };
        for (index, d) in decls.iter().enumerate() {
            b.apply(d).map_err(|error| BuildError { index, error })?;
        }
        let k = n_init_vec;
        let mut cov = DMatrix::zeros(k, k);
        for (i, v) in b.init_var.iter().enumerate() {
            cov[(i, i)] = *v;
        }
        for (&(i, j), &v) in &b.covs {
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        let init_cov = repair_psd(cov).map_err(|error| BuildError {
            index: decls.len().saturating_sub(1),
            error,
        })?;
        let mut p = Program {
            classes: b.classes,
            matrices: b.matrices,
            vectors: b.vectors.into_iter().map(Option::unwrap).collect(),
            scalars: b.scalars.into_iter().map(Option::unwrap).collect(),
            init_mean: b.init_mean,
            init_cov,
            init_scalars: b.init_scalars,
            instructions: b.instructions,
            symbols: b.symbols,
            cdc: Partition::default(),
        };
        p.cdc = compute_cdc(&p);
        Ok(p)
    }

    pub fn empty() -> Program {
        Program::build(&[]).unwrap()
    }

    pub fn classes(&self) -> &[DimClass] {
        &self.classes
    }

    pub fn matrices(&self) -> &[MatrixDecl] {
        &self.matrices
    }

    pub fn vectors(&self) -> &[VectorInfo] {
        &self.vectors
    }

    pub fn scalars(&self) -> &[ScalarInfo] {
        &self.scalars
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn init_scalars(&self) -> &[InitScalar] {
        &self.init_scalars
    }

    /// Number of initial vectors; they occupy ids `0..n`.
    pub fn n_initial(&self) -> usize {
        self.init_mean.len()
    }

    pub fn init_mean(&self) -> &[f64] {
        &self.init_mean
    }

    /// Joint covariance of the initial vectors, PSD after repair.
    pub fn init_cov(&self) -> &DMatrix<f64> {
        &self.init_cov
    }

    pub fn cdc(&self) -> &Partition {
        &self.cdc
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.symbols.get(name).copied()
    }

    pub fn vector_id(&self, name: &str) -> Result<VecId, IrError> {
        match self.symbol(name) {
            Some(Symbol::Vector(id)) => Ok(id),
            _ => Err(IrError::UndeclaredSymbol(name.to_string())),
        }
    }

    pub fn scalar_id(&self, name: &str) -> Result<ScalarId, IrError> {
        match self.symbol(name) {
            Some(Symbol::Scalar(id)) => Ok(id),
            _ => Err(IrError::UndeclaredSymbol(name.to_string())),
        }
    }

    pub fn matrix_id(&self, name: &str) -> Result<MatId, IrError> {
        match self.symbol(name) {
            Some(Symbol::Matrix(id)) => Ok(id),
            _ => Err(IrError::UndeclaredSymbol(name.to_string())),
        }
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.classes
            .iter()
            .position(|c| c.name == name)
            .map(ClassId)
    }

    pub fn vector(&self, id: VecId) -> &VectorInfo {
        &self.vectors[id.0]
    }

    pub fn matrix(&self, id: MatId) -> &MatrixDecl {
        &self.matrices[id.0]
    }

    pub fn class(&self, id: ClassId) -> &DimClass {
        &self.classes[id.0]
    }

    /// A vector is a G-var iff it is initial or produced by a MatMul.
    pub fn is_gvar(&self, id: VecId) -> bool {
        match self.vectors[id.0].origin {
            Origin::Initial(_) => true,
            Origin::Instruction(i) => matches!(self.instructions[i], Instruction::MatMul { .. }),
        }
    }

    pub fn gvars(&self) -> Vec<VecId> {
        (0..self.vectors.len())
            .map(VecId)
            .filter(|&v| self.is_gvar(v))
            .collect()
    }

    /// Checks that all listed vectors share one class and returns it.
    pub fn shared_class(&self, vectors: &[VecId]) -> Result<Option<ClassId>, IrError> {
        let mut class = None;
        for &v in vectors {
            let c = self.vectors[v.0].class;
            match class {
                None => class = Some(c),
                Some(k) if k != c => {
                    return Err(IrError::DimClassConflict(format!(
                        "`{}` is in `{}`, expected `{}`",
                        self.vectors[v.0].name, self.classes[c.0].name, self.classes[k.0].name
                    )))
                }
                _ => {}
            }
        }
        Ok(class)
    }

    fn names(&self, ids: &[VecId]) -> Vec<String> {
        ids.iter().map(|v| self.vectors[v.0].name.clone()).collect()
    }

    fn scalar_names(&self, ids: &[ScalarId]) -> Vec<String> {
        ids.iter().map(|s| self.scalars[s.0].name.clone()).collect()
    }

    /// Canonical declaration list; `Program::build(&p.to_decls()) == p`.
    pub fn to_decls(&self) -> Vec<Decl> {
        let mut out = Vec::new();
        for c in &self.classes {
            out.push(Decl::Class {
                name: c.name.clone(),
                ratio: c.ratio,
            });
        }
        for m in &self.matrices {
            out.push(Decl::Matrix {
                name: m.name.clone(),
                rows: self.classes[m.rows.0].name.clone(),
                cols: self.classes[m.cols.0].name.clone(),
                sigma2: m.sigma2,
            });
        }
        let k = self.n_initial();
        for i in 0..k {
            let v = &self.vectors[i];
            out.push(Decl::Vector {
                name: v.name.clone(),
                class: self.classes[v.class.0].name.clone(),
                mean: self.init_mean[i],
                var: self.init_cov[(i, i)],
            });
        }
        for i in 0..k {
            for j in i + 1..k {
                let c = self.init_cov[(i, j)];
                if c != 0.0 {
                    out.push(Decl::Cov {
                        a: self.vectors[i].name.clone(),
                        b: self.vectors[j].name.clone(),
                        value: c,
                    });
                }
            }
        }
        for (i, s) in self.init_scalars.iter().enumerate() {
            out.push(Decl::Scalar {
                name: self.scalars[i].name.clone(),
                limit: s.limit,
                rule: s.rule.clone(),
            });
        }
        for ins in &self.instructions {
            out.push(match ins {
                Instruction::MatMul {
                    matrix,
                    transposed,
                    input,
                    output,
                } => Decl::MatMul {
                    output: self.vectors[output.0].name.clone(),
                    matrix: self.matrices[matrix.0].name.clone(),
                    transposed: *transposed,
                    input: self.vectors[input.0].name.clone(),
                },
                Instruction::Nonlin {
                    expr,
                    inputs,
                    params,
                    output,
                } => Decl::Nonlin {
                    output: self.vectors[output.0].name.clone(),
                    expr: expr.clone(),
                    inputs: self.names(inputs),
                    params: self.scalar_names(params),
                },
                Instruction::Moment {
                    expr,
                    inputs,
                    params,
                    output,
                } => Decl::Moment {
                    output: self.scalars[output.0].name.clone(),
                    expr: expr.clone(),
                    inputs: self.names(inputs),
                    params: self.scalar_names(params),
                },
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(name: &str, r: &str, c: &str, s: f64) -> Decl {
        Decl::Matrix {
            name: name.into(),
            rows: r.into(),
            cols: c.into(),
            sigma2: s,
        }
    }

    fn vec_(name: &str, c: &str) -> Decl {
        Decl::Vector {
            name: name.into(),
            class: c.into(),
            mean: 0.0,
            var: 1.0,
        }
    }

    fn mm(out: &str, m: &str, t: bool, x: &str) -> Decl {
        Decl::MatMul {
            output: out.into(),
            matrix: m.into(),
            transposed: t,
            input: x.into(),
        }
    }

    #[test]
    fn semicircle_step_builds() {
        let p = build_program(&[
            mat("W", "n", "n", 0.5),
            vec_("v", "n"),
            mm("x", "W", false, "v"),
            mm("y", "W", true, "v"),
            Decl::Nonlin {
                output: "z".into(),
                expr: NonlinExpr::add(),
                inputs: vec!["x".into(), "y".into()],
                params: vec![],
            },
        ])
        .unwrap();
        assert_eq!(p.cdc().len(), 1);
        assert_eq!(p.instructions().len(), 3);
        let g: Vec<_> = p
            .gvars()
            .iter()
            .map(|v| p.vector(*v).name.clone())
            .collect();
        assert_eq!(g, ["v", "x", "y"]);
    }

    #[test]
    fn empty_program() {
        let p = build_program(&[]).unwrap();
        assert!(p.vectors().is_empty());
        assert_eq!(p.cdc().len(), 0);
    }

    #[test]
    fn wrong_input_class() {
        let e = build_program(&[
            mat("W", "a", "b", 1.0),
            vec_("v", "a"),
            mm("x", "W", false, "v"),
        ])
        .unwrap_err();
        assert_eq!(e.index, 2);
        assert!(matches!(e.error, IrError::DimClassConflict(_)));
    }

    #[test]
    fn undeclared_and_duplicate() {
        let e = build_program(&[mm("x", "W", false, "v")]).unwrap_err();
        assert!(matches!(e.error, IrError::UndeclaredSymbol(_)));
        let e = build_program(&[vec_("v", "n"), vec_("v", "n")]).unwrap_err();
        assert!(matches!(e.error, IrError::DuplicateSymbol(_)));
    }

    #[test]
    fn arity_checked_at_build() {
        let e = build_program(&[
            vec_("v", "n"),
            Decl::Nonlin {
                output: "z".into(),
                expr: NonlinExpr::add(),
                inputs: vec!["v".into()],
                params: vec![],
            },
        ])
        .unwrap_err();
        assert!(matches!(e.error, IrError::ArityMismatch { .. }));
    }

    #[test]
    fn psd_repair_and_rejection() {
        let base = |c: f64| {
            vec![
                vec_("a", "n"),
                vec_("b", "n"),
                Decl::Cov {
                    a: "a".into(),
                    b: "b".into(),
                    value: c,
                },
            ]
        };
        let p = build_program(&base(1.0 + 1e-12)).unwrap();
        let eig = SymmetricEigen::new(p.init_cov().clone());
        assert!(eig.eigenvalues.min() >= -1e-15);
        assert!(build_program(&base(1.5)).is_err());
    }

    #[test]
    fn cross_class_cov_rejected() {
        let e = build_program(&[
            vec_("a", "n"),
            vec_("b", "m"),
            Decl::Cov {
                a: "a".into(),
                b: "b".into(),
                value: 0.3,
            },
        ])
        .unwrap_err();
        assert!(matches!(e.error, IrError::DimClassConflict(_)));
    }

    #[test]
    fn rational_scalar_rule() {
        let s = InitScalar {
            limit: 0.0,
            rule: ScalarRule::Rational {
                num: vec![0.0, 1.0],
                den: vec![1.0],
            },
        };
        assert_eq!(s.value_at(4), 0.25);
        let bad = build_program(&[Decl::Scalar {
            name: "c".into(),
            limit: 1.0,
            rule: ScalarRule::Rational {
                num: vec![0.0, 1.0],
                den: vec![1.0],
            },
        }]);
        assert!(bad.is_err());
    }

    #[test]
    fn ids_independent_of_interleaving() {
        let a = build_program(&[
            mat("W", "n", "n", 1.0),
            vec_("v", "n"),
            mm("x", "W", false, "v"),
            vec_("u", "n"),
        ])
        .unwrap();
        let b = build_program(&a.to_decls()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vector_id("u").unwrap(), VecId(1));
        assert_eq!(a.vector_id("x").unwrap(), VecId(2));
    }
}
