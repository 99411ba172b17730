//! Coordinatewise nonlinearities as closed expression trees.
//!
//! An [`Expr`] is built from constants, input slots `x0, x1, ...`,
//! parameter slots `p0, p1, ...` and a small fixed set of operators.
//! There is no division and no exponential, so every expression is
//! polynomially bounded by construction. A [`NonlinExpr`] pins the arity
//! and carries a static range bound computed by interval arithmetic.

use std::fmt;
use std::ops;

use rayon::prelude::*;

use super::IrError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Input(usize),
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Abs(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Clamp(Box<Expr>, f64, f64),
    Relu(Box<Expr>),
    /// Heaviside step, `1` for strictly positive arguments and `0` otherwise.
    Step(Box<Expr>),
    Tanh(Box<Expr>),
}

impl Expr {
    pub fn input(i: usize) -> Self {
        Expr::Input(i)
    }

    pub fn param(i: usize) -> Self {
        Expr::Param(i)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn pow(self, k: u32) -> Self {
        Expr::Pow(Box::new(self), k)
    }

    pub fn abs(self) -> Self {
        Expr::Abs(Box::new(self))
    }

    pub fn relu(self) -> Self {
        Expr::Relu(Box::new(self))
    }

    pub fn step(self) -> Self {
        Expr::Step(Box::new(self))
    }

    pub fn tanh(self) -> Self {
        Expr::Tanh(Box::new(self))
    }

    pub fn max(self, other: Expr) -> Self {
        Expr::Max(Box::new(self), Box::new(other))
    }

    pub fn min(self, other: Expr) -> Self {
        Expr::Min(Box::new(self), Box::new(other))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Self {
        Expr::Clamp(Box::new(self), lo, hi)
    }

    /// Evaluates without arity checks; out-of-range slots panic.
    pub fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Input(i) => x[*i],
            Expr::Param(i) => p[*i],
            Expr::Neg(a) => -a.eval(x, p),
            Expr::Add(a, b) => a.eval(x, p) + b.eval(x, p),
            Expr::Sub(a, b) => a.eval(x, p) - b.eval(x, p),
            Expr::Mul(a, b) => a.eval(x, p) * b.eval(x, p),
            Expr::Pow(a, k) => powi(a.eval(x, p), *k),
            Expr::Abs(a) => a.eval(x, p).abs(),
            Expr::Max(a, b) => a.eval(x, p).max(b.eval(x, p)),
            Expr::Min(a, b) => a.eval(x, p).min(b.eval(x, p)),
            Expr::Clamp(a, lo, hi) => a.eval(x, p).clamp(*lo, *hi),
            Expr::Relu(a) => a.eval(x, p).max(0.0),
            Expr::Step(a) => step(a.eval(x, p)),
            Expr::Tanh(a) => a.eval(x, p).tanh(),
        }
    }

    /// Replaces input slot `i` by `inputs[i]`; parameters are kept.
    pub fn substitute(&self, inputs: &[Expr]) -> Expr {
        let s = |e: &Expr| Box::new(e.substitute(inputs));
        match self {
            Expr::Input(i) => inputs[*i].clone(),
            Expr::Const(_) | Expr::Param(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(s(a)),
            Expr::Add(a, b) => Expr::Add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::Sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::Mul(s(a), s(b)),
            Expr::Pow(a, k) => Expr::Pow(s(a), *k),
            Expr::Abs(a) => Expr::Abs(s(a)),
            Expr::Max(a, b) => Expr::Max(s(a), s(b)),
            Expr::Min(a, b) => Expr::Min(s(a), s(b)),
            Expr::Clamp(a, lo, hi) => Expr::Clamp(s(a), *lo, *hi),
            Expr::Relu(a) => Expr::Relu(s(a)),
            Expr::Step(a) => Expr::Step(s(a)),
            Expr::Tanh(a) => Expr::Tanh(s(a)),
        }
    }

    /// Largest input slot index + 1 and largest parameter slot index + 1.
    fn slots(&self) -> (usize, usize) {
        let mut acc = (0, 0);
        self.visit(&mut |e| match e {
            Expr::Input(i) => acc.0 = acc.0.max(i + 1),
            Expr::Param(i) => acc.1 = acc.1.max(i + 1),
            _ => {}
        });
        acc
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Input(_) | Expr::Param(_) => {}
            Expr::Neg(a)
            | Expr::Pow(a, _)
            | Expr::Abs(a)
            | Expr::Clamp(a, _, _)
            | Expr::Relu(a)
            | Expr::Step(a)
            | Expr::Tanh(a) => a.visit(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Max(a, b)
            | Expr::Min(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    fn check_literals(&self) -> Result<(), IrError> {
        let mut err = None;
        self.visit(&mut |e| match e {
            Expr::Const(c) if !c.is_finite() => {
                err = Some(IrError::InvalidDecl(format!("non-finite constant {c}")))
            }
            Expr::Clamp(_, lo, hi) if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                err = Some(IrError::InvalidDecl(format!(
                    "bad clamp range [{lo}, {hi}]"
                )))
            }
            _ => {}
        });
        err.map_or(Ok(()), Err)
    }

    /// Static range of the expression when every slot ranges over all of ℝ.
    pub fn range(&self) -> Interval {
        match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Input(_) | Expr::Param(_) => Interval::REALS,
            Expr::Neg(a) => a.range().neg(),
            Expr::Add(a, b) => a.range().add(b.range()),
            Expr::Sub(a, b) => a.range().add(b.range().neg()),
            Expr::Mul(a, b) => a.range().mul(b.range()),
            Expr::Pow(a, k) => a.range().pow(*k),
            Expr::Abs(a) => a.range().abs(),
            Expr::Max(a, b) => {
                let (a, b) = (a.range(), b.range());
                Interval::new(a.lo.max(b.lo), a.hi.max(b.hi))
            }
            Expr::Min(a, b) => {
                let (a, b) = (a.range(), b.range());
                Interval::new(a.lo.min(b.lo), a.hi.min(b.hi))
            }
            Expr::Clamp(a, lo, hi) => a.range().monotone(|v| v.clamp(*lo, *hi)),
            Expr::Relu(a) => a.range().monotone(|v| v.max(0.0)),
            Expr::Step(a) => a.range().monotone(step),
            Expr::Tanh(a) => a.range().monotone(f64::tanh),
        }
    }
}

#[inline]
pub(crate) fn step(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn powi(v: f64, k: u32) -> f64 {
    match k {
        0 => 1.0,
        1 => v,
        2 => v * v,
        _ => v.powi(k as i32),
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// Closed real interval, endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REALS: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Largest absolute value in the interval.
    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn neg(self) -> Self {
        Interval::new(-self.hi, -self.lo)
    }

    fn add(self, o: Self) -> Self {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    fn mul(self, o: Self) -> Self {
        // 0 * inf is 0 here: a factor pinned at zero kills an unbounded one.
        let m = |a: f64, b: f64| if a == 0.0 || b == 0.0 { 0.0 } else { a * b };
        let c = [
            m(self.lo, o.lo),
            m(self.lo, o.hi),
            m(self.hi, o.lo),
            m(self.hi, o.hi),
        ];
        Interval::new(
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    fn pow(self, k: u32) -> Self {
        if k == 0 {
            return Interval::point(1.0);
        }
        if k % 2 == 1 || self.lo >= 0.0 {
            return self.monotone(|v| powi(v, k));
        }
        if self.hi <= 0.0 {
            return Interval::new(powi(self.hi, k), powi(self.lo, k));
        }
        Interval::new(0.0, powi(self.magnitude(), k))
    }

    fn abs(self) -> Self {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval::new(0.0, self.magnitude())
        }
    }

    fn monotone(self, f: impl Fn(f64) -> f64) -> Self {
        Interval::new(f(self.lo), f(self.hi))
    }
}

/// A validated nonlinearity `φ: ℝᵏ × ℝˡ → ℝ` with fixed arity.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinExpr {
    expr: Expr,
    inputs: usize,
    params: usize,
    range: Interval,
}

impl NonlinExpr {
    /// Validates slot references against the declared arity.
    pub fn new(expr: Expr, inputs: usize, params: usize) -> Result<Self, IrError> {
        expr.check_literals()?;
        let (used_in, used_par) = expr.slots();
        if used_in > inputs {
            return Err(IrError::ArityMismatch {
                what: "expression input slot".into(),
                expected: inputs,
                got: used_in,
            });
        }
        if used_par > params {
            return Err(IrError::ArityMismatch {
                what: "expression parameter slot".into(),
                expected: params,
                got: used_par,
            });
        }
        let range = expr.range();
        Ok(NonlinExpr {
            expr,
            inputs,
            params,
            range,
        })
    }

    /// Infers the arity from the highest slots used.
    pub fn infer(expr: Expr) -> Result<Self, IrError> {
        let (i, p) = expr.slots();
        Self::new(expr, i, p)
    }

    pub fn identity() -> Self {
        Self::new(Expr::input(0), 1, 0).unwrap()
    }

    pub fn add() -> Self {
        Self::new(Expr::input(0) + Expr::input(1), 2, 0).unwrap()
    }

    pub fn product() -> Self {
        Self::new(Expr::input(0) * Expr::input(1), 2, 0).unwrap()
    }

    pub fn square() -> Self {
        Self::new(Expr::input(0).pow(2), 1, 0).unwrap()
    }

    pub fn relu() -> Self {
        Self::new(Expr::input(0).relu(), 1, 0).unwrap()
    }

    pub fn step() -> Self {
        Self::new(Expr::input(0).step(), 1, 0).unwrap()
    }

    pub fn tanh() -> Self {
        Self::new(Expr::input(0).tanh(), 1, 0).unwrap()
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Expr::Const(c), 0, 0).unwrap()
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn params(&self) -> usize {
        self.params
    }

    /// True iff the static range bound is finite.
    pub fn bounded(&self) -> bool {
        self.range.is_bounded()
    }

    pub fn range(&self) -> Interval {
        self.range
    }

    /// Unchecked fast path used in hot loops.
    #[inline]
    pub fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        self.expr.eval(x, p)
    }

    /// Same expression with its input arity widened to `inputs`.
    pub fn widen(&self, inputs: usize) -> Self {
        let mut out = self.clone();
        out.inputs = out.inputs.max(inputs);
        out
    }
}

/// Coordinatewise evaluation over `n` rows of equal-length columns.
/// Each output depends only on its own row, so the result is independent
/// of how rows are split across threads.
pub fn eval_columns(expr: &NonlinExpr, cols: &[&[f64]], params: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map_init(
            || vec![0.0; cols.len()],
            |buf, a| {
                for (b, c) in buf.iter_mut().zip(cols) {
                    *b = c[a];
                }
                expr.eval(buf, params)
            },
        )
        .collect()
}

/// Arity-checked evaluation of a nonlinearity at one coordinate.
pub fn eval_nonlin(expr: &NonlinExpr, inputs: &[f64], params: &[f64]) -> Result<f64, IrError> {
    if inputs.len() != expr.inputs {
        return Err(IrError::ArityMismatch {
            what: "nonlinearity inputs".into(),
            expected: expr.inputs,
            got: inputs.len(),
        });
    }
    if params.len() != expr.params {
        return Err(IrError::ArityMismatch {
            what: "nonlinearity parameters".into(),
            expected: expr.params,
            got: params.len(),
        });
    }
    Ok(expr.eval(inputs, params))
}

impl fmt::Display for NonlinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::dsl::print_expr(&self.expr))
    }
}
