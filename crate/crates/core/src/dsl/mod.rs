//! Text format for programs (`.ntp`) and matrix words (`.word`).
//!
//! Programs are line oriented:
//!
//! ```text
//! class n ratio 1
//! matrix W : n x n var 0.5
//! vector z0 : n mean 0 var 1
//! cov a b 0.3
//! scalar c limit 0 rule [0, 1] / [1]     # c = 1/n at width n
//! x1 = matmul W z0
//! y1 = matmul W^T z0
//! z1 = nonlin add(x1, y1)
//! m = moment [x0 * x1](z0, z1)
//! ```
//!
//! A nonlinearity is a builtin (`id add sub mul square relu step tanh abs`)
//! or a bracketed expression over slots `x0..` and parameters `p0..`
//! (bound after `;` in the argument list). Classes are created on first
//! use with ratio 1 unless declared earlier.
//!
//! Word files list one factor per line, leftmost first:
//!
//! ```text
//! program fip_base.ntp
//! mat W W^T
//! diag h step
//! mat W + W^T
//! diag h, g [x0 * x1] as D2
//! ```

pub mod fuzz;
mod lexer;
mod parser;
mod printer;

pub use printer::{print_decls, print_expr, print_program};

use thiserror::Error;

use crate::ir::{Decl, IrError, NonlinExpr, Program};
use parser::Parser;

/// Collection label of a `diag` factor without an explicit `as` clause.
pub const DEFAULT_DIAG_LABEL: &str = "D";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("at {line}:{col}: {error}")]
    Build {
        line: usize,
        col: usize,
        error: IrError,
    },
}

impl DslError {
    pub fn kind(&self) -> &'static str {
        match self {
            DslError::Syntax { .. } => "SyntaxError",
            DslError::Build { error, .. } => match error {
                IrError::UndeclaredSymbol(_) => "UndeclaredSymbol",
                IrError::DuplicateSymbol(_) => "DuplicateSymbol",
                IrError::ArityMismatch { .. } => "ArityMismatch",
                IrError::DimClassConflict(_) => "DimClassConflict",
                IrError::InvalidDecl(_) => "InvalidDecl",
            },
        }
    }
}

/// Parsed program text: declarations with their starting positions.
#[derive(Debug, Clone, Default)]
pub struct Ast {
    pub decls: Vec<Decl>,
    pub positions: Vec<(usize, usize)>,
}

impl PartialEq for Ast {
    fn eq(&self, other: &Self) -> bool {
        self.decls == other.decls
    }
}

pub fn parse_program(src: &str) -> Result<Ast, DslError> {
    Parser::new(src)?.program()
}

/// Parses and validates, mapping build errors back to source positions.
pub fn load_program(src: &str) -> Result<Program, DslError> {
    let ast = parse_program(src)?;
    Program::build(&ast.decls).map_err(|e| {
        let (line, col) = ast.positions.get(e.index).copied().unwrap_or((1, 1));
        DslError::Build {
            line,
            col,
            error: e.error,
        }
    })
}

/// Parses a single function: a builtin name or `[expression]`.
pub fn parse_function(src: &str, inputs: usize, params: usize) -> Result<NonlinExpr, DslError> {
    let mut p = Parser::new(src)?;
    let e = p.function()?;
    NonlinExpr::new(e, inputs, params).map_err(|error| DslError::Build {
        line: 1,
        col: 1,
        error,
    })
}

/// Parses a bare expression such as `x0 * p0 + 1`, inferring its arity.
pub fn parse_expr(src: &str) -> Result<NonlinExpr, DslError> {
    let mut p = Parser::new(&format!("[{src}]"))?;
    let e = p.function()?;
    NonlinExpr::infer(e).map_err(|error| DslError::Build {
        line: 1,
        col: 1,
        error,
    })
}

/// One summand `coef · M₁ M₂ ⋯` of a `mat` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTerm {
    pub coef: f64,
    pub factors: Vec<(String, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WordFactor {
    Mat {
        terms: Vec<WordTerm>,
    },
    Diag {
        vectors: Vec<String>,
        expr: NonlinExpr,
        label: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordFile {
    /// Program path from a `program` line, relative to the word file.
    pub program: Option<String>,
    pub factors: Vec<WordFactor>,
}

pub fn parse_word(src: &str) -> Result<WordFile, DslError> {
    // `program` lines carry a raw path, so strip them before lexing.
    let mut program = None;
    let mut rest = String::with_capacity(src.len());
    for line in src.lines() {
        let t = line.trim_start();
        if let Some(path) = t.strip_prefix("program ") {
            program = Some(path.split('#').next().unwrap_or("").trim().to_string());
            rest.push('\n');
        } else {
            rest.push_str(line);
            rest.push('\n');
        }
    }
    let mut file = Parser::new(&rest)?.word()?;
    file.program = program;
    Ok(file)
}
