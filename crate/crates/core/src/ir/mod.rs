//! Validated intermediate representation of tensor programs.

mod cdc;
mod expr;
mod program;

pub use cdc::{compute_cdc, Partition};
pub use expr::{eval_columns, eval_nonlin, Expr, Interval, NonlinExpr};
pub use program::{
    build_program, BuildError, ClassId, Decl, DimClass, InitScalar, Instruction, MatId, MatrixDecl,
    Origin, Program, ScalarId, ScalarInfo, ScalarRule, Symbol, VecId, VectorInfo,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrError {
    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("arity mismatch in {what}: expected {expected}, got {got}")]
    ArityMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("dimension class conflict: {0}")]
    DimClassConflict(String),
    #[error("invalid declaration: {0}")]
    InvalidDecl(String),
}
