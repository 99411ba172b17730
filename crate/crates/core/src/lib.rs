//! Tensor programs with transposed matrix multiplication.
//!
//! A program is a sequence of Gaussian matrices, initial vectors and
//! scalars followed by `MatMul`, coordinatewise `Nonlin` and `Moment`
//! instructions. This crate can
//!
//! * validate programs and track common dimension classes ([`ir`]),
//! * read and print them in a small text format ([`dsl`]),
//! * sample and run them at finite width ([`finite`]),
//! * compute their infinite-width limits by Monte Carlo over the
//!   limiting Gaussian variables ([`limit`]),
//! * supply reference spectral laws and free multiplicative convolution
//!   ([`laws`]), and
//! * test asymptotic freeness and Jacobian spectra ([`freeness`]).

pub mod dsl;
pub mod finite;
pub mod freeness;
pub mod ir;
pub mod laws;
pub mod limit;
pub mod numeric;
