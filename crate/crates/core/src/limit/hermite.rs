use crate::ir::{IrError, NonlinExpr};
use crate::numeric::GaussHermite;

/// Result of a truncated Hermite expansion; `tail = |a_K b_K|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitePair {
    pub value: f64,
    pub tail: f64,
    /// Set when the last retained term exceeds 1e-8.
    pub truncation_warning: bool,
}

/// Coefficients `a_k = E φ(ξ) h_k(ξ)`, `k = 0..=K`, for the orthonormal
/// Hermite basis `h_k = He_k / √k!`.
pub fn hermite_coeffs(phi: &NonlinExpr, k: usize, order: usize) -> Result<Vec<f64>, IrError> {
    if phi.inputs() != 1 || phi.params() != 0 {
        return Err(IrError::ArityMismatch {
            what: "Hermite expansion needs a one-input function".into(),
            expected: 1,
            got: phi.inputs(),
        });
    }
    let gh = GaussHermite::new(order.max(4 * k).max(8));
    let mut a = vec![0.0; k + 1];
    let mut h = vec![0.0; k + 1];
    for (&x, &w) in gh.nodes.iter().zip(&gh.weights) {
        if w == 0.0 {
            continue;
        }
        // carry √w inside the recurrence: √w |h_j| ≤ 1 keeps it finite
        let sw = w.sqrt();
        let f = sw * phi.eval(&[x], &[]);
        h[0] = sw;
        if k >= 1 {
            h[1] = sw * x;
        }
        for j in 1..k {
            h[j + 1] = (x * h[j] - (j as f64).sqrt() * h[j - 1]) / ((j + 1) as f64).sqrt();
        }
        for (aj, hj) in a.iter_mut().zip(&h) {
            *aj += f * hj;
        }
    }
    Ok(a)
}

/// `E φ(z₁)ψ(z₂)` for standard normals with correlation `rho`, as
/// `Σ_{k≤K} a_k b_k ρ^k`.
pub fn hermite_pair_expectation(
    phi: &NonlinExpr,
    psi: &NonlinExpr,
    rho: f64,
    k: usize,
) -> Result<HermitePair, IrError> {
    assert!(
        (-1.0..=1.0).contains(&rho),
        "correlation must lie in [-1, 1]"
    );
    let order = 4 * k + 8;
    let a = hermite_coeffs(phi, k, order)?;
    let b = hermite_coeffs(psi, k, order)?;
    let mut value = 0.0;
    let mut r = 1.0;
    for j in 0..=k {
        value += a[j] * b[j] * r;
        r *= rho;
    }
    let tail = (a[k] * b[k]).abs();
    Ok(HermitePair {
        value,
        tail,
        truncation_warning: tail > 1e-8,
    })
}
