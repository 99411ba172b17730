//! Reference spectral laws and free multiplicative convolution.
//!
//! Laws travel as truncated moment sequences. The S-transform of a law
//! with moments `m_k` is `S(z) = χ(z)(1+z)/z`, where `χ` inverts
//! `ψ(z) = Σ_{k≥1} m_k z^k`; `⊠` multiplies S-transforms.

mod series;

pub use series::{
    series_comp_inverse, series_compose, series_mul, series_reciprocal, FormalSeries, SeriesError,
};

use num_bigint::BigUint;

/// Default and maximum truncation orders for the ⊠ pipeline.
pub const DEFAULT_TRUNC: usize = 8;
pub const MAX_TRUNC: usize = 16;

/// Moments `m₁..m_K` of a law; `m₀ = 1` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeq {
    m: Vec<f64>,
}

impl MomentSeq {
    pub fn new(m: Vec<f64>) -> Self {
        assert!(!m.is_empty(), "a moment sequence needs K >= 1");
        assert!(m.iter().all(|x| x.is_finite()), "moments must be finite");
        MomentSeq { m }
    }

    /// All moments equal to one: the point mass at 1.
    pub fn point_mass(at: f64, k: usize) -> Self {
        MomentSeq::new((1..=k).map(|r| at.powi(r as i32)).collect())
    }

    pub fn k(&self) -> usize {
        self.m.len()
    }

    /// The r-th moment, `r` in `1..=K`.
    pub fn get(&self, r: usize) -> f64 {
        self.m[r - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    pub fn truncate(&self, k: usize) -> Self {
        MomentSeq::new(self.m[..k.min(self.m.len())].to_vec())
    }
}

/// Catalan number by the convolution recurrence, exact.
pub fn catalan(k: usize) -> BigUint {
    let mut c: Vec<BigUint> = vec![BigUint::from(1u32)];
    for n in 0..k {
        let next = (0..=n).map(|i| &c[i] * &c[n - i]).sum();
        c.push(next);
    }
    c.swap_remove(k)
}

pub fn catalan_f64(k: usize) -> f64 {
    let mut c = vec![1.0f64];
    for n in 0..k {
        c.push((0..=n).map(|i| c[i] * c[n - i]).sum());
    }
    c[k]
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `E λ^r` under the semicircle law on `[-2, 2]`.
pub fn semicircle_moment(r: usize) -> f64 {
    if r.is_multiple_of(2) {
        catalan_f64(r / 2)
    } else {
        0.0
    }
}

/// Coefficient of `Z^{z^r}` in `Z^{z^t}` for the iterated `W + Wᵀ` program.
pub fn semicircle_b_coeff(t: usize, r: usize) -> f64 {
    assert!(r <= t, "need r <= t");
    if (t - r).is_multiple_of(2) {
        catalan_f64((t - r) / 2)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpMethod {
    Explicit,
    Recurrence,
}

/// r-th moment of the Marchenko–Pastur law with ratio `rho` (rows/cols),
/// normalized by the row dimension.
pub fn mp_moment(r: usize, rho: f64, method: MpMethod) -> f64 {
    assert!(r >= 1 && rho > 0.0);
    match method {
        MpMethod::Explicit => (0..=(r - 1) / 2)
            .map(|k| {
                rho.powi(k as i32)
                    * (1.0 + rho).powi((r - 1 - 2 * k) as i32)
                    * binomial(r - 1, 2 * k)
                    * catalan_f64(k)
            })
            .sum(),
        MpMethod::Recurrence => mp_moments(r, rho)[r - 1],
    }
}

/// `M₁..M_K` by the Catalan-like recurrence.
pub fn mp_moments(k: usize, rho: f64) -> Vec<f64> {
    let mut m = vec![0.0; k + 1];
    if k >= 1 {
        m[1] = 1.0;
    }
    for s in 2..=k {
        let conv: f64 = (1..=s - 2).map(|r| m[r] * m[s - 1 - r]).sum();
        m[s] = rho * conv + (1.0 + rho) * m[s - 1];
    }
    m.split_off(1)
}

pub fn mp_moment_seq(k: usize, rho: f64) -> MomentSeq {
    MomentSeq::new(mp_moments(k, rho))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Semicircle,
    MarchenkoPastur(f64),
}

/// Continuous density at `x` and the mass of the atom at zero.
pub fn law_density(law: Law, x: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    match law {
        Law::Semicircle => {
            let d = if x.abs() < 2.0 {
                (4.0 - x * x).sqrt() / (2.0 * PI)
            } else {
                0.0
            };
            (d, 0.0)
        }
        Law::MarchenkoPastur(rho) => {
            let (a, b) = mp_support(rho);
            let atom = (1.0 - 1.0 / rho).max(0.0);
            let d = if x > a && x < b && x > 0.0 {
                ((b - x) * (x - a)).sqrt() / (2.0 * PI * rho * x)
            } else {
                0.0
            };
            (d, atom)
        }
    }
}

/// Edges `(1 ∓ √ρ)²` of the continuous part.
pub fn mp_support(rho: f64) -> (f64, f64) {
    let s = rho.sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

/// S-transform to order `K − 1`.
pub fn s_transform(m: &MomentSeq) -> Result<FormalSeries, SeriesError> {
    let k = m.k();
    if m.get(1) == 0.0 {
        return Err(SeriesError::NonInvertibleSeries(
            "first moment is zero".into(),
        ));
    }
    let mut psi = vec![0.0];
    psi.extend_from_slice(m.as_slice());
    let chi = series_comp_inverse(&FormalSeries::new(psi), k)?;
    let chi_over_z = FormalSeries::new(chi.coeffs()[1..].to_vec());
    Ok(series_mul(
        &chi_over_z,
        &FormalSeries::new(vec![1.0, 1.0]),
        k - 1,
    ))
}

/// Inverse of [`s_transform`]: needs `S` to order at least `K − 1`.
pub fn moments_from_s(s: &FormalSeries, k: usize) -> Result<MomentSeq, SeriesError> {
    if s.coeff(0) == 0.0 {
        return Err(SeriesError::NonInvertibleSeries("S(0) is zero".into()));
    }
    let inv = series_reciprocal(&FormalSeries::new(vec![1.0, 1.0]), k - 1)?;
    let s_over = series_mul(s, &inv, k - 1);
    let mut chi = vec![0.0];
    chi.extend_from_slice(s_over.coeffs());
    let psi = series_comp_inverse(&FormalSeries::new(chi), k)?;
    Ok(MomentSeq::new(psi.coeffs()[1..=k].to_vec()))
}

/// Moments of `a ⊠ b` to order `K`.
pub fn free_mul_conv(a: &MomentSeq, b: &MomentSeq, k: usize) -> Result<MomentSeq, SeriesError> {
    assert!(k <= a.k() && k <= b.k(), "operands shorter than K");
    let sa = s_transform(&a.truncate(k))?;
    let sb = s_transform(&b.truncate(k))?;
    moments_from_s(&series_mul(&sa, &sb, k - 1), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalan_values() {
        assert_eq!(catalan(0), BigUint::from(1u32));
        assert_eq!(catalan(4), BigUint::from(14u32));
        assert_eq!(catalan(10), BigUint::from(16796u32));
        assert_eq!(catalan(16).to_string(), "35357670");
        assert_eq!(catalan(35).to_string(), "3116285494907301262");
    }

    #[test]
    fn semicircle_values() {
        assert_eq!(semicircle_moment(2), 1.0);
        assert_eq!(semicircle_moment(3), 0.0);
        assert_eq!(semicircle_moment(8), 14.0);
        assert_eq!(semicircle_b_coeff(4, 0), 2.0);
        assert_eq!(semicircle_b_coeff(3, 0), 0.0);
        assert_eq!(semicircle_b_coeff(5, 1), 2.0);
    }

    #[test]
    fn mp_values() {
        for m in [MpMethod::Explicit, MpMethod::Recurrence] {
            assert_eq!(mp_moment(1, 3.7, m), 1.0);
            assert!((mp_moment(2, 0.5, m) - 1.5).abs() < 1e-15);
            assert!((mp_moment(3, 1.0, m) - 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mp_atom_and_edges() {
        assert_eq!(law_density(Law::MarchenkoPastur(2.0), 1.0).1, 0.5);
        assert_eq!(law_density(Law::MarchenkoPastur(0.5), 1.0).1, 0.0);
        assert_eq!(law_density(Law::Semicircle, 2.0).0, 0.0);
        assert_eq!(law_density(Law::Semicircle, -2.0).0, 0.0);
    }

    #[test]
    fn s_of_point_mass_is_one() {
        let s = s_transform(&MomentSeq::point_mass(1.0, 8)).unwrap();
        for (i, c) in s.coeffs().iter().enumerate() {
            assert!((c - if i == 0 { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }

    #[test]
    fn s_of_mp1() {
        let s = s_transform(&MomentSeq::new(vec![1.0, 2.0, 5.0, 14.0])).unwrap();
        for (a, b) in s.coeffs().iter().zip([1.0, -1.0, 1.0, -1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        let m = moments_from_s(&FormalSeries::new(vec![1.0, -1.0, 1.0, -1.0, 1.0]), 5).unwrap();
        for (a, b) in m.as_slice().iter().zip([1.0, 2.0, 5.0, 14.0, 42.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn first_moment_zero_rejected() {
        assert!(s_transform(&MomentSeq::new(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn mp_squared() {
        let mp = MomentSeq::new(vec![1.0, 2.0, 5.0, 14.0]);
        let m = free_mul_conv(&mp, &mp, 4).unwrap();
        for (a, b) in m.as_slice().iter().zip([1.0, 3.0, 12.0, 55.0]) {
            assert!((a - b).abs() < 1e-11, "{m:?}");
        }
    }
}
