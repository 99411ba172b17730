use thiserror::Error;

use crate::numeric::Kahan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series is not invertible: {0}")]
    NonInvertibleSeries(String),
}

/// Truncated power series `c₀ + c₁z + … + c_K z^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormalSeries {
    c: Vec<f64>,
}

impl FormalSeries {
    /// Series with the given coefficients, lowest order first.
    pub fn new(c: Vec<f64>) -> Self {
        assert!(!c.is_empty(), "a series needs at least the constant term");
        FormalSeries { c }
    }

    pub fn zero(order: usize) -> Self {
        FormalSeries {
            c: vec![0.0; order + 1],
        }
    }

    pub fn constant(v: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.c[0] = v;
        s
    }

    /// The series `z`.
    pub fn identity(order: usize) -> Self {
        let mut s = Self::zero(order);
        if order >= 1 {
            s.c[1] = 1.0;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, order: usize) -> Self {
        FormalSeries {
            c: (0..=order).map(|k| self.coeff(k)).collect(),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &ci| acc * z + ci)
    }

    fn add(&self, o: &Self, order: usize) -> Self {
        FormalSeries {
            c: (0..=order).map(|k| self.coeff(k) + o.coeff(k)).collect(),
        }
    }

    fn scale(&self, a: f64) -> Self {
        FormalSeries {
            c: self.c.iter().map(|x| a * x).collect(),
        }
    }

    fn derivative(&self) -> Self {
        let order = self.order().max(1) - 1;
        FormalSeries {
            c: (0..=order)
                .map(|k| (k + 1) as f64 * self.coeff(k + 1))
                .collect(),
        }
    }
}

/// Truncated product, coefficient sums compensated.
pub fn series_mul(a: &FormalSeries, b: &FormalSeries, order: usize) -> FormalSeries {
    let c = (0..=order)
        .map(|n| {
            let mut acc = Kahan::default();
            for i in 0..=n.min(a.order()) {
                if n - i <= b.order() {
                    acc.add(a.c[i] * b.c[n - i]);
                }
            }
            acc.value()
        })
        .collect();
    FormalSeries { c }
}

/// `1/f`, needs `f₀ ≠ 0`.
pub fn series_reciprocal(f: &FormalSeries, order: usize) -> Result<FormalSeries, SeriesError> {
    let f0 = f.coeff(0);
    if f0 == 0.0 {
        return Err(SeriesError::NonInvertibleSeries(
            "reciprocal of a series with zero constant term".into(),
        ));
    }
    let mut g = vec![0.0; order + 1];
    g[0] = 1.0 / f0;
    for n in 1..=order {
        let mut acc = Kahan::default();
        for k in 1..=n.min(f.order()) {
            acc.add(f.c[k] * g[n - k]);
        }
        g[n] = -acc.value() / f0;
    }
    Ok(FormalSeries { c: g })
}

/// `f(g(z))` truncated at `order`. `g` must have zero constant term, so
/// every coefficient below `order` is exact.
pub fn series_compose(
    f: &FormalSeries,
    g: &FormalSeries,
    order: usize,
) -> Result<FormalSeries, SeriesError> {
    if g.coeff(0) != 0.0 {
        return Err(SeriesError::NonInvertibleSeries(
            "inner series of a composition must vanish at zero".into(),
        ));
    }
    let mut acc = FormalSeries::constant(f.coeff(f.order()), order);
    for k in (0..f.order()).rev() {
        acc = series_mul(&acc, g, order);
        acc.c[0] += f.c[k];
    }
    Ok(acc.truncate(order))
}

/// Compositional inverse `g` with `f(g(z)) = z`, by Newton iteration
/// `g ← g − (f∘g − z)/(f'∘g)`; each step doubles the number of correct terms.
pub fn series_comp_inverse(f: &FormalSeries, order: usize) -> Result<FormalSeries, SeriesError> {
    if f.coeff(0) != 0.0 {
        return Err(SeriesError::NonInvertibleSeries("c₀ must be 0".into()));
    }
    let c1 = f.coeff(1);
    if c1 == 0.0 {
        return Err(SeriesError::NonInvertibleSeries(
            "c₁ must be nonzero".into(),
        ));
    }
    let z = FormalSeries::identity(order);
    let mut g = z.scale(1.0 / c1);
    let df = f.derivative();
    let mut correct = 1;
    while correct < order {
        let resid = series_compose(f, &g, order)?.add(&z.scale(-1.0), order);
        let slope = series_compose(&df, &g, order)?;
        let step = series_mul(&resid, &series_reciprocal(&slope, order)?, order);
        g = g.add(&step.scale(-1.0), order);
        correct *= 2;
    }
    // one polishing step mops up rounding in the highest terms
    if order >= 1 {
        let resid = series_compose(f, &g, order)?.add(&z.scale(-1.0), order);
        let slope = series_compose(&df, &g, order)?;
        let step = series_mul(&resid, &series_reciprocal(&slope, order)?, order);
        g = g.add(&step.scale(-1.0), order);
    }
    g.c[0] = 0.0;
    Ok(g)
}
