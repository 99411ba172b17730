//! Deterministic reductions and Gaussian quadrature.

/// Fixed-order pairwise summation; the result depends only on the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and standard error of the mean (unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Sample standard deviation (unbiased).
pub fn std_dev(xs: &[f64]) -> f64 {
    let (_, se) = mean_stderr(xs);
    se * (xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Gauss–Hermite rule for the standard normal: `E f(ξ) ≈ Σ wᵢ f(xᵢ)`.
/// Nodes are ascending and symmetric; weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let (x, w) = probabilists_rule(order);
        let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // symmetrize against eigensolver round-off
        let n = pairs.len();
        for i in 0..n / 2 {
            let (a, b) = (pairs[i], pairs[n - 1 - i]);
            let x = 0.5 * (b.0 - a.0);
            let w = 0.5 * (a.1 + b.1);
            pairs[i] = (-x, w);
            pairs[n - 1 - i] = (x, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        for p in &mut pairs {
            p.1 /= total;
        }
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = Kahan::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            if *w > 0.0 {
                acc.add(w * f(*x));
            }
        }
        acc.value()
    }
}

/// Orthonormal Hermite values at `x` run up to degree `n`, with rescaling:
/// returns `(h_{n−1}, h_n, ln Σ_{k<n} h_k²)` where the two values share an
/// unknown common scale (only their ratio is meaningful).
fn hermite_run(x: f64, n: usize) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum = 0.0;
    let mut log_scale = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            sum *= 1e-300;
            log_scale += 300.0 * std::f64::consts::LN_10;
        }
    }
    (prev, cur, sum.ln() + log_scale)
}

/// Golub–Welsch nodes (eigenvalues of the Jacobi matrix of the
/// probabilists' recurrence), polished by Newton steps; Christoffel
/// weights `1 / Σ_{k<n} h_k(x)²`, which keep full relative accuracy in
/// the tails.
fn probabilists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let sn = (n as f64).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for &x0 in eig.eigenvalues.iter() {
        let mut z = x0;
        for _ in 0..3 {
            let (hm, h, _) = hermite_run(z, n);
            if hm == 0.0 {
                break;
            }
            z -= h / (sn * hm);
        }
        let (_, _, log_sum) = hermite_run(z, n);
        x.push(z);
        w.push((-log_sum).exp());
    }
    (x, w)
}
