#![allow(dead_code)]

use ndarray::{Array2, ArrayView1};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn col(a: &Array2<f64>, j: usize) -> Vec<f64> {
    a.column(j).to_vec()
}

/// Asserts `|estimate - expected| <= k * se`.
pub fn within_se(what: &str, estimate: f64, expected: f64, se: f64, k: f64) {
    assert!(
        (estimate - expected).abs() <= k * se,
        "{what}: estimate {estimate} vs expected {expected} ({:.2} SE)",
        (estimate - expected) / se
    );
}

/// Checks sample mean and variance of `v` against a Gaussian with the given moments.
pub fn gaussian_moments(what: &str, v: &[f64], mu: f64, sigma2: f64, k: f64) {
    let n = v.len() as f64;
    within_se(&format!("{what} mean"), mean(v), mu, (sigma2 / n).sqrt(), k);
    within_se(&format!("{what} variance"), var(v), sigma2, sigma2 * (2.0 / (n - 1.0)).sqrt(), k);
}

pub fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
