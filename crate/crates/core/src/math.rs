//! Scalar helpers shared by the likelihood, embedding and evaluation code.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Log-density normalizer of a symmetric Dirichlet with `dim` components.
pub fn ln_dirichlet_norm(concentration: f64, dim: usize) -> f64 {
    let n = dim as f64;
    ln_gamma(n * concentration) - n * ln_gamma(concentration)
}

/// In-place softmax with max-subtraction.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// True when `v` is a strictly positive point whose entries sum to one within `tol`.
pub fn is_open_simplex(v: &[f64], tol: f64) -> bool {
    !v.is_empty()
        && v.iter().all(|&x| x > 0.0 && x.is_finite())
        && (v.iter().sum::<f64>() - 1.0).abs() <= tol
}
