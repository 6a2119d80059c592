//! Closed-form Legendre conjugate of `q -> W_gamma(p, q)`.
//!
//! With `alpha = exp(g / gamma)`:
//!
//! ```text
//! H*_p(g)      = gamma * (h(p) + <p, log K alpha>)
//! grad H*_p(g) = alpha ⊙ K^T (p ⊘ K alpha)
//! ```
//!
//! The gradient is a probability vector for every `g`.

use nalgebra::DVector;

use super::{entropy, log_sum_exp, DualPotential, GibbsKernel, SimplexVector};
use crate::error::{Error, Result};

pub fn conjugate_value(p: &SimplexVector, g: &DualPotential, kernel: &GibbsKernel) -> Result<f64> {
    conjugate_value_and_grad(p, g.as_vector(), kernel).map(|(v, _)| v)
}

pub fn conjugate_grad(p: &SimplexVector, g: &DualPotential, kernel: &GibbsKernel) -> Result<SimplexVector> {
    conjugate_value_and_grad(p, g.as_vector(), kernel).map(|(_, grad)| SimplexVector::from_normalized(grad))
}

/// `W_gamma(p, q)` at `q = grad H*_p(g)`, where Fenchel-Young holds with
/// equality: `W = <g, q> - H*_p(g)`.
pub fn smoothed_distance_at_gradient(p: &SimplexVector, g: &DVector<f64>, kernel: &GibbsKernel) -> Result<f64> {
    let (value, grad) = conjugate_value_and_grad(p, g, kernel)?;
    Ok(g.dot(&grad) - value)
}

/// Value and gradient sharing one pass over the kernel.
pub fn conjugate_value_and_grad(
    p: &SimplexVector,
    g: &DVector<f64>,
    kernel: &GibbsKernel,
) -> Result<(f64, DVector<f64>)> {
    let (n, s) = (kernel.nrows(), kernel.ncols());
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            what: "p vs kernel rows",
            expected: n,
            got: p.len(),
        });
    }
    if g.len() != s {
        return Err(Error::DimensionMismatch {
            what: "dual potential vs kernel columns",
            expected: s,
            got: g.len(),
        });
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("dual potential"));
    }
    let gamma = kernel.gamma();
    let result = kernel
        .kernel()
        .and_then(|k| scaled(p, g, k, gamma))
        .unwrap_or_else(|| log_domain(p, g, kernel));
    let (log_k_alpha, grad) = result;
    let mut inner = 0.0;
    for (pi, l) in p.as_slice().iter().zip(log_k_alpha.iter()) {
        if *pi > 0.0 {
            inner += pi * l;
        }
    }
    let value = gamma * (entropy(p.as_slice())? + inner);
    if !value.is_finite() || grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("conjugate of the smoothed distance"));
    }
    Ok((value, grad))
}

/// Uses the materialized kernel with `alpha` shifted by `max g`. Returns
/// `None` if some `(K alpha)_i` underflows.
fn scaled(
    p: &SimplexVector,
    g: &DVector<f64>,
    k: &nalgebra::DMatrix<f64>,
    gamma: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let shift = g.max();
    let alpha = g.map(|x| ((x - shift) / gamma).exp());
    let k_alpha = k * &alpha;
    if k_alpha.iter().any(|x| !x.is_normal()) {
        return None;
    }
    let ratio = p.as_vector().component_div(&k_alpha);
    let grad = k.tr_mul(&ratio).component_mul(&alpha);
    let log_k_alpha = k_alpha.map(|x| x.ln() + shift / gamma);
    Some((log_k_alpha, grad))
}

fn log_domain(p: &SimplexVector, g: &DVector<f64>, kernel: &GibbsKernel) -> (DVector<f64>, DVector<f64>) {
    let (n, s) = (kernel.nrows(), kernel.ncols());
    let gamma = kernel.gamma();
    let log_k = kernel.log_kernel();
    let log_alpha = g / gamma;
    let log_k_alpha = DVector::from_fn(n, |i, _| log_sum_exp((0..s).map(|j| log_k[(i, j)] + log_alpha[j])));
    let mut grad = DVector::zeros(s);
    for (i, pi) in p.as_slice().iter().enumerate() {
        if *pi == 0.0 {
            continue;
        }
        for j in 0..s {
            grad[j] += pi * (log_k[(i, j)] + log_alpha[j] - log_k_alpha[i]).exp();
        }
    }
    (log_k_alpha, grad)
}
