use nalgebra::{DMatrix, DVector};

use super::{check_marginals, entropy, log_sum_exp, GibbsKernel, SimplexVector, TransportPlan, LOG_DOMAIN_GAMMA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions {
    /// Stop once both marginals are violated by less than this (L-infinity).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Solves `min_{T in U(p,q)} <T,M> - gamma h(T)` by matrix scaling.
pub fn sinkhorn(
    p: &SimplexVector,
    q: &SimplexVector,
    costs: &DMatrix<f64>,
    gamma: f64,
    opts: SinkhornOptions,
) -> Result<TransportPlan> {
    let kernel = GibbsKernel::new(costs, gamma)?;
    sinkhorn_with_kernel(p, q, &kernel, opts)
}

pub fn sinkhorn_with_kernel(
    p: &SimplexVector,
    q: &SimplexVector,
    kernel: &GibbsKernel,
    opts: SinkhornOptions,
) -> Result<TransportPlan> {
    check_marginals(p, q, kernel.nrows(), kernel.ncols())?;
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("sinkhorn needs max_iter >= 1".into()));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument("sinkhorn needs tol > 0".into()));
    }
    let scaled = match kernel.kernel() {
        Some(k) if kernel.gamma() >= LOG_DOMAIN_GAMMA => scaling(p, q, k, opts),
        _ => None,
    };
    let (plan, iterations) = match scaled {
        Some(result) => result?,
        None => log_scaling(p, q, kernel.log_kernel(), opts)?,
    };
    finish(plan, iterations, p, q, kernel)
}

fn violation(plan: &DMatrix<f64>, p: &SimplexVector, q: &SimplexVector) -> f64 {
    let rows = plan
        .row_iter()
        .zip(p.as_slice())
        .map(|(r, pi)| (r.sum() - pi).abs())
        .fold(0.0, f64::max);
    let cols = plan
        .column_iter()
        .zip(q.as_slice())
        .map(|(c, qj)| (c.sum() - qj).abs())
        .fold(0.0, f64::max);
    rows.max(cols)
}

fn finish(
    plan: DMatrix<f64>,
    iterations: usize,
    p: &SimplexVector,
    q: &SimplexVector,
    kernel: &GibbsKernel,
) -> Result<TransportPlan> {
    if plan.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("transport plan"));
    }
    let mut transport_cost = 0.0;
    for j in 0..plan.ncols() {
        for i in 0..plan.nrows() {
            let t = plan[(i, j)];
            if t > 0.0 {
                transport_cost += t * kernel.cost(i, j);
            }
        }
    }
    let h = entropy(plan.as_slice())?;
    Ok(TransportPlan {
        marginal_violation: violation(&plan, p, q),
        transport_cost,
        regularized_value: transport_cost - kernel.gamma() * h,
        iterations,
        plan,
    })
}

fn safe_div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Plain `u = p / Kv`, `v = q / K^T u` scaling. Returns `None` when the
/// iterates stop being finite so the caller can retry in the log domain.
fn scaling(
    p: &SimplexVector,
    q: &SimplexVector,
    k: &DMatrix<f64>,
    opts: SinkhornOptions,
) -> Option<Result<(DMatrix<f64>, usize)>> {
    let (p, q) = (p.as_vector(), q.as_vector());
    let mut v = DVector::from_element(k.ncols(), 1.0);
    let mut u = DVector::zeros(k.nrows());
    let mut kv = k * &v;
    let mut err = f64::INFINITY;
    for it in 1..=opts.max_iter {
        u.zip_zip_apply(p, &kv, |ui, pi, kvi| *ui = safe_div(pi, kvi));
        let ktu = k.tr_mul(&u);
        v.zip_zip_apply(q, &ktu, |vj, qj, kj| *vj = safe_div(qj, kj));
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return None;
        }
        kv = k * &v;
        let row_err = u
            .iter()
            .zip(kv.iter())
            .zip(p.iter())
            .map(|((ui, kvi), pi)| (ui * kvi - pi).abs())
            .fold(0.0, f64::max);
        let col_err = v
            .iter()
            .zip(ktu.iter())
            .zip(q.iter())
            .map(|((vj, kj), qj)| (vj * kj - qj).abs())
            .fold(0.0, f64::max);
        err = row_err.max(col_err);
        if !err.is_finite() {
            return None;
        }
        if err < opts.tol {
            let plan = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| u[i] * k[(i, j)] * v[j]);
            return Some(Ok((plan, it)));
        }
    }
    Some(Err(Error::NotConverged {
        iterations: opts.max_iter,
        violation: err,
    }))
}

/// Scaling on `log u`, `log v`; exact for any gamma at the price of `exp` per entry.
fn log_scaling(
    p: &SimplexVector,
    q: &SimplexVector,
    log_k: &DMatrix<f64>,
    opts: SinkhornOptions,
) -> Result<(DMatrix<f64>, usize)> {
    let (n, s) = log_k.shape();
    let log_p: Vec<f64> = p.as_slice().iter().map(|x| x.ln()).collect();
    let log_q: Vec<f64> = q.as_slice().iter().map(|x| x.ln()).collect();
    let mut log_u = vec![0.0; n];
    let mut log_v = vec![0.0; s];
    // log (K v)_i
    let row_lse = |log_v: &[f64], i: usize| log_sum_exp((0..s).map(move |j| log_k[(i, j)] + log_v[j]));
    let mut log_kv: Vec<f64> = (0..n).map(|i| row_lse(&log_v, i)).collect();
    let mut err = f64::INFINITY;
    for it in 1..=opts.max_iter {
        for i in 0..n {
            log_u[i] = if log_p[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_p[i] - log_kv[i]
            };
        }
        let mut col_err: f64 = 0.0;
        for j in 0..s {
            let log_ktu = log_sum_exp((0..n).map(|i| log_k[(i, j)] + log_u[i]));
            log_v[j] = if log_q[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_q[j] - log_ktu
            };
            let mass = if log_v[j] == f64::NEG_INFINITY { 0.0 } else { (log_v[j] + log_ktu).exp() };
            col_err = col_err.max((mass - q.as_slice()[j]).abs());
        }
        let mut row_err: f64 = 0.0;
        for i in 0..n {
            log_kv[i] = row_lse(&log_v, i);
            let mass = if log_u[i] == f64::NEG_INFINITY { 0.0 } else { (log_u[i] + log_kv[i]).exp() };
            row_err = row_err.max((mass - p.as_slice()[i]).abs());
        }
        err = row_err.max(col_err);
        if !err.is_finite() {
            return Err(Error::NonFinite("log-domain sinkhorn"));
        }
        if err < opts.tol {
            let plan = DMatrix::from_fn(n, s, |i, j| {
                let x = log_u[i] + log_k[(i, j)] + log_v[j];
                if x == f64::NEG_INFINITY {
                    0.0
                } else {
                    x.exp()
                }
            });
            return Ok((plan, it));
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        violation: err,
    })
}
