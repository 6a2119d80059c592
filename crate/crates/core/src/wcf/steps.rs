//! The two blocks of the coordinate descent.
//!
//! With `D` fixed, each user's dual `g_u` minimizes `H*_{p_u}` over the
//! subspace `D^T g = 0`; with `Λ` fixed, the dual matrix `G` minimizes
//! `sum_u H*_{p_u}(G_u)` over `G Λ^T = 0`. Both are solved by projected
//! gradient descent with Armijo backtracking, then the primal factor is
//! recovered by least squares against the gradients, which are always
//! probability vectors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::linalg::{check_full_rank, least_squares, orthonormal_basis};
use crate::error::{Error, Result};
use crate::transport::{conjugate_value_and_grad, GibbsKernel, SimplexVector};

#[derive(Debug, Clone, Copy)]
pub struct DualSolverOptions {
    /// Stop when the projected gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for DualSolverOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-7,
            max_iter: 500,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

/// Projected gradients smaller than this may stall the line search on
/// rounding alone; such a stall is treated as convergence.
const STALL_NORM: f64 = 1e-6;

/// Outcome of one block step.
#[derive(Debug, Clone)]
pub struct DualState {
    /// One dual potential per user (columns), `s x m`.
    pub duals: DMatrix<f64>,
    /// `sum_u W_gamma(p_u, target_u)` at the recovery targets.
    pub objective: f64,
    /// Largest number of inner iterations used.
    pub iterations: usize,
    /// `||D^T G||_inf` for the Λ-step, `||G Λ^T||_inf` for the D-step.
    pub feasibility: f64,
    /// `max |D Λ - targets|` after recovery.
    pub residual: f64,
    /// Recovery targets, one probability vector per column.
    pub targets: DMatrix<f64>,
}

fn check_inputs(prefs: &[SimplexVector], kernel: &GibbsKernel) -> Result<()> {
    if prefs.is_empty() {
        return Err(Error::InvalidArgument("no users to fit".into()));
    }
    for p in prefs {
        if p.len() != kernel.nrows() {
            return Err(Error::DimensionMismatch {
                what: "preference length vs cost rows",
                expected: kernel.nrows(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

fn warm_or_zero(warm: Option<&DMatrix<f64>>, s: usize, m: usize) -> DMatrix<f64> {
    match warm {
        Some(w) if w.shape() == (s, m) && w.iter().all(|x| x.is_finite()) => w.clone(),
        _ => DMatrix::zeros(s, m),
    }
}

struct UserSolve {
    g: DVector<f64>,
    grad: DVector<f64>,
    value: f64,
    iterations: usize,
}

struct Descent<A> {
    point: DMatrix<f64>,
    grad: DMatrix<f64>,
    value: f64,
    aux: A,
    iterations: usize,
}

/// Projected gradient descent with Armijo backtracking. The first trial step
/// is `initial_step`; later ones start from the Barzilai-Borwein step of the
/// previous move, which the backtracking then shrinks as needed.
fn projected_descent<A>(
    start: DMatrix<f64>,
    project: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    evaluate: impl Fn(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>, A)>,
    opts: &DualSolverOptions,
    step_name: &'static str,
    who: &dyn Fn() -> String,
) -> Result<Descent<A>> {
    let mut point = project(&start);
    let (mut value, mut grad, mut aux) = evaluate(&point)?;
    let mut dir = project(&grad);
    let mut trial = opts.initial_step;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let norm2 = dir.norm_squared();
        if norm2.sqrt() < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut step = trial;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let candidate = project(&(&point - step * &dir));
            if let Ok((v, gr, a)) = evaluate(&candidate) {
                if v <= value - opts.sufficient_decrease * step * norm2 {
                    accepted = Some((candidate, v, gr, a));
                    break;
                }
            }
            step *= opts.shrink;
        }
        let Some((candidate, v, gr, a)) = accepted else {
            if norm2.sqrt() < STALL_NORM {
                break;
            }
            return Err(Error::DualDivergence {
                step: step_name,
                detail: format!(
                    "{}no Armijo decrease after {} backtracks (objective {value:e}, projected gradient norm {:e})",
                    who(),
                    opts.max_backtracks,
                    norm2.sqrt()
                ),
            });
        };
        let new_dir = project(&gr);
        let moved = &candidate - &point;
        let curvature = moved.dot(&(&new_dir - &dir));
        trial = if curvature > 0.0 {
            (moved.norm_squared() / curvature).clamp(1e-12, 1e12)
        } else {
            opts.initial_step
        };
        point = candidate;
        value = v;
        grad = gr;
        aux = a;
        dir = new_dir;
    }
    Ok(Descent {
        point,
        grad,
        value,
        aux,
        iterations,
    })
}

fn solve_user(
    p: &SimplexVector,
    start: DVector<f64>,
    basis: &DMatrix<f64>,
    kernel: &GibbsKernel,
    opts: &DualSolverOptions,
    user: usize,
) -> Result<UserSolve> {
    let s = start.len();
    let project = |x: &DMatrix<f64>| x - basis * basis.tr_mul(x);
    let evaluate = |x: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>, ())> {
        let (v, gr) = conjugate_value_and_grad(p, &x.column(0).into_owned(), kernel)?;
        Ok((v, DMatrix::from_column_slice(s, 1, gr.as_slice()), ()))
    };
    let out = projected_descent(
        DMatrix::from_column_slice(s, 1, start.as_slice()),
        project,
        evaluate,
        opts,
        "lambda-step",
        &|| format!("user {user}: "),
    )?;
    Ok(UserSolve {
        g: out.point.column(0).into_owned(),
        grad: out.grad.column(0).into_owned(),
        value: out.value,
        iterations: out.iterations,
    })
}

/// Minimizes over `Λ` with the dictionary fixed.
///
/// `warm` optionally seeds the duals (`s x m`); it is projected onto the
/// feasible subspace first.
pub fn lambda_step(
    dictionary: &DMatrix<f64>,
    prefs: &[SimplexVector],
    kernel: &GibbsKernel,
    opts: &DualSolverOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, DualState)> {
    check_inputs(prefs, kernel)?;
    let (s, m) = (kernel.ncols(), prefs.len());
    if dictionary.nrows() != s {
        return Err(Error::DimensionMismatch {
            what: "dictionary rows vs cold items",
            expected: s,
            got: dictionary.nrows(),
        });
    }
    check_full_rank(dictionary, "dictionary D")?;
    let basis = orthonormal_basis(dictionary);
    let start = warm_or_zero(warm, s, m);
    let solved: Vec<UserSolve> = prefs
        .par_iter()
        .enumerate()
        .map(|(u, p)| solve_user(p, start.column(u).into_owned(), &basis, kernel, opts, u))
        .collect::<Result<_>>()?;

    let mut duals = DMatrix::zeros(s, m);
    let mut targets = DMatrix::zeros(s, m);
    let mut objective = 0.0;
    let mut iterations = 0;
    for (u, sol) in solved.iter().enumerate() {
        duals.set_column(u, &sol.g);
        targets.set_column(u, &sol.grad);
        // Fenchel-Young with equality at the gradient
        objective += sol.g.dot(&sol.grad) - sol.value;
        iterations = iterations.max(sol.iterations);
    }
    let loadings = least_squares(dictionary, &targets, "dictionary D")?;
    let feasibility = dictionary.tr_mul(&duals).abs().max();
    let residual = (dictionary * &loadings - &targets).abs().max();
    Ok((
        loadings,
        DualState {
            duals,
            objective,
            iterations,
            feasibility,
            residual,
            targets,
        },
    ))
}

/// Minimizes over `D` with the loadings fixed.
pub fn d_step(
    loadings: &DMatrix<f64>,
    prefs: &[SimplexVector],
    kernel: &GibbsKernel,
    opts: &DualSolverOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, DualState)> {
    check_inputs(prefs, kernel)?;
    let (s, m) = (kernel.ncols(), prefs.len());
    if loadings.ncols() != m {
        return Err(Error::DimensionMismatch {
            what: "loadings columns vs users",
            expected: m,
            got: loadings.ncols(),
        });
    }
    let loadings_t = loadings.transpose();
    check_full_rank(&loadings_t, "loadings Λ")?;
    // rows of G must be orthogonal to the row space of Λ
    let basis = orthonormal_basis(&loadings_t);
    let project = |x: &DMatrix<f64>| x - (x * &basis) * basis.transpose();

    let evaluate = |g: &DMatrix<f64>| -> Result<(Vec<f64>, DMatrix<f64>)> {
        let per_user: Vec<(f64, DVector<f64>)> = prefs
            .par_iter()
            .enumerate()
            .map(|(u, p)| conjugate_value_and_grad(p, &g.column(u).into_owned(), kernel))
            .collect::<Result<_>>()?;
        let mut grad = DMatrix::zeros(s, m);
        let mut values = Vec::with_capacity(m);
        for (u, (v, gr)) in per_user.into_iter().enumerate() {
            values.push(v);
            grad.set_column(u, &gr);
        }
        Ok((values, grad))
    };
    let total = |values: &[f64]| values.iter().sum::<f64>();

    let evaluate = |g: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>, Vec<f64>)> {
        let (values, grad) = evaluate(g)?;
        Ok((total(&values), grad, values))
    };
    let out = projected_descent(warm_or_zero(warm, s, m), project, evaluate, opts, "d-step", &String::new)?;
    let (g, grad, values, iterations) = (out.point, out.grad, out.aux, out.iterations);

    let objective = (0..m).map(|u| g.column(u).dot(&grad.column(u)) - values[u]).sum();
    // D Λ = targets  <=>  Λ^T D^T = targets^T
    let dictionary = least_squares(&loadings_t, &grad.transpose(), "loadings Λ")?.transpose();
    let feasibility = (&g * &loadings_t).abs().max();
    let residual = (&dictionary * loadings - &grad).abs().max();
    Ok((
        dictionary,
        DualState {
            duals: g,
            objective,
            iterations,
            feasibility,
            residual,
            targets: grad,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfilter::infer_cold_with_kernel;

    fn kernel() -> GibbsKernel {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, 0.9, 0.3, 0.1, 0.7, 0.8, 0.6, 0.2]);
        GibbsKernel::new(&m, 0.05).unwrap()
    }

    fn prefs() -> Vec<SimplexVector> {
        vec![
            SimplexVector::new(vec![0.4, 0.5, 0.1]).unwrap(),
            SimplexVector::new(vec![0.1, 0.1, 0.8]).unwrap(),
            SimplexVector::new(vec![0.3, 0.3, 0.4]).unwrap(),
        ]
    }

    #[test]
    fn invertible_dictionary_collapses_to_filtering() {
        let k = kernel();
        let d = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.1, 0.3, 0.3, 0.2, 0.2, 0.5, 0.7]);
        let (lambda, state) = lambda_step(&d, &prefs(), &k, &DualSolverOptions::default(), None).unwrap();
        assert!(state.duals.abs().max() < 1e-12);
        let fitted = &d * &lambda;
        for (u, p) in prefs().iter().enumerate() {
            let wf = infer_cold_with_kernel(p, &k).unwrap();
            for j in 0..3 {
                assert!((fitted[(j, u)] - wf.as_slice()[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invertible_loadings_collapse_to_filtering() {
        let k = kernel();
        let lambda = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.3, 0.1, 0.0, 1.0]);
        let (d, state) = d_step(&lambda, &prefs(), &k, &DualSolverOptions::default(), None).unwrap();
        assert!(state.duals.abs().max() < 1e-12);
        let fitted = &d * &lambda;
        for (u, p) in prefs().iter().enumerate() {
            let wf = infer_cold_with_kernel(p, &k).unwrap();
            for j in 0..3 {
                assert!((fitted[(j, u)] - wf.as_slice()[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constrained_duals_stay_feasible() {
        let k = kernel();
        let d = DMatrix::from_row_slice(3, 2, &[0.6, 0.1, 0.3, 0.2, 0.1, 0.7]);
        let (lambda, state) = lambda_step(&d, &prefs(), &k, &DualSolverOptions::default(), None).unwrap();
        assert!(state.feasibility <= 1e-10);
        for col in state.targets.column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|x| *x >= 0.0));
        }
        let (_, dstate) = d_step(&lambda, &prefs(), &k, &DualSolverOptions::default(), None).unwrap();
        assert!(dstate.feasibility <= 1e-10);
    }

    #[test]
    fn rank_deficient_factors_are_rejected() {
        let k = kernel();
        let d = DMatrix::from_row_slice(3, 2, &[0.2, 0.4, 0.3, 0.6, 0.5, 1.0]);
        assert!(matches!(
            lambda_step(&d, &prefs(), &k, &DualSolverOptions::default(), None),
            Err(Error::RankDeficient { .. })
        ));
        let lambda = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert!(matches!(
            d_step(&lambda, &prefs(), &k, &DualSolverOptions::default(), None),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn rejects_empty_user_set_and_bad_shapes() {
        let k = kernel();
        let d = DMatrix::from_element(3, 1, 1.0 / 3.0);
        assert!(lambda_step(&d, &[], &k, &DualSolverOptions::default(), None).is_err());
        let d = DMatrix::from_element(2, 1, 0.5);
        assert!(lambda_step(&d, &prefs(), &k, &DualSolverOptions::default(), None).is_err());
    }
}
