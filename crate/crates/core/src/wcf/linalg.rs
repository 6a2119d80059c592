use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest-to-largest singular value ratio below which a factor counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) fn check_full_rank(m: &DMatrix<f64>, factor: &'static str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(factor));
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { factor, ratio });
    }
    Ok(())
}

/// Orthonormal basis of the column space of a tall full-rank matrix.
pub(crate) fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// `argmin_X ||A X - B||_F` for tall full-rank `A`, through QR.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>, factor: &'static str) -> Result<DMatrix<f64>> {
    let qr = a.clone().qr();
    let rhs = qr.q().tr_mul(b);
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient { factor, ratio: 0.0 })
}

/// `argmin_x ||A x - b||` subject to `sum(x) = 1`, for tall full-rank `A`.
pub(crate) fn unit_sum_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, factor: &'static str) -> Result<DVector<f64>> {
    let qr = a.clone().qr();
    let r = qr.r();
    let unconstrained = r
        .solve_upper_triangular(&qr.q().tr_mul(b))
        .ok_or(Error::RankDeficient { factor, ratio: 0.0 })?;
    // direction (A^T A)^{-1} 1 = R^{-1} R^{-T} 1
    let ones = DVector::from_element(a.ncols(), 1.0);
    let dir = r
        .tr_solve_upper_triangular(&ones)
        .and_then(|y| r.solve_upper_triangular(&y))
        .ok_or(Error::RankDeficient { factor, ratio: 0.0 })?;
    let shift = (1.0 - unconstrained.sum()) / dir.sum();
    Ok(unconstrained + dir * shift)
}
