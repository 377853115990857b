use nalgebra::DMatrix;

use crate::{Error, Real, Result};

#[inline]
pub(crate) fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| {
            let d = x - y;
            acc + d * d
        })
}

#[inline]
pub(crate) fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    sq_dist(a, b).sqrt()
}

/// Singular values of `m`, largest first.
pub(crate) fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<T> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// `σ_max / σ_min`, `+inf` when the smallest singular value is zero.
pub(crate) fn cond2<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let sv = singular_values(m);
    let (Some(&max), Some(&min)) = (sv.first(), sv.last()) else {
        return Ok(T::one());
    };
    if min <= T::zero() || !(max / min).is_finite() {
        return Ok(T::infinity());
    }
    Ok(max / min)
}

/// Numerical rank with tolerance `tol_scale · σ_max · ε`.
pub(crate) fn numerical_rank<T: Real>(m: &DMatrix<T>, tol_scale: usize) -> usize {
    let sv = singular_values(m);
    let Some(&max) = sv.first() else { return 0 };
    let tol = T::lit(tol_scale as f64) * max * T::machine_eps();
    sv.iter().filter(|&&s| s > tol).count()
}

/// Solves `a x = b` by LU with partial pivoting.
pub(crate) fn lu_solve<T: Real>(a: DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let x = a.lu().solve(b).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}
