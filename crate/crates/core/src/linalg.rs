//! Tridiagonal solves shared by the Newton iterations.

use crate::error::{Error, Result};

/// Solve `T x = rhs` for tridiagonal `T` with sub-diagonal `lower[1..]`,
/// diagonal `diag` and super-diagonal `upper[..n-1]` (Thomas algorithm, no
/// pivoting).
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return Err(Error::SolverFailure("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::SolverFailure(format!(
                "zero pivot in tridiagonal solve at row {i}"
            )));
        }
        c[i] = if i + 1 < n { upper[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure("non-finite tridiagonal solution".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_laplacian() {
        // tridiag(-1, 2, -1) x = 1 has x_i = i(n+1-i)/2 (1-based)
        let n = 9;
        let x = solve_tridiagonal(&vec![-1.0; n], &vec![2.0; n], &vec![-1.0; n], &vec![1.0; n])
            .unwrap();
        for (i, xi) in x.iter().enumerate() {
            let k = (i + 1) as f64;
            assert!((xi - k * (n as f64 + 1.0 - k) / 2.0).abs() < 1e-12);
        }
        assert!(solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }
}
