//! Banded direct solvers.

use crate::error::{Error, Result};

/// Thomas algorithm for `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`.
/// `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    debug_assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut gam = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut bet = diag[0];
    if bet == 0.0 {
        return Err(Error::Singular("zero pivot in row 0".into()));
    }
    x[0] = rhs[0] / bet;
    for i in 1..n {
        gam[i] = sup[i - 1] / bet;
        bet = diag[i] - sub[i] * gam[i];
        if bet == 0.0 {
            return Err(Error::Singular(format!("zero pivot in row {i}")));
        }
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / bet;
    }
    for i in (0..n - 1).rev() {
        x[i] -= gam[i + 1] * x[i + 1];
    }
    Ok(x)
}

/// Periodic tridiagonal system: row 0 couples to `x[n-1]` through `sub[0]`
/// and row `n-1` couples to `x[0]` through `sup[n-1]`. Solved with the
/// Sherman-Morrison correction of a plain tridiagonal solve.
pub fn solve_cyclic_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::Singular(format!(
            "cyclic system needs at least 3 unknowns, got {n}"
        )));
    }
    let top_right = sub[0];
    let bottom_left = sup[n - 1];
    let gamma = -diag[0];
    if gamma == 0.0 {
        return Err(Error::Singular("zero leading diagonal".into()));
    }

    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= bottom_left * top_right / gamma;

    let y = solve_tridiagonal(sub, &bb, sup, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = bottom_left;
    let z = solve_tridiagonal(sub, &bb, sup, &u)?;

    let denom = 1.0 + z[0] + top_right / gamma * z[n - 1];
    if denom == 0.0 {
        return Err(Error::Singular("Sherman-Morrison denominator vanished".into()));
    }
    let factor = (y[0] + top_right / gamma * y[n - 1]) / denom;
    Ok(y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect())
}
