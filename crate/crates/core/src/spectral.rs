//! Spectral bound of a Metzler matrix.
//!
//! For a Metzler matrix (nonnegative off-diagonal entries) the spectral
//! bound — the largest real part over all eigenvalues — is itself a real
//! eigenvalue, which makes it the persistence indicator for the patch
//! dynamics: the zero state is unstable exactly when the bound is positive.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Matrices up to this size use a dense eigensolver; larger ones use a
/// shifted power iteration.
pub const DENSE_EIG_LIMIT: usize = 64;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_STEPS: usize = 100_000;

/// Largest real part of the eigenvalues of a Metzler matrix.
pub fn spectral_bound(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::invalid(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::invalid(format!("entry ({i},{j}) is not finite")));
            }
            if i != j && v < 0.0 {
                return Err(Error::invalid(format!(
                    "not a Metzler matrix: off-diagonal entry ({i},{j}) is {v}"
                )));
            }
        }
    }
    spectral_bound_metzler(m)
}

/// Same as [`spectral_bound`] but assumes the input is already Metzler.
pub(crate) fn spectral_bound_metzler(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    match n {
        1 => Ok(m[(0, 0)]),
        2 => {
            // Both eigenvalues are real: the discriminant
            // (a11 - a22)^2 + 4 a12 a21 is nonnegative for Metzler input.
            let tr = m[(0, 0)] + m[(1, 1)];
            let disc = (m[(0, 0)] - m[(1, 1)]).powi(2) + 4.0 * m[(0, 1)] * m[(1, 0)];
            Ok(0.5 * (tr + disc.max(0.0).sqrt()))
        }
        _ if n <= DENSE_EIG_LIMIT => Ok(m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)),
        _ => power_iteration(m),
    }
}

/// Shifted power iteration: iterate `B = M + sigma I` with
/// `sigma = max_i |M_ii| + 1`, so `B` is nonnegative with positive diagonal
/// and its spectral radius is `s(M) + sigma`. Convergence is certified by
/// the Collatz–Wielandt bracket `min_i (Bv)_i / v_i <= rho(B) <= max_i (Bv)_i / v_i`.
fn power_iteration(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    let sigma = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max) + 1.0;
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    for _ in 0..POWER_MAX_STEPS {
        for i in 0..n {
            let mut acc = sigma * v[i];
            for j in 0..n {
                acc += m[(i, j)] * v[j];
            }
            w[i] = acc;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let ratio = w[i] / v[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        if hi - lo <= POWER_TOL * hi.abs().max(1.0) {
            return Ok(0.5 * (lo + hi) - sigma);
        }
        let scale = w.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::numerical(
                "power iteration broke down (zero or non-finite iterate)",
            ));
        }
        for i in 0..n {
            v[i] = w[i] / scale;
        }
    }
    Err(Error::numerical(format!(
        "power iteration did not converge within {POWER_MAX_STEPS} steps"
    )))
}
