//! Small dense complex helpers.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative pivot floor below which a Hermitian matrix is treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-13;

/// Solves `A X = B` for Hermitian positive-definite `A` by Cholesky
/// factorization `A = L Lᴴ`.
pub fn solve_hpd(a: ArrayView2<'_, Complex64>, b: ArrayView2<'_, Complex64>) -> Result<Array2<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension {
            context: "solve_hpd: square matrix",
            expected: n,
            found: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(Error::Dimension {
            context: "solve_hpd: right-hand side rows",
            expected: n,
            found: b.nrows(),
        });
    }

    let scale = (0..n).map(|i| a[[i, i]].re.abs()).fold(0.0, f64::max);
    let mut l = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]].re;
        for k in 0..j {
            diag -= l[[j, k]].norm_sqr();
        }
        if !(diag > PIVOT_TOLERANCE * scale) || !diag.is_finite() {
            return Err(Error::Singular);
        }
        let ljj = diag.sqrt();
        l[[j, j]] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / ljj;
        }
    }

    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in i + 1..n {
                s -= l[[k, i]].conj() * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Conjugate transpose.
pub fn hermitian(a: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
    a.t().mapv(|v| v.conj())
}

/// Largest entry-wise modulus of `a − b`.
pub fn max_abs_diff(a: ArrayView2<'_, Complex64>, b: ArrayView2<'_, Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
