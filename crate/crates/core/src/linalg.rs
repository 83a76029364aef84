//! Small dense linear-algebra helpers kept in one place: a symmetric
//! tridiagonal eigensolver used by the unitary propagator, and norm
//! utilities shared by the validation checks.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Eigendecomposition of a real symmetric tridiagonal matrix by QL iteration
/// with implicit shifts.
///
/// On entry `d` holds the diagonal and `e[i]` the coupling between rows `i`
/// and `i + 1` (`e.len() == d.len() - 1`, unused for n = 1). `z` is a row-major
/// n-by-n buffer that must hold the identity on entry; on exit column `k` of
/// `z` is the eigenvector for eigenvalue `d[k]`.
///
/// Returns `Err` if any eigenvalue fails to converge within the iteration cap,
/// which for finite input does not happen in practice.
pub fn sym_tridiag_eigen(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<(), &'static str> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    debug_assert_eq!(e.len(), n.saturating_sub(1));
    debug_assert_eq!(z.len(), n * n);
    if n == 1 {
        return Ok(());
    }
    // work on a padded copy of e so e[m] with m = n-1 reads as 0
    let mut sub = vec![0.0f64; n];
    sub[..n - 1].copy_from_slice(e);

    for l in 0..n {
        let mut iter = 0;
        loop {
            // find the first decoupled block boundary at or after l
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if sub[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err("tridiagonal QL failed to converge");
            }
            // implicit shift from the 2x2 block at l
            let mut g = (d[l + 1] - d[l]) / (2.0 * sub[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + sub[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * sub[i];
                let b = c * sub[i];
                r = f.hypot(g);
                sub[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    sub[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // accumulate the rotation into the eigenvector matrix
                for k in 0..n {
                    let row = k * n;
                    let f = z[row + i + 1];
                    z[row + i + 1] = s * z[row + i] + c * f;
                    z[row + i] = c * z[row + i] - s * f;
                }
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            sub[l] = g;
            sub[m] = 0.0;
        }
    }
    e.copy_from_slice(&sub[..n - 1]);
    Ok(())
}

/// Largest elementwise absolute value of `a - b`.
#[cfg(test)]
pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest elementwise |S^H S - I|.
pub fn unitarity_defect(s: &DMatrix<Complex64>) -> f64 {
    let n = s.nrows();
    let prod = s.adjoint() * s;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest elementwise |H - H^H|.
pub fn hermiticity_defect(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}
