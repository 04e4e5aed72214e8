// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small dense symmetric solves on row-major `n x n` slices.

use alloc::vec;
use alloc::vec::Vec;

/// In-place Cholesky factorisation `A = L L^T`, lower triangle kept.
///
/// Fails when a pivot drops to `min_pivot` or below; the returned index is the
/// offending column.
pub fn cholesky(a: &mut [f64], n: usize, min_pivot: f64) -> Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > min_pivot) {
            return Err(j);
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Inverse of a symmetric positive definite matrix, or `None` if the
/// factorisation breaks down.
pub fn invert_spd(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    cholesky(&mut l, n, 0.0).ok()?;
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        cholesky_solve(&l, n, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Some(inv)
}

/// Solves the symmetric positive semidefinite system `A x = b`.
///
/// A plain Cholesky solve is tried first; if it breaks down a ridge of
/// `1e-10 * trace / n` is added. Returns `None` only for a zero matrix or a
/// non-finite system.
pub fn solve_spd_with_ridge(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
    let mut l = a.to_vec();
    let ok = cholesky(&mut l, n, 1e-14 * max_diag).is_ok();
    if !ok {
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        if !(trace > 0.0) || !trace.is_finite() {
            return None;
        }
        l.copy_from_slice(a);
        let ridge = 1e-10 * trace / n as f64;
        for i in 0..n {
            l[i * n + i] += ridge;
        }
        cholesky(&mut l, n, 0.0).ok()?;
    }
    let mut x = b.to_vec();
    cholesky_solve(&l, n, &mut x);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_known_matrix() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let inv = invert_spd(&a, 2).unwrap();
        // det = 8
        let expect = [3.0 / 8.0, -2.0 / 8.0, -2.0 / 8.0, 4.0 / 8.0];
        for (x, y) in inv.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_systems_get_a_ridge() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(invert_spd(&a, 2).is_none());
        let x = solve_spd_with_ridge(&a, 2, &[2.0, 2.0]).unwrap();
        assert!((x[0] + x[1] - 2.0).abs() < 1e-6);
        assert!(solve_spd_with_ridge(&[0.0; 4], 2, &[0.0, 0.0]).is_none());
    }

    #[test]
    fn solve_recovers_rhs() {
        let a = [10.0, 1.0, 0.5, 1.0, 8.0, 0.2, 0.5, 0.2, 5.0];
        let x_true = [1.0, -2.0, 3.0];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i * 3 + j] * x_true[j]).sum())
            .collect();
        let x = solve_spd_with_ridge(&a, 3, &b).unwrap();
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
