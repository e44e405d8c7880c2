//! Dense symmetric positive definite solves (Cholesky), sized for
//! equilibrium-measure systems up to a few thousand unknowns.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    /// Pivot index at which the factorization broke down.
    pub at: usize,
}

impl std::fmt::Display for NotPositiveDefinite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "matrix is not positive definite (pivot {})", self.at)
    }
}

impl std::error::Error for NotPositiveDefinite {}

/// Dot product with four independent accumulators; the hot loop of the
/// factorization, written so the compiler vectorizes it.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// In-place lower Cholesky factorization of a row-major `n x n` matrix.
/// Only the lower triangle is referenced and written.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), NotPositiveDefinite> {
    assert_eq!(a.len(), n * n);
    for i in 0..n {
        // Split so row i and the preceding rows can be borrowed together.
        let (head, tail) = a.split_at_mut(i * n);
        let row_i = &mut tail[..i + 1];
        for j in 0..i {
            let row_j = &head[j * n..j * n + j];
            let s = row_i[j] - dot(&row_i[..j], row_j);
            let djj = head[j * n + j];
            row_i[j] = s / djj;
        }
        let s = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(s > 0.0) || !s.is_finite() {
            return Err(NotPositiveDefinite { at: i });
        }
        row_i[i] = s.sqrt();
    }
    Ok(())
}

/// Solve `L L^T x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &y[..i]);
        y[i] = (y[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// `max_i |(A x)_i - b_i|` for a symmetric matrix stored lower-triangular
/// (the strict upper triangle of `a` is ignored).
pub fn sym_residual_inf(a: &[f64], n: usize, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..i * n + i];
        let mut s = a[i * n + i] * x[i];
        for j in 0..i {
            s += row[j] * x[j];
            ax[j] += row[j] * x[i];
        }
        ax[i] += s;
    }
    let mut r: f64 = 0.0;
    for i in 0..n {
        r = r.max((ax[i] - b[i]).abs());
    }
    r
}

/// Small dense helpers for the `d x d` covariance blocks.
pub mod small {
    /// Lower Cholesky factor of a small SPD matrix; `None` if not SPD.
    pub fn cholesky(g: &[f64], d: usize) -> Option<Vec<f64>> {
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = g[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * d + i] = s.sqrt();
                } else {
                    l[i * d + j] = s / l[j * d + j];
                }
            }
        }
        Some(l)
    }

    /// Solve `L y = x` (forward substitution) for lower-triangular `L`.
    pub fn forward_solve(l: &[f64], d: usize, x: &[f64], y: &mut [f64]) {
        for i in 0..d {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
    }

    /// Inverse of an SPD matrix via its Cholesky factor.
    pub fn spd_inverse(g: &[f64], d: usize) -> Option<Vec<f64>> {
        let l = cholesky(g, d)?;
        let mut inv = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            forward_solve(&l, d, &e, &mut col);
            // back substitution with L^T
            for i in (0..d).rev() {
                let mut s = col[i];
                for k in i + 1..d {
                    s -= l[k * d + i] * col[k];
                }
                col[i] = s / l[i * d + i];
            }
            for i in 0..d {
                inv[i * d + j] = col[i];
            }
        }
        Some(inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solve_roundtrip() {
        // A = M M^T + I is SPD.
        let n = 17;
        let mut m = vec![0.0; n * n];
        let mut state = 12345u64;
        for v in m.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    s += m[i * n + k] * m[j * n + k];
                }
                a[i * n + j] = s;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut l = a.clone();
        cholesky_in_place(&mut l, n).unwrap();
        let x = cholesky_solve(&l, n, &b);
        assert!(sym_residual_inf(&a, n, &x, &b) < 1e-11);
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2).is_err());
    }

    #[test]
    fn small_inverse() {
        let g = vec![2.0, 0.3, 0.3, 1.0];
        let inv = small::spd_inverse(&g, 2).unwrap();
        // g * inv = I
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += g[i * 2 + k] * inv[k * 2 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }
}
