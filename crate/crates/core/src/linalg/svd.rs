//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of the working matrix are rotated pairwise until they are mutually
//! orthogonal; their norms are then the singular values. The same kernel also
//! drives the pseudoinverse solve of a triangular QR factor (see
//! [`jacobi_min_norm_solve`]), where rotations are mirrored onto the
//! right-hand side instead of being accumulated into `V`.

use super::{dot, gemm, LinalgError, Matrix, Result, StridedMut, StridedRef};

/// Sweep cap before [`LinalgError::NonConvergence`] is reported.
pub const MAX_JACOBI_SWEEPS: usize = 60;

/// Thin SVD `A = U · diag(s) · Vᵀ` with `k = min(m, n)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m × k`, orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// `k × n`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let k = self.s.len();
        let us = Matrix::from_fn(self.u.rows(), k, |i, j| self.u.get(i, j) * self.s[j]);
        us.matmul(&self.vt).expect("factor shapes agree")
    }
}

pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(LinalgError::Empty { op: "svd" });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite { op: "svd" });
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        })
    }
}

fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    // Row-major Aᵀ is column-major A.
    let mut w = a.transpose().into_vec();
    let mut v = Matrix::identity(n).into_vec();
    one_sided_jacobi(&mut w, m, n, Some((&mut v, n)))?;

    let norms: Vec<f64> = w.chunks_exact(m).map(|c| dot(c, c).sqrt()).collect();
    let order = descending_order(&norms);

    let mut u = Matrix::zeros(m, n);
    let mut vt = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        let col = &w[src * m..(src + 1) * m];
        if sigma > 0.0 {
            for (i, &c) in col.iter().enumerate() {
                u.data_mut()[i * n + k] = c / sigma;
            }
        } else {
            missing.push(k);
        }
        vt.row_mut(k).copy_from_slice(&v[src * n..(src + 1) * n]);
    }
    complete_orthonormal_columns(&mut u, &missing);
    Ok(SvdResult { u, s, vt })
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    order
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to all
/// other columns.
fn complete_orthonormal_columns(u: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (m, n) = u.shape();
    let mut filled: Vec<bool> = (0..n).map(|k| !missing.contains(&k)).collect();
    let mut used = vec![false; m];
    for &k in missing {
        // Any unit vector with a large residual will do; failing that, the
        // largest residual among all basis vectors (at least 1/√m).
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for candidate in (0..m).filter(|&i| !used[i]) {
            let mut x = vec![0.0; m];
            x[candidate] = 1.0;
            // Two Gram–Schmidt passes.
            for _ in 0..2 {
                for j in (0..n).filter(|&j| filled[j]) {
                    let proj: f64 = (0..m).map(|i| u.get(i, j) * x[i]).sum();
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi -= proj * u.get(i, j);
                    }
                }
            }
            let norm = dot(&x, &x).sqrt();
            if best.as_ref().is_none_or(|b| norm > b.1) {
                best = Some((candidate, norm, x));
            }
            if norm > 0.5 {
                break;
            }
        }
        let (candidate, norm, x) = best.expect("U has more rows than filled columns");
        used[candidate] = true;
        for (i, xi) in x.iter().enumerate() {
            u.data_mut()[i * n + k] = xi / norm;
        }
        filled[k] = true;
    }
}

/// Orthogonalizes the `ncols` contiguous columns (each of length `len`) of
/// `w` in place. Every rotation is also applied to the matching pair of
/// contiguous vectors in `companion` (vectors of the given length), which
/// accumulates `V` when it starts as the identity. Returns the sweep count.
pub(crate) fn one_sided_jacobi(
    w: &mut [f64],
    len: usize,
    ncols: usize,
    mut companion: Option<(&mut [f64], usize)>,
) -> Result<usize> {
    debug_assert_eq!(w.len(), len * ncols);
    if ncols < 2 {
        return Ok(0);
    }
    let tol = f64::EPSILON * (len as f64).sqrt().max(1.0);
    // Column blocks sized to keep a block pair resident in L2.
    let block = (64 * 1024 / len.max(1)).clamp(4, 256);
    let mut norms = vec![0.0; ncols];
    // Columns at or below ε‖A‖_F are rounding noise. Left in place, every
    // rotation against a large column re-injects O(ε) error into them and the
    // sweep never settles, so they are flushed to exact zero instead.
    let mut floor = 0.0;

    for sweep in 1..=MAX_JACOBI_SWEEPS {
        for (j, c) in w.chunks_exact(len).enumerate() {
            norms[j] = dot(c, c);
        }
        if sweep == 1 {
            let frobenius = norms.iter().sum::<f64>().sqrt();
            floor = (f64::EPSILON * frobenius).powi(2);
        }
        for (j, c) in w.chunks_exact_mut(len).enumerate() {
            if norms[j] <= floor && norms[j] > 0.0 {
                c.fill(0.0);
                norms[j] = 0.0;
            }
        }
        let mut rotated = false;
        for ib in (0..ncols).step_by(block) {
            let iend = (ib + block).min(ncols);
            for jb in (ib..ncols).step_by(block) {
                let jend = (jb + block).min(ncols);
                for p in ib..iend {
                    for q in jb.max(p + 1)..jend {
                        let alpha = norms[p];
                        let beta = norms[q];
                        if alpha == 0.0 || beta == 0.0 {
                            continue;
                        }
                        let (wp, wq) = column_pair(w, len, p, q);
                        let gamma = dot(wp, wq);
                        if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()) {
                            continue;
                        }
                        rotated = true;
                        let zeta = (beta - alpha) / (2.0 * gamma);
                        let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                        let c = 1.0 / (1.0 + t * t).sqrt();
                        let s = c * t;
                        rotate(wp, wq, c, s);
                        if let Some((buf, clen)) = companion.as_mut() {
                            let (vp, vq) = column_pair(buf, *clen, p, q);
                            rotate(vp, vq, c, s);
                        }
                        let new_alpha = alpha - t * gamma;
                        let new_beta = beta + t * gamma;
                        // The update formulas lose accuracy under heavy cancellation.
                        let (wp, wq) = column_pair(w, len, p, q);
                        norms[p] = if new_alpha < 0.05 * alpha {
                            dot(wp, wp)
                        } else {
                            new_alpha
                        };
                        norms[q] = if new_beta < 0.05 * beta {
                            dot(wq, wq)
                        } else {
                            new_beta
                        };
                        if norms[p] <= floor {
                            wp.fill(0.0);
                            norms[p] = 0.0;
                        }
                        if norms[q] <= floor {
                            wq.fill(0.0);
                            norms[q] = 0.0;
                        }
                    }
                }
            }
        }
        if !rotated {
            return Ok(sweep);
        }
    }
    Err(LinalgError::NonConvergence {
        sweeps: MAX_JACOBI_SWEEPS,
    })
}

#[inline]
fn column_pair(buf: &mut [f64], len: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = buf.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Minimum-norm solution of `R X = C` for a square `n × n` matrix `R` given
/// in row-major order, filtering singular values at or below
/// `rcond · σ_max`.
///
/// Jacobi runs on the columns of `Rᵀ` (the rows of `R`), so `Rᵀ V = M` with
/// `M = U' Σ`. Then `R = V Σ U'ᵀ` and `R⁺ C = M Σ⁻² (Vᵀ C)`; `Vᵀ C` is formed
/// by mirroring each rotation onto the rows of `C`, so `V` is never stored.
pub(crate) fn jacobi_min_norm_solve(
    r_row_major: Vec<f64>,
    n: usize,
    rhs: &Matrix,
    rcond: f64,
) -> Result<Matrix> {
    assert_eq!(rhs.rows(), n);
    let c_cols = rhs.cols();
    let mut m = r_row_major;
    let mut c = rhs.as_slice().to_vec();
    one_sided_jacobi(&mut m, n, n, Some((&mut c, c_cols)))?;

    let sq_norms: Vec<f64> = m.chunks_exact(n).map(|col| dot(col, col)).collect();
    let sigma_max = sq_norms.iter().fold(0.0_f64, |a, &b| a.max(b)).sqrt();
    let cutoff = rcond * sigma_max;
    for (j, row) in c.chunks_exact_mut(c_cols).enumerate() {
        let sigma = sq_norms[j].sqrt();
        let scale = if sigma > cutoff && sigma > 0.0 {
            1.0 / sq_norms[j]
        } else {
            0.0
        };
        row.iter_mut().for_each(|v| *v *= scale);
    }
    let mut x = Matrix::zeros(n, c_cols);
    gemm(
        n,
        n,
        c_cols,
        1.0,
        StridedRef::new(&m, 1, n),
        StridedRef::row_major(&c, c_cols),
        0.0,
        StridedMut::row_major(x.data_mut(), c_cols),
    );
    Ok(x)
}
