use super::{dot, LinalgError, Matrix, Result};

/// Relative symmetry tolerance against the largest entry.
const SYMMETRY_TOL: f64 = 1e-9;

/// Solves `a · X = b` for symmetric positive-definite `a` via `L Lᵀ`.
///
/// Only the lower triangle is read once symmetry has been checked. A pivot at
/// or below `n · ε · a_jj` counts as non-positive, so exactly singular inputs
/// fail here instead of producing a meaningless factor.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::NotSquare {
            op: "cholesky_solve",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if b.rows() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "cholesky_solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let scale = a.max_abs();
    let mut max_asymmetry = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            max_asymmetry = max_asymmetry.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if max_asymmetry > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { max_asymmetry });
    }

    let l = factor(a, 0.0)?;
    Ok(solve_factored(&l, b))
}

/// Lower-triangular factor of `a` (row-major, upper part zero). `ridge` is
/// only reported in errors; callers add it to the diagonal beforehand.
pub(crate) fn factor(a: &Matrix, ridge: f64) -> Result<Matrix> {
    let n = a.rows();
    let pivot_floor = n as f64 * f64::EPSILON;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (li, lj) = if i == j {
                let r = l.row(i);
                (r, r)
            } else {
                (l.row(i), l.row(j))
            };
            let s = a.get(i, j) - dot(&li[..j], &lj[..j]);
            let value = if i == j {
                // Negated so a NaN pivot is rejected too.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(s > pivot_floor * a.get(i, i).abs()) {
                    return Err(LinalgError::NotPositiveDefinite {
                        index: i,
                        pivot: s,
                        ridge,
                    });
                }
                s.sqrt()
            } else {
                s / l.get(j, j)
            };
            l.data_mut()[i * n + j] = value;
        }
    }
    Ok(l)
}

pub(crate) fn solve_factored(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let c = b.cols();
    let mut x = b.clone();
    // L y = b
    for i in 0..n {
        let (done, rest) = x.data_mut().split_at_mut(i * c);
        let xi = &mut rest[..c];
        let row = l.row(i);
        for k in 0..i {
            let coeff = row[k];
            if coeff != 0.0 {
                for (v, &d) in xi.iter_mut().zip(&done[k * c..(k + 1) * c]) {
                    *v -= coeff * d;
                }
            }
        }
        xi.iter_mut().for_each(|v| *v /= row[i]);
    }
    // Lᵀ x = y
    for i in (0..n).rev() {
        let (head, solved) = x.data_mut().split_at_mut((i + 1) * c);
        let xi = &mut head[i * c..];
        for k in i + 1..n {
            let coeff = l.get(k, i);
            if coeff != 0.0 {
                let off = (k - i - 1) * c;
                for (v, &d) in xi.iter_mut().zip(&solved[off..off + c]) {
                    *v -= coeff * d;
                }
            }
        }
        let d = l.get(i, i);
        xi.iter_mut().for_each(|v| *v /= d);
    }
    x
}
