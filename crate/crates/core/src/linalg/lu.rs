use super::{axpy, LinalgError, Matrix, Result};

/// Relative pivot threshold against the largest entry of the input.
const SINGULAR_PIVOT: f64 = 1e-14;

/// Solves `a · X = b` by LU factorization with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(LinalgError::NotSquare {
            op: "lu_solve",
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if b.rows() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "lu_solve",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let threshold = SINGULAR_PIVOT * a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let (pivot_row, pivot_abs) = (k..n)
            .map(|i| (i, lu.get(i, k).abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs == 0.0 || pivot_abs < threshold {
            return Err(LinalgError::Singular {
                index: k,
                pivot: lu.get(pivot_row, k),
            });
        }
        if pivot_row != k {
            swap_rows(&mut lu, k, pivot_row);
            perm.swap(k, pivot_row);
        }
        let data = lu.data_mut();
        let (upper, lower) = data.split_at_mut((k + 1) * n);
        let pivot_tail = &upper[k * n + k..(k + 1) * n];
        let pivot = pivot_tail[0];
        for row in lower.chunks_exact_mut(n) {
            let l = row[k] / pivot;
            row[k] = l;
            if l != 0.0 {
                axpy(-l, &pivot_tail[1..], &mut row[k + 1..]);
            }
        }
    }

    let c = b.cols();
    let mut x = b.select_rows(&perm);
    // Forward substitution with unit-lower L.
    for i in 0..n {
        let (done, rest) = x.data_mut().split_at_mut(i * c);
        let xi = &mut rest[..c];
        for k in 0..i {
            let l = lu.get(i, k);
            if l != 0.0 {
                axpy(-l, &done[k * c..(k + 1) * c], xi);
            }
        }
    }
    // Back substitution with U.
    for i in (0..n).rev() {
        let (head, solved) = x.data_mut().split_at_mut((i + 1) * c);
        let xi = &mut head[i * c..];
        for k in i + 1..n {
            let u = lu.get(i, k);
            if u != 0.0 {
                let off = (k - i - 1) * c;
                axpy(-u, &solved[off..off + c], xi);
            }
        }
        let d = lu.get(i, i);
        xi.iter_mut().for_each(|v| *v /= d);
    }
    Ok(x)
}

fn swap_rows(m: &mut Matrix, i: usize, j: usize) {
    let n = m.cols();
    let (lo, hi) = (i.min(j), i.max(j));
    let (head, tail) = m.data_mut().split_at_mut(hi * n);
    head[lo * n..(lo + 1) * n].swap_with_slice(&mut tail[..n]);
}
