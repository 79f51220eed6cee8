//! Blocked Householder QR for tall matrices.
//!
//! Reflectors use the `H = I - tau v vᵀ` convention with `v[0] = 1`. They are
//! stored below the diagonal of the factored buffer; panels of `PANEL`
//! columns are aggregated into compact-WY form so that the trailing updates
//! run through GEMM.

use super::{dot, gemm, LinalgError, Matrix, Result, StridedMut, StridedRef};

const PANEL: usize = 48;

/// QR factorization `A = Q R` of an `m × n` matrix with `m >= n`.
pub struct HouseholderQr {
    rows: usize,
    cols: usize,
    /// Row-major `m × n`; `R` on and above the diagonal, reflectors below.
    packed: Vec<f64>,
    tau: Vec<f64>,
}

impl HouseholderQr {
    /// Factors `a` in place.
    pub fn factor(a: Matrix) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(LinalgError::InvalidParameter(format!(
                "QR needs rows >= cols, got {m}x{n}"
            )));
        }
        let mut packed = a.into_vec();
        let mut tau = vec![0.0; n];
        let mut panel = Vec::new();
        let mut v = Vec::new();
        let mut t = Vec::new();
        let mut work = Vec::new();

        for k in (0..n).step_by(PANEL) {
            let b = PANEL.min(n - k);
            let len = m - k;
            // Column-major copy of the panel A[k.., k..k+b].
            panel.clear();
            panel.resize(b * len, 0.0);
            for r in 0..len {
                let row = &packed[(k + r) * n + k..(k + r) * n + k + b];
                for (j, &x) in row.iter().enumerate() {
                    panel[j * len + r] = x;
                }
            }
            factor_panel(&mut panel, len, b, &mut tau[k..k + b]);
            for r in 0..len {
                let row = &mut packed[(k + r) * n + k..(k + r) * n + k + b];
                for (j, x) in row.iter_mut().enumerate() {
                    *x = panel[j * len + r];
                }
            }

            let trailing = n - k - b;
            if trailing > 0 {
                unit_lower(&panel, len, b, &mut v);
                build_t(&v, len, b, &tau[k..k + b], &mut t);
                let a2 = &mut packed[k * n + k + b..];
                apply_block_transposed(&v, &t, len, b, a2, trailing, n, &mut work);
            }
        }
        Ok(Self {
            rows: m,
            cols: n,
            packed,
            tau,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The `n × n` upper-triangular factor.
    pub fn r(&self) -> Matrix {
        let n = self.cols;
        Matrix::from_fn(n, n, |i, j| if j >= i { self.packed[i * n + j] } else { 0.0 })
    }

    /// `y ← Qᵀ y` for an `m × c` right-hand side.
    pub fn apply_qt(&self, y: &mut Matrix) -> Result<()> {
        self.check_rhs(y)?;
        let c = y.cols();
        let mut v = Vec::new();
        let mut t = Vec::new();
        let mut work = Vec::new();
        for k in (0..self.cols).step_by(PANEL) {
            let b = PANEL.min(self.cols - k);
            let len = self.rows - k;
            self.panel_reflectors(k, b, &mut v);
            build_t(&v, len, b, &self.tau[k..k + b], &mut t);
            let y2 = &mut y.data_mut()[k * c..];
            apply_block_transposed(&v, &t, len, b, y2, c, c, &mut work);
        }
        Ok(())
    }

    /// `y ← Q y` for an `m × c` right-hand side.
    pub fn apply_q(&self, y: &mut Matrix) -> Result<()> {
        self.check_rhs(y)?;
        let c = y.cols();
        let mut v = Vec::new();
        let mut t = Vec::new();
        let mut work = Vec::new();
        let starts: Vec<usize> = (0..self.cols).step_by(PANEL).collect();
        for &k in starts.iter().rev() {
            let b = PANEL.min(self.cols - k);
            let len = self.rows - k;
            self.panel_reflectors(k, b, &mut v);
            build_t(&v, len, b, &self.tau[k..k + b], &mut t);
            let y2 = &mut y.data_mut()[k * c..];
            apply_block(&v, &t, len, b, y2, c, c, &mut work);
        }
        Ok(())
    }

    /// Thin `m × n` factor with orthonormal columns.
    pub fn thin_q(&self) -> Matrix {
        let mut q = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.cols {
            q.data_mut()[i * self.cols + i] = 1.0;
        }
        self.apply_q(&mut q).expect("shape is consistent by construction");
        q
    }

    fn check_rhs(&self, y: &Matrix) -> Result<()> {
        if y.rows() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "qr_apply",
                left: (self.rows, self.cols),
                right: y.shape(),
            });
        }
        Ok(())
    }

    /// Explicit unit-lower-trapezoidal `V` (column-major, `len × b`) of a panel.
    fn panel_reflectors(&self, k: usize, b: usize, v: &mut Vec<f64>) {
        let len = self.rows - k;
        let n = self.cols;
        v.clear();
        v.resize(len * b, 0.0);
        for j in 0..b {
            let col = &mut v[j * len..(j + 1) * len];
            col[j] = 1.0;
            for (r, slot) in col.iter_mut().enumerate().skip(j + 1) {
                *slot = self.packed[(k + r) * n + k + j];
            }
        }
    }
}

/// Unblocked Householder factorization of a column-major `len × b` panel.
fn factor_panel(panel: &mut [f64], len: usize, b: usize, tau: &mut [f64]) {
    for j in 0..b {
        let (left, right) = panel.split_at_mut((j + 1) * len);
        let col = &mut left[j * len..];
        tau[j] = make_reflector(&mut col[j..]);
        if tau[j] == 0.0 {
            continue;
        }
        let vj = &col[j..];
        for t in 0..b - j - 1 {
            let other = &mut right[t * len + j..(t + 1) * len];
            // v[0] is implicitly one.
            let w = tau[j] * (other[0] + dot(&vj[1..], &other[1..]));
            other[0] -= w;
            for (o, &vv) in other[1..].iter_mut().zip(&vj[1..]) {
                *o -= w * vv;
            }
        }
    }
}

/// Turns `x` into `(beta, v[1..])` and returns `tau`.
fn make_reflector(x: &mut [f64]) -> f64 {
    if x.len() <= 1 {
        return 0.0;
    }
    let alpha = x[0];
    let tail_sq = dot(&x[1..], &x[1..]);
    if tail_sq == 0.0 {
        return 0.0;
    }
    let norm = (alpha * alpha + tail_sq).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    tau
}

fn unit_lower(panel: &[f64], len: usize, b: usize, v: &mut Vec<f64>) {
    v.clear();
    v.resize(len * b, 0.0);
    for j in 0..b {
        let src = &panel[j * len..(j + 1) * len];
        let dst = &mut v[j * len..(j + 1) * len];
        dst[j] = 1.0;
        dst[j + 1..].copy_from_slice(&src[j + 1..]);
    }
}

/// Upper-triangular `T` (row-major `b × b`) with `H_1 ⋯ H_b = I - V T Vᵀ`.
fn build_t(v: &[f64], len: usize, b: usize, tau: &[f64], t: &mut Vec<f64>) {
    t.clear();
    t.resize(b * b, 0.0);
    let mut z = vec![0.0; b];
    for j in 0..b {
        t[j * b + j] = tau[j];
        if j == 0 || tau[j] == 0.0 {
            continue;
        }
        let vj = &v[j * len..(j + 1) * len];
        for (i, zi) in z.iter_mut().enumerate().take(j) {
            // vj is zero above row j.
            let vi = &v[i * len..(i + 1) * len];
            *zi = dot(&vi[j..], &vj[j..]);
        }
        for i in 0..j {
            let mut acc = 0.0;
            for l in i..j {
                acc += t[i * b + l] * z[l];
            }
            t[i * b + j] = -tau[j] * acc;
        }
    }
}

/// `A ← (I - V T Vᵀ)ᵀ A` for the row-major block `A` (`len × cols`, row stride `ld`).
#[allow(clippy::too_many_arguments)]
fn apply_block_transposed(
    v: &[f64],
    t: &[f64],
    len: usize,
    b: usize,
    a: &mut [f64],
    cols: usize,
    ld: usize,
    work: &mut Vec<f64>,
) {
    apply_block_impl(v, t, len, b, a, cols, ld, work, true);
}

/// `A ← (I - V T Vᵀ) A`.
#[allow(clippy::too_many_arguments)]
fn apply_block(
    v: &[f64],
    t: &[f64],
    len: usize,
    b: usize,
    a: &mut [f64],
    cols: usize,
    ld: usize,
    work: &mut Vec<f64>,
) {
    apply_block_impl(v, t, len, b, a, cols, ld, work, false);
}

#[allow(clippy::too_many_arguments)]
fn apply_block_impl(
    v: &[f64],
    t: &[f64],
    len: usize,
    b: usize,
    a: &mut [f64],
    cols: usize,
    ld: usize,
    work: &mut Vec<f64>,
    transposed: bool,
) {
    work.clear();
    work.resize(b * cols, 0.0);
    // W = Vᵀ A   (b × cols)
    gemm(
        b,
        len,
        cols,
        1.0,
        StridedRef::new(v, len, 1),
        StridedRef::new(a, ld, 1),
        0.0,
        StridedMut::row_major(work, cols),
    );
    // W ← Tᵀ W or T W, in place; T is upper triangular.
    let mut scratch = vec![0.0; cols];
    if transposed {
        for i in (0..b).rev() {
            scratch.iter_mut().for_each(|s| *s = 0.0);
            for l in 0..=i {
                let coeff = t[l * b + i];
                if coeff != 0.0 {
                    let row = &work[l * cols..(l + 1) * cols];
                    for (s, &w) in scratch.iter_mut().zip(row) {
                        *s += coeff * w;
                    }
                }
            }
            work[i * cols..(i + 1) * cols].copy_from_slice(&scratch);
        }
    } else {
        for i in 0..b {
            scratch.iter_mut().for_each(|s| *s = 0.0);
            for l in i..b {
                let coeff = t[i * b + l];
                if coeff != 0.0 {
                    let row = &work[l * cols..(l + 1) * cols];
                    for (s, &w) in scratch.iter_mut().zip(row) {
                        *s += coeff * w;
                    }
                }
            }
            work[i * cols..(i + 1) * cols].copy_from_slice(&scratch);
        }
    }
    // A ← A - V W
    gemm(
        len,
        b,
        cols,
        -1.0,
        StridedRef::new(v, 1, len),
        StridedRef::row_major(work, cols),
        1.0,
        StridedMut::new(a, ld, 1),
    );
}
