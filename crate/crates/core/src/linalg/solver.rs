//! Closed-form least-squares readouts.

use std::fmt;
use std::str::FromStr;

use super::cholesky::{factor as cholesky_factor, solve_factored};
use super::qr::HouseholderQr;
use super::svd::{jacobi_min_norm_solve, svd};
use super::{lu_solve, matmul, matmul_tn, LinalgError, Matrix, Result};

/// Singular values at or below `rcond · σ_max` are dropped by the SVD route.
pub const DEFAULT_RCOND: f64 = 1e-12;
pub const DEFAULT_CHOLESKY_RIDGE: f64 = 1e-6;
/// Ridge escalations (×10 each) tried after a failed Cholesky factorization.
pub const MAX_RIDGE_RETRIES: usize = 3;

/// How the readout `W₂` is computed from `H` and `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// `W₂ = H⁺ Y` through a singular value decomposition.
    SvdPinv { rcond: f64 },
    /// `(HᵀH + ridge·I) W₂ = HᵀY` by LU with partial pivoting.
    NormalLu { ridge: f64 },
    /// `(HᵀH + ridge·I) W₂ = HᵀY` by Cholesky.
    NormalCholesky { ridge: f64 },
}

impl Default for SolverKind {
    fn default() -> Self {
        Self::svd()
    }
}

impl SolverKind {
    pub const TAGS: [&'static str; 3] = ["svd", "lu", "cholesky"];

    pub fn svd() -> Self {
        Self::SvdPinv {
            rcond: DEFAULT_RCOND,
        }
    }

    pub fn lu() -> Self {
        Self::NormalLu { ridge: 0.0 }
    }

    pub fn cholesky() -> Self {
        Self::NormalCholesky {
            ridge: DEFAULT_CHOLESKY_RIDGE,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::SvdPinv { .. } => "svd",
            Self::NormalLu { .. } => "lu",
            Self::NormalCholesky { .. } => "cholesky",
        }
    }

    /// `rcond` for the SVD route, `ridge` otherwise.
    pub fn param(&self) -> f64 {
        match *self {
            Self::SvdPinv { rcond } => rcond,
            Self::NormalLu { ridge } | Self::NormalCholesky { ridge } => ridge,
        }
    }

    /// Same variant with its knob replaced.
    pub fn with_param(self, value: f64) -> Self {
        match self {
            Self::SvdPinv { .. } => Self::SvdPinv { rcond: value },
            Self::NormalLu { .. } => Self::NormalLu { ridge: value },
            Self::NormalCholesky { .. } => Self::NormalCholesky { ridge: value },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::SvdPinv { rcond } if !(rcond > 0.0 && rcond.is_finite()) => Err(
                LinalgError::InvalidParameter(format!("rcond must be positive, got {rcond}")),
            ),
            Self::NormalLu { ridge } | Self::NormalCholesky { ridge }
                if !(ridge >= 0.0 && ridge.is_finite()) =>
            {
                Err(LinalgError::InvalidParameter(format!(
                    "ridge must be non-negative, got {ridge}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SolverKind {
    type Err = LinalgError;

    /// Parses a tag into the variant with its default knob.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svd" | "pinv" => Ok(Self::svd()),
            "lu" => Ok(Self::lu()),
            "cholesky" | "chol" => Ok(Self::cholesky()),
            other => Err(LinalgError::InvalidParameter(format!(
                "unknown solver `{other}` (expected one of svd, lu, cholesky)"
            ))),
        }
    }
}

/// Readout plus the solver configuration that actually produced it.
#[derive(Debug, Clone)]
pub struct ReadoutSolution {
    pub w2: Matrix,
    /// Differs from the requested kind only when Cholesky escalated its ridge.
    pub solver_used: SolverKind,
    pub ridge_escalations: usize,
}

/// Moore–Penrose pseudoinverse via SVD with relative cutoff `rcond`.
pub fn pinv(a: &Matrix, rcond: f64) -> Result<Matrix> {
    SolverKind::SvdPinv { rcond }.validate()?;
    let (m, n) = a.shape();
    if a.is_empty() {
        return Ok(Matrix::zeros(n, m));
    }
    let dec = svd(a)?;
    let cutoff = rcond * dec.s.first().copied().unwrap_or(0.0);
    let k = dec.s.len();
    // V · diag(1/s) · Uᵀ
    let v_scaled = Matrix::from_fn(n, k, |i, j| {
        let s = dec.s[j];
        if s > cutoff && s > 0.0 {
            dec.vt.get(j, i) / s
        } else {
            0.0
        }
    });
    matmul(&v_scaled, &dec.u.transpose())
}

/// Solves for the readout `W₂` (`d × C`) given `h` (`N × d`) and `y` (`N × C`).
pub fn solve_readout(h: &Matrix, y: &Matrix, kind: SolverKind) -> Result<Matrix> {
    let sol = match kind {
        SolverKind::SvdPinv { rcond } => {
            check_rows(h, y)?;
            kind.validate()?;
            ReadoutSolution {
                w2: svd_readout(h.clone(), y, rcond)?,
                solver_used: kind,
                ridge_escalations: 0,
            }
        }
        _ => normal_readout(h, y, kind)?,
    };
    Ok(sol.w2)
}

/// Like [`solve_readout`] but consumes `h`, which the SVD route factors in
/// place; large hidden matrices are then never duplicated.
pub fn solve_readout_owned(h: Matrix, y: &Matrix, kind: SolverKind) -> Result<ReadoutSolution> {
    match kind {
        SolverKind::SvdPinv { rcond } => {
            check_rows(&h, y)?;
            kind.validate()?;
            Ok(ReadoutSolution {
                w2: svd_readout(h, y, rcond)?,
                solver_used: kind,
                ridge_escalations: 0,
            })
        }
        _ => normal_readout(&h, y, kind),
    }
}

fn check_rows(h: &Matrix, y: &Matrix) -> Result<()> {
    if h.rows() != y.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "solve_readout",
            left: h.shape(),
            right: y.shape(),
        });
    }
    Ok(())
}

/// `H⁺ Y`. Tall inputs go through `H = Q R` first, since `(QR)⁺ = R⁺ Qᵀ`
/// and the singular values of `R` are those of `H`.
fn svd_readout(h: Matrix, y: &Matrix, rcond: f64) -> Result<Matrix> {
    let (m, n) = h.shape();
    if h.is_empty() {
        return Ok(Matrix::zeros(n, y.cols()));
    }
    if !h.is_finite() {
        return Err(LinalgError::NonFinite { op: "svd" });
    }
    if m < n {
        return matmul(&pinv(&h, rcond)?, y);
    }
    let qr = HouseholderQr::factor(h)?;
    let mut qty = y.clone();
    qr.apply_qt(&mut qty)?;
    let c = qty.head_rows(n);
    let r = qr.r();
    drop(qr);
    jacobi_min_norm_solve(r.into_vec(), n, &c, rcond)
}

fn normal_readout(h: &Matrix, y: &Matrix, kind: SolverKind) -> Result<ReadoutSolution> {
    check_rows(h, y)?;
    kind.validate()?;
    let gram = matmul_tn(h, h)?;
    let rhs = matmul_tn(h, y)?;
    match kind {
        SolverKind::NormalLu { ridge } => Ok(ReadoutSolution {
            w2: lu_solve(&gram.add_diagonal(ridge)?, &rhs)?,
            solver_used: kind,
            ridge_escalations: 0,
        }),
        SolverKind::NormalCholesky { ridge } => {
            let mut ridge = ridge;
            let mut escalations = 0;
            loop {
                match cholesky_factor(&gram.add_diagonal(ridge)?, ridge) {
                    Ok(l) => {
                        return Ok(ReadoutSolution {
                            w2: solve_factored(&l, &rhs),
                            solver_used: SolverKind::NormalCholesky { ridge },
                            ridge_escalations: escalations,
                        })
                    }
                    Err(err @ LinalgError::NotPositiveDefinite { .. }) => {
                        if escalations == MAX_RIDGE_RETRIES {
                            return Err(err);
                        }
                        escalations += 1;
                        ridge = if ridge == 0.0 {
                            DEFAULT_CHOLESKY_RIDGE
                        } else {
                            ridge * 10.0
                        };
                    }
                    Err(other) => return Err(other),
                }
            }
        }
        SolverKind::SvdPinv { .. } => unreachable!("handled by the SVD route"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianRng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = GaussianRng::new(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.next_gaussian())
    }

    fn all_kinds_exact() -> [SolverKind; 3] {
        [
            SolverKind::svd(),
            SolverKind::NormalLu { ridge: 0.0 },
            SolverKind::NormalCholesky { ridge: 0.0 },
        ]
    }

    #[test]
    fn pinv_identity_and_zero() {
        assert!(pinv(&Matrix::identity(3), 1e-12)
            .unwrap()
            .max_abs_diff(&Matrix::identity(3))
            .unwrap()
            < 1e-15);
        assert_eq!(pinv(&Matrix::zeros(2, 4), 1e-12).unwrap(), Matrix::zeros(4, 2));
    }

    #[test]
    fn pinv_of_tall_matrix_satisfies_aaa() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let p = pinv(&a, 1e-12).unwrap();
        assert_eq!(p.shape(), (2, 3));
        let back = a.matmul(&p).unwrap().matmul(&a).unwrap();
        assert!(back.max_abs_diff(&a).unwrap() < 1e-12);
    }

    #[test]
    fn rcond_must_be_positive() {
        assert!(pinv(&Matrix::identity(2), 0.0).is_err());
        assert!(SolverKind::NormalLu { ridge: -1.0 }.validate().is_err());
        assert!(SolverKind::SvdPinv { rcond: f64::NAN }.validate().is_err());
    }

    #[test]
    fn identity_hidden_returns_targets() {
        let y = random(4, 2, 1);
        for kind in all_kinds_exact() {
            let w = solve_readout(&Matrix::identity(4), &y, kind).unwrap();
            assert!(w.max_abs_diff(&y).unwrap() < 1e-14, "{kind}");
        }
    }

    #[test]
    fn planted_readout_recovered() {
        let h = random(50, 10, 2);
        let w_true = random(10, 3, 3);
        let y = h.matmul(&w_true).unwrap();
        for kind in all_kinds_exact() {
            let w = solve_readout(&h, &y, kind).unwrap();
            assert!(w.max_abs_diff(&w_true).unwrap() < 1e-6, "{kind}");
        }
    }

    #[test]
    fn svd_route_matches_explicit_pinv() {
        // Tall enough for several QR panels.
        let h = random(400, 120, 4);
        let y = random(400, 4, 5);
        let fast = solve_readout(&h, &y, SolverKind::svd()).unwrap();
        let slow = pinv(&h, DEFAULT_RCOND).unwrap().matmul(&y).unwrap();
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-10);
    }

    #[test]
    fn svd_route_drops_null_space() {
        // Column 3 duplicates column 0; the minimum-norm answer splits weight evenly.
        let base = random(30, 3, 6);
        let h = Matrix::from_fn(30, 4, |i, j| base.get(i, if j == 3 { 0 } else { j }));
        let y = Matrix::from_fn(30, 1, |i, _| base.get(i, 0));
        let w = solve_readout(&h, &y, SolverKind::svd()).unwrap();
        assert!((w.get(0, 0) - 0.5).abs() < 1e-10);
        assert!((w.get(3, 0) - 0.5).abs() < 1e-10);
        assert!(w.get(1, 0).abs() < 1e-10 && w.get(2, 0).abs() < 1e-10);
    }

    #[test]
    fn wide_hidden_uses_direct_pinv() {
        let h = random(6, 20, 7);
        let y = random(6, 2, 8);
        let w = solve_readout(&h, &y, SolverKind::svd()).unwrap();
        assert!(h.matmul(&w).unwrap().max_abs_diff(&y).unwrap() < 1e-10);
    }

    #[test]
    fn cholesky_escalates_ridge_on_duplicate_columns() {
        let base = random(40, 5, 9);
        let h = Matrix::from_fn(40, 6, |i, j| base.get(i, j.min(4)));
        let y = random(40, 2, 10);
        let sol = solve_readout_owned(h, &y, SolverKind::NormalCholesky { ridge: 0.0 }).unwrap();
        assert!(sol.ridge_escalations >= 1);
        assert!(matches!(sol.solver_used, SolverKind::NormalCholesky { ridge } if ridge > 0.0));
        assert!(sol.w2.is_finite());
    }

    #[test]
    fn cholesky_zero_gram_succeeds_after_first_escalation() {
        let sol = solve_readout_owned(
            Matrix::zeros(5, 3),
            &Matrix::zeros(5, 1),
            SolverKind::NormalCholesky { ridge: 0.0 },
        )
        .unwrap();
        assert_eq!(sol.ridge_escalations, 1);
        assert_eq!(sol.solver_used, SolverKind::NormalCholesky { ridge: DEFAULT_CHOLESKY_RIDGE });
    }

    #[test]
    fn cholesky_gives_up_after_retries() {
        // Duplicate columns of magnitude 1e10: every tried ridge (up to 1e-3)
        // is far below rounding noise in the Gram matrix.
        let base = random(20, 2, 11).scale(1e10);
        let h = Matrix::from_fn(20, 3, |i, j| base.get(i, j.min(1)));
        let err = solve_readout(&h, &random(20, 1, 12), SolverKind::NormalCholesky { ridge: 0.0 })
            .unwrap_err();
        assert!(matches!(err, LinalgError::NotPositiveDefinite { ridge, .. } if (ridge - 1e-4).abs() < 1e-18), "{err:?}");
    }

    #[test]
    fn row_mismatch_rejected() {
        for kind in all_kinds_exact() {
            assert!(matches!(
                solve_readout(&Matrix::zeros(4, 2), &Matrix::zeros(3, 1), kind),
                Err(LinalgError::DimensionMismatch { .. })
            ));
        }
    }

    #[test]
    fn tags_round_trip() {
        for tag in SolverKind::TAGS {
            let kind: SolverKind = tag.parse().unwrap();
            assert_eq!(kind.tag(), tag);
        }
        assert!("qr".parse::<SolverKind>().is_err());
    }
}
