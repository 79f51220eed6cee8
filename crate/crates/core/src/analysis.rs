//! Weight entropy, log-linear scaling fits and rotation robustness sweeps.

use std::error::Error as StdError;

use thiserror::Error;

use crate::data::Dataset;
use crate::elm;
use crate::linalg::Matrix;

pub const DEFAULT_ENTROPY_BINS: usize = 256;

/// `angle,accuracy,model_tag`
pub const ROBUSTNESS_CSV_HEADER: &str = "angle,accuracy,model_tag";
/// `d,accuracy,dataset,solver,seed`
pub const SCALING_CSV_HEADER: &str = "d,accuracy,dataset,solver,seed";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input contains NaN or infinity")]
    NonFinite,
    #[error("scaling fit needs at least 3 points with distinct d, got {0}")]
    DegenerateFit(String),
    #[error("feature width {0} is not a square image")]
    NotSquare(usize),
    #[error("prediction failed: {0}")]
    Predict(#[source] Box<dyn StdError + Send + Sync>),
    #[error(transparent)]
    Elm(#[from] elm::ElmError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    pub bins: usize,
    pub entropy_bits: f64,
    pub min_w: f64,
    pub max_w: f64,
}

/// Histogram entropy in bits of all entries of `w` over `bins` equal-width
/// buckets spanning `[min, max]`. A constant input occupies one bucket and
/// has entropy 0.
pub fn shannon_entropy(w: &Matrix, bins: usize) -> Result<EntropyReport> {
    entropy_of(w.as_slice(), bins)
}

pub fn entropy_of(values: &[f64], bins: usize) -> Result<EntropyReport> {
    if bins < 2 {
        return Err(AnalysisError::InvalidArgument(format!("bins must be >= 2, got {bins}")));
    }
    if values.is_empty() {
        return Err(AnalysisError::InvalidArgument("entropy of an empty matrix".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let min_w = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_w = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; bins];
    let span = max_w - min_w;
    if span > 0.0 {
        for &v in values {
            let k = ((v - min_w) / span * bins as f64) as usize;
            counts[k.min(bins - 1)] += 1;
        }
    } else {
        counts[0] = values.len();
    }
    let total = values.len() as f64;
    let entropy_bits = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);
    Ok(EntropyReport {
        bins,
        entropy_bits,
        min_w,
        max_w,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    /// Accuracy gained per unit of `ln d`.
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    /// `(d, accuracy)` sorted by `d`.
    pub points: Vec<(f64, f64)>,
}

impl ScalingFit {
    pub fn predict(&self, d: f64) -> f64 {
        self.alpha * d.ln() + self.beta
    }
}

/// Ordinary least squares of accuracy against `ln d`.
pub fn fit_scaling_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.iter().any(|&(d, a)| !d.is_finite() || !a.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if let Some(&(d, _)) = points.iter().find(|&&(d, _)| d <= 0.0) {
        return Err(AnalysisError::InvalidArgument(format!("d must be positive, got {d}")));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if sorted.len() < 3 {
        return Err(AnalysisError::DegenerateFit(format!("{} points", sorted.len())));
    }
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(AnalysisError::DegenerateFit("repeated d values".into()));
    }
    let n = sorted.len() as f64;
    let xs: Vec<f64> = sorted.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let beta = my - alpha * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - alpha * x - beta).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ScalingFit {
        alpha,
        beta,
        r_squared,
        points: sorted,
    })
}

/// Slope of a reference dataset divided by the slope of another; values
/// above 1 mean the other dataset gains less per unit of `ln d`.
pub fn complexity_index(reference: &ScalingFit, other: &ScalingFit) -> f64 {
    reference.alpha / other.alpha
}

/// Rotates a square image about its centre `((s-1)/2, (s-1)/2)` by `degrees`
/// counter-clockwise as displayed (row 0 at the top). Each output pixel is a
/// bilinear sample of the source; samples outside the frame read as 0.
pub fn rotate_image(img: &Matrix, degrees: f64) -> Matrix {
    assert_eq!(img.rows(), img.cols(), "rotate_image needs a square image");
    let s = img.rows();
    let c = (s as f64 - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let pixel = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= s as isize || col >= s as isize {
            0.0
        } else {
            img.get(r as usize, col as usize)
        }
    };
    Matrix::from_fn(s, s, |r, col| {
        // Output offset (y down, x right); the inverse rotation finds the source.
        let y = r as f64 - c;
        let x = col as f64 - c;
        let sx = cos * x - sin * y + c;
        let sy = sin * x + cos * y + c;
        let (r0, c0) = (sy.floor(), sx.floor());
        let (fy, fx) = (sy - r0, sx - c0);
        let (r0, c0) = (r0 as isize, c0 as isize);
        let v = pixel(r0, c0) * (1.0 - fy) * (1.0 - fx)
            + pixel(r0, c0 + 1) * (1.0 - fy) * fx
            + pixel(r0 + 1, c0) * fy * (1.0 - fx)
            + pixel(r0 + 1, c0 + 1) * fy * fx;
        v.clamp(0.0, 1.0)
    })
}

/// Rotates every row of `x`, each read as a `side × side` image.
pub fn rotate_rows(x: &Matrix, degrees: f64) -> Result<Matrix> {
    let side = square_side(x.cols())?;
    let mut out = Vec::with_capacity(x.rows() * x.cols());
    for i in 0..x.rows() {
        let img = Matrix::from_vec(side, side, x.row(i).to_vec()).expect("square row");
        out.extend(rotate_image(&img, degrees).into_vec());
    }
    Ok(Matrix::from_vec(x.rows(), x.cols(), out).expect("shape preserved"))
}

fn square_side(len: usize) -> Result<usize> {
    let side = (len as f64).sqrt().round() as usize;
    if side == 0 || side * side != len {
        return Err(AnalysisError::NotSquare(len));
    }
    Ok(side)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    pub angles_deg: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub model_tag: String,
}

impl RobustnessCurve {
    pub fn accuracy_at(&self, angle: f64) -> Option<f64> {
        self.angles_deg
            .iter()
            .position(|&a| a == angle)
            .map(|i| self.accuracy[i])
    }

    /// One `angle,accuracy,model_tag` line per sampled angle.
    pub fn csv_rows(&self) -> Vec<String> {
        self.angles_deg
            .iter()
            .zip(&self.accuracy)
            .map(|(a, acc)| format!("{a},{acc},{}", self.model_tag))
            .collect()
    }
}

/// Accuracy of `predict` on `test` with every image rotated by each angle.
pub fn robustness_sweep<F, E>(predict: F, test: &Dataset, angles: &[f64], model_tag: &str) -> Result<RobustnessCurve>
where
    F: Fn(&Matrix) -> std::result::Result<Vec<usize>, E>,
    E: StdError + Send + Sync + 'static,
{
    square_side(test.feature_dim())?;
    let mut accuracy = Vec::with_capacity(angles.len());
    for &angle in angles {
        let rotated = rotate_rows(test.x(), angle)?;
        let preds = predict(&rotated).map_err(|e| AnalysisError::Predict(Box::new(e)))?;
        accuracy.push(elm::accuracy(&preds, test.labels())?);
    }
    Ok(RobustnessCurve {
        angles_deg: angles.to_vec(),
        accuracy,
        model_tag: model_tag.to_string(),
    })
}

/// One `d,accuracy,dataset,solver,seed` line.
pub fn scaling_csv_row(d: usize, accuracy: f64, dataset: &str, solver: &str, seed: u64) -> String {
    format!("{d},{accuracy},{dataset},{solver},{seed}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianRng;
    use proptest::prelude::*;

    const MNIST_CURVE: [(f64, f64); 4] = [(500.0, 89.2), (1000.0, 94.0), (2000.0, 97.15), (4000.0, 98.1)];
    const FASHION_CURVE: [(f64, f64); 4] = [(500.0, 82.67), (1000.0, 84.52), (2000.0, 85.60), (4000.0, 86.63)];
    const CIFAR_CURVE: [(f64, f64); 4] = [(500.0, 64.91), (1000.0, 66.10), (2000.0, 67.95), (4000.0, 68.32)];

    fn row(values: Vec<f64>) -> Matrix {
        Matrix::from_vec(1, values.len(), values).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let uniform = row((0..256).map(f64::from).collect());
        assert!((shannon_entropy(&uniform, 256).unwrap().entropy_bits - 8.0).abs() < 1e-12);
        let constant = Matrix::from_fn(3, 3, |_, _| 0.7);
        let r = shannon_entropy(&constant, 256).unwrap();
        assert_eq!(r.entropy_bits, 0.0);
        assert_eq!((r.min_w, r.max_w), (0.7, 0.7));
        let two = row(vec![-1.0, -1.0, 5.0, 5.0]);
        assert!((shannon_entropy(&two, 256).unwrap().entropy_bits - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_rejects_bad_input() {
        assert!(shannon_entropy(&row(vec![1.0, 2.0]), 1).is_err());
        assert!(shannon_entropy(&Matrix::zeros(0, 0), 4).is_err());
        assert!(matches!(
            shannon_entropy(&row(vec![1.0, f64::NAN]), 4),
            Err(AnalysisError::NonFinite)
        ));
    }

    #[test]
    fn two_bins_cap_at_one_bit() {
        let mut rng = GaussianRng::new(5);
        let w = Matrix::from_fn(20, 20, |_, _| rng.next_gaussian());
        assert!(shannon_entropy(&w, 2).unwrap().entropy_bits <= 1.0);
    }

    #[test]
    fn planted_line_is_recovered() {
        let pts: Vec<(f64, f64)> = [100.0, 300.0, 1000.0, 5000.0]
            .iter()
            .map(|&d: &f64| (d, 0.05 * d.ln() + 0.5))
            .collect();
        let fit = fit_scaling_law(&pts).unwrap();
        assert!((fit.alpha - 0.05).abs() < 1e-10);
        assert!((fit.beta - 0.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reported_curves_fit_with_positive_slope() {
        let mnist = fit_scaling_law(&MNIST_CURVE).unwrap();
        assert!(mnist.alpha > 0.0);
        assert!(mnist.r_squared >= 0.9, "{}", mnist.r_squared);
        let fashion = fit_scaling_law(&FASHION_CURVE).unwrap();
        let cifar = fit_scaling_law(&CIFAR_CURVE).unwrap();
        assert!(fashion.alpha > 0.0 && cifar.alpha > 0.0);
        assert!(mnist.alpha > cifar.alpha);
        assert!(complexity_index(&mnist, &cifar) > 1.0);
    }

    #[test]
    fn fit_is_order_invariant() {
        let mut shuffled = MNIST_CURVE.to_vec();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(fit_scaling_law(&shuffled).unwrap(), fit_scaling_law(&MNIST_CURVE).unwrap());
    }

    #[test]
    fn degenerate_fits_error() {
        assert!(matches!(
            fit_scaling_law(&[(10.0, 0.5), (10.0, 0.6), (10.0, 0.7)]),
            Err(AnalysisError::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_scaling_law(&[(10.0, 0.5), (20.0, 0.6)]),
            Err(AnalysisError::DegenerateFit(_))
        ));
        assert!(fit_scaling_law(&[(10.0, 0.5), (0.0, 0.6), (20.0, 0.7)]).is_err());
    }

    fn random_image(seed: u64) -> Matrix {
        let mut rng = GaussianRng::new(seed);
        Matrix::from_fn(28, 28, |_, _| rng.next_uniform())
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = random_image(1);
        assert_eq!(rotate_image(&img, 0.0), img);
    }

    #[test]
    fn full_turn_matches_zero() {
        let img = random_image(2);
        let diff = rotate_image(&img, 360.0).max_abs_diff(&rotate_image(&img, 0.0)).unwrap();
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn point_rotates_a_quarter_turn() {
        let mut img = Matrix::zeros(28, 28);
        img.data_mut()[19 * 28 + 14] = 1.0;
        for deg in [90.0, -90.0] {
            let out = rotate_image(&img, deg);
            // Centre of mass of the output, compared to the analytic image of
            // the source pixel under the same rotation.
            let mass: f64 = out.as_slice().iter().sum();
            let (mut cr, mut cc) = (0.0, 0.0);
            for r in 0..28 {
                for c in 0..28 {
                    cr += r as f64 * out.get(r, c);
                    cc += c as f64 * out.get(r, c);
                }
            }
            let (cr, cc) = (cr / mass, cc / mass);
            assert!((cr - 14.0).abs() <= 1.0, "{deg}: row {cr}");
            assert!(((cc - 14.0).abs() - 5.0).abs() <= 1.0, "{deg}: col {cc}");
        }
        // Counter-clockwise as displayed: a pixel below centre moves right.
        let ccw = rotate_image(&img, 90.0);
        assert!(ccw.as_slice()[13 * 28 + 19] > 0.5);
    }

    #[test]
    fn rotate_rows_requires_square_width() {
        assert!(matches!(rotate_rows(&Matrix::zeros(2, 10), 5.0), Err(AnalysisError::NotSquare(10))));
    }

    fn blob_image(cr: f64, cc: f64, sigma: f64, amp: f64) -> Matrix {
        Matrix::from_fn(28, 28, |r, c| {
            let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
            amp * (-d2 / (2.0 * sigma * sigma)).exp()
        })
    }

    #[test]
    fn sweep_at_zero_matches_plain_accuracy() {
        let mut rng = GaussianRng::new(9);
        let x = Matrix::from_fn(40, 16, |_, _| rng.next_uniform());
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let data = Dataset::new(x, labels, 3, "toy").unwrap();
        let model = elm::train_dataset(&data, 30, 1, crate::linalg::SolverKind::svd()).unwrap();
        let plain = elm::accuracy(&model.predict(data.x()).unwrap(), data.labels()).unwrap();
        let curve = robustness_sweep(|x| model.predict(x), &data, &[0.0, 15.0], "voodoo").unwrap();
        assert_eq!(curve.accuracy_at(0.0), Some(plain));
        assert_eq!(curve.csv_rows()[0], format!("0,{plain},voodoo"));
        assert!(curve.accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_permutation_invariance(
            values in proptest::collection::vec(-1e3f64..1e3, 1..200),
            bins in 2usize..300,
            seed in any::<u64>(),
        ) {
            let r = entropy_of(&values, bins).unwrap();
            prop_assert!(r.entropy_bits >= 0.0);
            prop_assert!(r.entropy_bits <= (bins as f64).log2() + 1e-12);
            let mut permuted = values.clone();
            GaussianRng::new(seed).shuffle(&mut permuted);
            prop_assert_eq!(entropy_of(&permuted, bins).unwrap(), r);
        }

        #[test]
        fn planted_log_lines_recovered(alpha in -1.0f64..1.0, beta in -1.0f64..1.0, n in 3usize..8) {
            let pts: Vec<(f64, f64)> = (0..n).map(|i| {
                let d = 100.0 * 2f64.powi(i as i32);
                (d, alpha * d.ln() + beta)
            }).collect();
            let fit = fit_scaling_law(&pts).unwrap();
            prop_assert!((fit.alpha - alpha).abs() < 1e-10);
            prop_assert!((fit.beta - beta).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&fit.r_squared));
        }

        #[test]
        fn rotation_identity_and_periodicity(seed in any::<u64>(), deg in -180.0f64..180.0) {
            let img = random_image(seed);
            prop_assert_eq!(rotate_image(&img, 0.0), img.clone());
            let a = rotate_image(&img, deg);
            let b = rotate_image(&img, deg + 360.0);
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
            prop_assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn small_rotations_preserve_mass(
            cr in 10.0f64..18.0, cc in 10.0f64..18.0, sigma in 1.0f64..2.5, amp in 0.1f64..1.0, deg in -15.0f64..15.0,
        ) {
            let img = blob_image(cr, cc, sigma, amp);
            let before: f64 = img.as_slice().iter().sum();
            let after: f64 = rotate_image(&img, deg).as_slice().iter().sum();
            prop_assert!((after - before).abs() <= 0.05 * before, "{} vs {}", after, before);
        }
    }
}
