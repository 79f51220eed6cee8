//! One function per subcommand. Each loads its data, runs, prints its rows
//! to stdout and appends them to `--out` when given.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use voodoo_core::analysis::{self, EntropyReport, RobustnessCurve, ScalingFit};
use voodoo_core::baseline::{self, MlpHyper, MlpModel};
use voodoo_core::data::Split;
use voodoo_core::elm::{self, VoodooModel};
use voodoo_core::linalg::SolverKind;
use voodoo_core::persist::{self, LoadedModel};
use voodoo_core::{Dataset, DatasetKind};

use crate::config::{ExperimentConfig, Format};
use crate::record::{self, EntropyRow, RobustnessRow, Row, RunRecord};
use crate::CliError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads both splits from the configured directory, truncated to the
/// configured limits.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let dir = &cfg.data_dir;
    if !dir.is_dir() {
        return Err(CliError::Io(format!(
            "data directory {} does not exist (expected {} files for {})",
            dir.display(),
            cfg.dataset.files(Split::Train).join(", "),
            cfg.dataset
        )));
    }
    let mut train = cfg.dataset.load(dir, Split::Train)?;
    let mut test = cfg.dataset.load(dir, Split::Test)?;
    if let Some(n) = cfg.train_limit {
        train = train.head(n);
    }
    if let Some(n) = cfg.test_limit {
        test = test.head(n);
    }
    eprintln!(
        "loaded {}: {} train / {} test samples of width {}",
        cfg.dataset,
        train.len(),
        test.len(),
        train.feature_dim()
    );
    Ok(Splits { train, test })
}

fn emit<R: Row>(rows: &[R], output: Option<&Path>, format: Format) -> Result<()> {
    print!("{}", record::render(rows, format, true));
    if let Some(path) = output {
        record::append(path, rows, format)?;
    }
    Ok(())
}

fn readout_entropy(w2: &voodoo_core::Matrix, bins: usize) -> Result<f64> {
    Ok(analysis::shannon_entropy(w2, bins)?.entropy_bits)
}

/// Trains and evaluates one analytic model.
pub fn evaluate_voodoo(
    splits: &Splits,
    d: usize,
    seed: u64,
    kind: SolverKind,
    bins: usize,
) -> Result<(RunRecord, VoodooModel)> {
    let model = elm::train_dataset(&splits.train, d, seed, kind)?;
    if model.solver_used() != kind {
        eprintln!("note: {kind} readout needed ridge {} to factor", model.solver_used().param());
    }
    let start = Instant::now();
    let preds = model.predict(splits.test.x())?;
    let infer_seconds = start.elapsed().as_secs_f64();
    let record = RunRecord {
        dataset: splits.train.name().to_string(),
        d,
        solver: kind.tag().to_string(),
        seed,
        train_seconds: model.train_seconds(),
        solve_seconds: model.solve_seconds(),
        infer_seconds,
        accuracy: elm::accuracy(&preds, splits.test.labels())?,
        entropy_bits: readout_entropy(model.w2(), bins)?,
        timestamp: record::unix_now(),
    };
    eprintln!(
        "{} d={} {} seed={}: accuracy {:.4} (train {:.2}s, solve {:.2}s)",
        record.dataset, d, record.solver, seed, record.accuracy, record.train_seconds, record.solve_seconds
    );
    Ok((record, model))
}

/// Trains and evaluates one SGD baseline.
pub fn evaluate_baseline(splits: &Splits, hyper: MlpHyper, bins: usize) -> Result<(RunRecord, MlpModel)> {
    let model = baseline::train_sgd(&splits.train, hyper)?;
    let start = Instant::now();
    let preds = model.predict(splits.test.x())?;
    let infer_seconds = start.elapsed().as_secs_f64();
    let record = RunRecord {
        dataset: splits.train.name().to_string(),
        d: hyper.hidden,
        solver: "sgd".to_string(),
        seed: hyper.seed,
        train_seconds: model.train_seconds(),
        solve_seconds: model.train_seconds(),
        infer_seconds,
        accuracy: elm::accuracy(&preds, splits.test.labels())?,
        entropy_bits: readout_entropy(&model.params().w2, bins)?,
        timestamp: record::unix_now(),
    };
    eprintln!(
        "{} sgd h={} seed={}: accuracy {:.4} after {} epochs (final loss {:.4}, {:.2}s)",
        record.dataset,
        hyper.hidden,
        hyper.seed,
        record.accuracy,
        hyper.epochs,
        model.epoch_losses().last().copied().unwrap_or(f64::NAN),
        record.train_seconds
    );
    Ok((record, model))
}

fn save(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    persist::save_bytes(path, bytes)?;
    eprintln!("saved model to {}", path.display());
    Ok(())
}

/// One analytic model from the first entry of `dims` and `seeds`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunRecord> {
    train_with(cfg, &load_splits(cfg)?)
}

pub fn train_with(cfg: &ExperimentConfig, splits: &Splits) -> Result<RunRecord> {
    let (record, model) = evaluate_voodoo(splits, cfg.dims[0], cfg.seeds[0], cfg.solver, cfg.bins)?;
    if let Some(path) = &cfg.save_model {
        save(path, &persist::encode_voodoo(&model))?;
    }
    emit(std::slice::from_ref(&record), cfg.output.as_deref(), cfg.format)?;
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct ScalingOutcome {
    pub records: Vec<RunRecord>,
    /// `(d, mean accuracy over seeds)` in `dims` order.
    pub means: Vec<(usize, f64)>,
    /// The log-linear fit, or why it could not be made.
    pub fit: std::result::Result<ScalingFit, String>,
}

/// One run per `(d, seed)`, then a fit of the per-`d` mean accuracy
/// against `ln d`. Records are written even when the fit fails.
pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<ScalingOutcome> {
    scaling_with(cfg, &load_splits(cfg)?)
}

pub fn scaling_with(cfg: &ExperimentConfig, splits: &Splits) -> Result<ScalingOutcome> {
    let mut records = Vec::new();
    for &d in &cfg.dims {
        for &seed in &cfg.seeds {
            records.push(evaluate_voodoo(splits, d, seed, cfg.solver, cfg.bins)?.0);
        }
    }
    emit(&records, cfg.output.as_deref(), cfg.format)?;
    let means = mean_accuracy_by_d(&records, &cfg.dims);
    let points: Vec<(f64, f64)> = means.iter().map(|&(d, a)| (d as f64, a)).collect();
    let fit = analysis::fit_scaling_law(&points).map_err(|e| e.to_string());
    match &fit {
        Ok(f) => eprintln!(
            "fit: accuracy = {:.5} ln(d) + {:.5}, R^2 = {:.4}",
            f.alpha, f.beta, f.r_squared
        ),
        Err(e) => eprintln!("fit failed: {e}"),
    }
    Ok(ScalingOutcome { records, means, fit })
}

pub fn mean_accuracy_by_d(records: &[RunRecord], dims: &[usize]) -> Vec<(usize, f64)> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.d).or_insert((0.0, 0));
        e.0 += r.accuracy;
        e.1 += 1;
    }
    let mut seen = Vec::new();
    dims.iter()
        .filter(|d| {
            let fresh = !seen.contains(*d);
            seen.push(**d);
            fresh
        })
        .filter_map(|d| sums.get(d).map(|&(s, n)| (*d, s / n as f64)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SolverComparison {
    /// SVD, LU, Cholesky in that order.
    pub records: Vec<RunRecord>,
    pub max_accuracy_gap: f64,
    /// SVD solve time strictly exceeds both normal-equation solvers.
    pub svd_slowest: bool,
}

/// The three readout solvers on the same data, width and seed.
pub fn cmd_solvers(cfg: &ExperimentConfig) -> Result<SolverComparison> {
    solvers_with(cfg, &load_splits(cfg)?)
}

pub fn solvers_with(cfg: &ExperimentConfig, splits: &Splits) -> Result<SolverComparison> {
    let (d, seed) = (cfg.dims[0], cfg.seeds[0]);
    let mut records = Vec::new();
    for kind in cfg.solver_suite() {
        records.push(evaluate_voodoo(splits, d, seed, kind, cfg.bins)?.0);
    }
    emit(&records, cfg.output.as_deref(), cfg.format)?;
    let comparison = compare_solvers(records);
    eprintln!(
        "max pairwise accuracy gap {:.4}; SVD slowest: {}",
        comparison.max_accuracy_gap, comparison.svd_slowest
    );
    Ok(comparison)
}

pub fn compare_solvers(records: Vec<RunRecord>) -> SolverComparison {
    let accs: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
    let svd_slowest = records.len() == 3
        && records[0].solve_seconds > records[1].solve_seconds
        && records[0].solve_seconds > records[2].solve_seconds;
    SolverComparison {
        max_accuracy_gap: max - min,
        svd_slowest,
        records,
    }
}

/// One SGD baseline per seed; `--save-model` keeps the first.
pub fn cmd_baseline(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    baseline_with(cfg, &load_splits(cfg)?)
}

pub fn baseline_with(cfg: &ExperimentConfig, splits: &Splits) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let (record, model) = evaluate_baseline(splits, cfg.hyper(seed), cfg.bins)?;
        if i == 0 {
            if let Some(path) = &cfg.save_model {
                save(path, &persist::encode_mlp(&model))?;
            }
        }
        records.push(record);
    }
    emit(&records, cfg.output.as_deref(), cfg.format)?;
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct RobustnessOutcome {
    pub voodoo: RobustnessCurve,
    pub sgd: RobustnessCurve,
}

impl RobustnessOutcome {
    /// `voodoo − sgd` accuracy at `angle`, if it was sampled.
    pub fn gap_at(&self, angle: f64) -> Option<f64> {
        Some(self.voodoo.accuracy_at(angle)? - self.sgd.accuracy_at(angle)?)
    }
}

/// Trains one model of each family and sweeps test-set rotations.
pub fn cmd_robustness(cfg: &ExperimentConfig) -> Result<RobustnessOutcome> {
    if cfg.dataset == DatasetKind::Cifar10 {
        return Err(CliError::Config("robustness needs square grayscale images (mnist or fashion)".into()));
    }
    robustness_with(cfg, &load_splits(cfg)?)
}

pub fn robustness_with(cfg: &ExperimentConfig, splits: &Splits) -> Result<RobustnessOutcome> {
    let seed = cfg.seeds[0];
    let (_, voodoo) = evaluate_voodoo(splits, cfg.dims[0], seed, cfg.solver, cfg.bins)?;
    let (_, sgd) = evaluate_baseline(splits, cfg.hyper(seed), cfg.bins)?;
    let voodoo = analysis::robustness_sweep(|x| voodoo.predict(x), &splits.test, &cfg.angles, "voodoo")?;
    let sgd = analysis::robustness_sweep(|x| sgd.predict(x), &splits.test, &cfg.angles, "sgd")?;
    let rows: Vec<RobustnessRow> = [&voodoo, &sgd]
        .iter()
        .flat_map(|c| {
            c.angles_deg.iter().zip(&c.accuracy).map(|(&angle, &accuracy)| RobustnessRow {
                angle,
                accuracy,
                model_tag: c.model_tag.clone(),
            })
        })
        .collect();
    emit(&rows, cfg.output.as_deref(), cfg.format)?;
    let outcome = RobustnessOutcome { voodoo, sgd };
    if let Some(gap) = outcome.gap_at(15.0) {
        eprintln!("voodoo - sgd at 15 degrees: {:+.4}", gap);
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct EntropyOutcome {
    pub reports: Vec<(PathBuf, &'static str, EntropyReport)>,
}

/// Readout-weight entropy of each model file. With exactly one analytic and
/// one SGD model, the analytic readout must have strictly higher entropy.
pub fn cmd_entropy(models: &[PathBuf], bins: usize, output: Option<&Path>, format: Format) -> Result<EntropyOutcome> {
    if models.is_empty() {
        return Err(CliError::Config("entropy needs at least one model file".into()));
    }
    if bins < 2 {
        return Err(CliError::Config(format!("bins must be >= 2, got {bins}")));
    }
    let mut reports = Vec::new();
    for path in models {
        let model = persist::load_model(path)?;
        let report = analysis::shannon_entropy(model.readout(), bins)?;
        reports.push((path.clone(), model.family(), report));
        if let LoadedModel::Voodoo(m) = &model {
            eprintln!("{}: analytic readout {} x {}", path.display(), m.w2().rows(), m.w2().cols());
        }
    }
    let rows: Vec<EntropyRow> = reports
        .iter()
        .map(|(p, family, r)| EntropyRow {
            model: p.display().to_string(),
            family: family.to_string(),
            bins: r.bins,
            entropy_bits: r.entropy_bits,
            min_w: r.min_w,
            max_w: r.max_w,
        })
        .collect();
    emit(&rows, output, format)?;

    let of = |family: &str| reports.iter().filter(|r| r.1 == family).map(|r| r.2.entropy_bits).collect::<Vec<_>>();
    if let ([voodoo], [sgd]) = (of("voodoo").as_slice(), of("sgd").as_slice()) {
        if voodoo <= sgd {
            return Err(CliError::Check(format!(
                "analytic readout entropy {voodoo:.4} bits does not exceed SGD readout entropy {sgd:.4} bits"
            )));
        }
        eprintln!("entropy ordering holds: {voodoo:.4} > {sgd:.4} bits");
    }
    Ok(EntropyOutcome { reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(d: usize, seed: u64, acc: f64, solve: f64) -> RunRecord {
        RunRecord {
            dataset: "t".into(),
            d,
            solver: "svd".into(),
            seed,
            train_seconds: solve,
            solve_seconds: solve,
            infer_seconds: 0.0,
            accuracy: acc,
            entropy_bits: 0.0,
            timestamp: 0,
        }
    }

    #[test]
    fn means_follow_dims_order() {
        let records = vec![rec(1000, 1, 0.8, 0.0), rec(500, 1, 0.5, 0.0), rec(1000, 2, 0.9, 0.0), rec(500, 2, 0.7, 0.0)];
        let means = mean_accuracy_by_d(&records, &[1000, 500, 1000]);
        assert_eq!(means.len(), 2);
        assert_eq!(means[0].0, 1000);
        assert!((means[0].1 - 0.85).abs() < 1e-12);
        assert!((means[1].1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn solver_comparison() {
        let c = compare_solvers(vec![rec(1, 1, 0.97, 9.0), rec(1, 1, 0.968, 2.0), rec(1, 1, 0.971, 3.0)]);
        assert!((c.max_accuracy_gap - 0.003).abs() < 1e-12);
        assert!(c.svd_slowest);
        let c = compare_solvers(vec![rec(1, 1, 0.97, 2.5), rec(1, 1, 0.97, 2.0), rec(1, 1, 0.97, 3.0)]);
        assert!(!c.svd_slowest);
    }
}
