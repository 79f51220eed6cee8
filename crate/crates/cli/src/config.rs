//! Experiment settings: a flat `key = value` file merged under command-line
//! flags, resolved into an [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use voodoo_core::baseline::MlpHyper;
use voodoo_core::linalg::SolverKind;
use voodoo_core::DatasetKind;

use crate::CliError;

pub const DATA_DIR_ENV: &str = "VOODOO_DATA_DIR";
pub const DEFAULT_SEEDS: [u64; 3] = [42, 43, 44];
pub const DEFAULT_ANGLES: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

/// Every key accepted in a config file or as a `--flag`.
pub const KEYS: &[&str] = &[
    "dataset",
    "data-dir",
    "dims",
    "solver",
    "seeds",
    "rcond",
    "ridge",
    "epochs",
    "hidden",
    "lr",
    "batch",
    "bins",
    "angles",
    "out",
    "format",
    "save-model",
    "train-limit",
    "test-limit",
];

/// Raw, unvalidated settings keyed by flag name.
pub type Settings = BTreeMap<String, String>;

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// skipped; underscores in keys are read as dashes. Unknown and repeated keys
/// are errors.
pub fn parse_config(text: &str) -> Result<Settings, CliError> {
    let mut out = Settings::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("line {}: unknown key {key:?}", n + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: repeated key {key:?}", n + 1)));
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(CliError::Config(format!("format must be csv or json, got {s:?}"))),
        }
    }
}

/// Which subcommand is being configured; picks the default `dims`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Scaling,
    Solvers,
    Baseline,
    Robustness,
    Entropy,
}

impl Command {
    pub fn default_dims(self) -> Vec<usize> {
        match self {
            Command::Scaling => vec![500, 1000, 2000, 4000],
            Command::Solvers => vec![4000],
            _ => vec![2000],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub dims: Vec<usize>,
    /// Readout solver with `rcond`/`ridge` applied.
    pub solver: SolverKind,
    pub rcond: Option<f64>,
    pub ridge: Option<f64>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub epochs: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub bins: usize,
    pub angles: Vec<f64>,
    pub save_model: Option<PathBuf>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Drops repeated angles, keeping first occurrences; returns the duplicates.
pub fn dedup_angles(angles: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut kept: Vec<f64> = Vec::new();
    let mut dropped = Vec::new();
    for &a in angles {
        if kept.contains(&a) {
            dropped.push(a);
        } else {
            kept.push(a);
        }
    }
    (kept, dropped)
}

impl ExperimentConfig {
    /// Resolves settings. The data directory comes from `data-dir`, then
    /// `env_data_dir`, then `./data/<dataset>`.
    pub fn resolve(settings: &Settings, env_data_dir: Option<&str>, command: Command) -> Result<Self, CliError> {
        let get = |k: &str| settings.get(k).map(String::as_str);

        let dataset: DatasetKind = match get("dataset") {
            Some(v) => v.parse().map_err(|e: voodoo_core::data::DataError| CliError::Config(e.to_string()))?,
            None => DatasetKind::Mnist,
        };
        let data_dir = match (get("data-dir"), env_data_dir) {
            (Some(d), _) => PathBuf::from(d),
            (None, Some(d)) if !d.is_empty() => PathBuf::from(d),
            _ => Path::new("data").join(dataset.name()),
        };

        let dims = match get("dims") {
            Some(v) => parse_list::<usize>("dims", v)?,
            None => command.default_dims(),
        };
        if dims.is_empty() || dims.contains(&0) {
            return Err(CliError::Config(format!("dims must be a non-empty list of positive integers, got {dims:?}")));
        }
        let seeds = match get("seeds") {
            Some(v) => parse_list::<u64>("seeds", v)?,
            None => DEFAULT_SEEDS.to_vec(),
        };
        if seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }

        let rcond = get("rcond").map(|v| parse_value::<f64>("rcond", v)).transpose()?;
        let ridge = get("ridge").map(|v| parse_value::<f64>("ridge", v)).transpose()?;
        let base: SolverKind = match get("solver") {
            Some(v) => v
                .parse()
                .map_err(|e: voodoo_core::linalg::LinalgError| CliError::Config(e.to_string()))?,
            None => SolverKind::svd(),
        };
        let solver = apply_knobs(base, rcond, ridge);
        solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(r) = rcond {
            SolverKind::SvdPinv { rcond: r }
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(r) = ridge {
            SolverKind::NormalLu { ridge: r }
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }

        let defaults = MlpHyper::default();
        let epochs = get("epochs").map(|v| parse_value("epochs", v)).transpose()?.unwrap_or(defaults.epochs);
        let hidden = get("hidden").map(|v| parse_value("hidden", v)).transpose()?.unwrap_or(defaults.hidden);
        let lr = get("lr").map(|v| parse_value("lr", v)).transpose()?.unwrap_or(defaults.learning_rate);
        let batch = get("batch").map(|v| parse_value("batch", v)).transpose()?.unwrap_or(defaults.batch_size);
        let hyper = MlpHyper {
            hidden,
            epochs,
            learning_rate: lr,
            batch_size: batch,
            seed: seeds[0],
        };
        hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let bins = get("bins")
            .map(|v| parse_value("bins", v))
            .transpose()?
            .unwrap_or(voodoo_core::analysis::DEFAULT_ENTROPY_BINS);
        if bins < 2 {
            return Err(CliError::Config(format!("bins must be >= 2, got {bins}")));
        }

        let angles = match get("angles") {
            Some(v) => parse_list::<f64>("angles", v)?,
            None => DEFAULT_ANGLES.to_vec(),
        };
        if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
            return Err(CliError::Config(format!("angles must be a non-empty list of finite degrees, got {angles:?}")));
        }
        let (angles, dropped) = dedup_angles(&angles);
        if !dropped.is_empty() {
            eprintln!("warning: ignoring repeated angles {dropped:?}");
        }

        let format = get("format").map(str::parse).transpose()?.unwrap_or(Format::Csv);
        let limit = |k: &str| -> Result<Option<usize>, CliError> { get(k).map(|v| parse_value(k, v)).transpose() };

        Ok(Self {
            dataset,
            data_dir,
            dims,
            solver,
            rcond,
            ridge,
            seeds,
            output: get("out").map(PathBuf::from),
            format,
            epochs,
            hidden,
            lr,
            batch,
            bins,
            angles,
            save_model: get("save-model").map(PathBuf::from),
            train_limit: limit("train-limit")?,
            test_limit: limit("test-limit")?,
        })
    }

    /// Precedence, highest first: flags, the data-dir environment variable
    /// (for `data-dir` only), the config file, built-in defaults.
    pub fn load(
        config_file: Option<&Path>,
        flags: &Settings,
        env_data_dir: Option<&str>,
        command: Command,
    ) -> Result<Self, CliError> {
        let mut merged = match config_file {
            Some(path) => read_config(path)?,
            None => Settings::new(),
        };
        if let Some(dir) = env_data_dir.filter(|d| !d.is_empty()) {
            merged.insert("data-dir".into(), dir.to_string());
        }
        merged.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::resolve(&merged, None, command)
    }

    pub fn hyper(&self, seed: u64) -> MlpHyper {
        MlpHyper {
            hidden: self.hidden,
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch,
            seed,
        }
    }

    /// The three solvers compared by `solvers`, each with its own default
    /// knob unless `rcond`/`ridge` was given.
    pub fn solver_suite(&self) -> [SolverKind; 3] {
        [
            apply_knobs(SolverKind::svd(), self.rcond, self.ridge),
            apply_knobs(SolverKind::lu(), self.rcond, self.ridge),
            apply_knobs(SolverKind::cholesky(), self.rcond, self.ridge),
        ]
    }
}

fn apply_knobs(kind: SolverKind, rcond: Option<f64>, ridge: Option<f64>) -> SolverKind {
    match kind {
        SolverKind::SvdPinv { rcond: r } => SolverKind::SvdPinv { rcond: rcond.unwrap_or(r) },
        SolverKind::NormalLu { ridge: r } => SolverKind::NormalLu { ridge: ridge.unwrap_or(r) },
        SolverKind::NormalCholesky { ridge: r } => SolverKind::NormalCholesky { ridge: ridge.unwrap_or(r) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::resolve(&Settings::new(), None, Command::Train).unwrap();
        assert_eq!(cfg.dataset, DatasetKind::Mnist);
        assert_eq!(cfg.data_dir, PathBuf::from("data/mnist"));
        assert_eq!(cfg.dims, vec![2000]);
        assert_eq!(cfg.seeds, vec![42, 43, 44]);
        assert_eq!(cfg.solver, SolverKind::svd());
        assert_eq!(cfg.angles, DEFAULT_ANGLES.to_vec());
        assert_eq!((cfg.epochs, cfg.hidden, cfg.batch, cfg.bins), (10, 64, 64, 256));
        assert_eq!(cfg.format, Format::Csv);
        let cfg = ExperimentConfig::resolve(&Settings::new(), None, Command::Scaling).unwrap();
        assert_eq!(cfg.dims, vec![500, 1000, 2000, 4000]);
    }

    #[test]
    fn parses_file_with_comments() {
        let s = parse_config("# sweep\ndataset = fashion\n\ndims=500, 1000 # two\nsave_model = m.vdnn\n").unwrap();
        assert_eq!(s["dataset"], "fashion");
        assert_eq!(s["dims"], "500, 1000");
        assert_eq!(s["save-model"], "m.vdnn");
    }

    #[test]
    fn file_errors() {
        assert!(matches!(parse_config("dataset fashion"), Err(CliError::Config(m)) if m.contains("line 1")));
        assert!(matches!(parse_config("colour = red"), Err(CliError::Config(m)) if m.contains("unknown key")));
        assert!(matches!(parse_config("bins=2\nbins=3"), Err(CliError::Config(m)) if m.contains("repeated")));
    }

    #[test]
    fn flags_override_file_and_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        std::fs::write(&path, "dataset = fashion\ndims = 500\nbins = 16\ndata-dir = /file/dir\n").unwrap();
        let flags = settings(&[("dims", "1000,2000")]);
        let cfg = ExperimentConfig::load(Some(&path), &flags, Some("/env/dir"), Command::Scaling).unwrap();
        assert_eq!(cfg.dataset, DatasetKind::Fashion);
        assert_eq!(cfg.dims, vec![1000, 2000]);
        assert_eq!(cfg.bins, 16);
        assert_eq!(cfg.data_dir, PathBuf::from("/env/dir"));
        let cfg = ExperimentConfig::load(Some(&path), &Settings::new(), None, Command::Train).unwrap();
        assert_eq!(cfg.data_dir, PathBuf::from("/file/dir"));
        let flags = settings(&[("data-dir", "/flag/dir")]);
        let cfg = ExperimentConfig::load(Some(&path), &flags, Some("/env/dir"), Command::Train).unwrap();
        assert_eq!(cfg.data_dir, PathBuf::from("/flag/dir"));
    }

    #[test]
    fn solver_knobs() {
        let cfg = ExperimentConfig::resolve(&settings(&[("solver", "cholesky"), ("ridge", "1e-3")]), None, Command::Train).unwrap();
        assert_eq!(cfg.solver, SolverKind::NormalCholesky { ridge: 1e-3 });
        let cfg = ExperimentConfig::resolve(&settings(&[("rcond", "1e-8")]), None, Command::Solvers).unwrap();
        let [svd, lu, chol] = cfg.solver_suite();
        assert_eq!(svd, SolverKind::SvdPinv { rcond: 1e-8 });
        assert_eq!(lu, SolverKind::lu());
        assert_eq!(chol, SolverKind::cholesky());
    }

    #[test]
    fn validation_errors() {
        for pairs in [
            vec![("epochs", "0")],
            vec![("dims", "")],
            vec![("dims", "0,500")],
            vec![("seeds", "")],
            vec![("rcond", "0")],
            vec![("ridge", "-1")],
            vec![("bins", "1")],
            vec![("format", "xml")],
            vec![("dataset", "imagenet")],
            vec![("solver", "qr")],
            vec![("dims", "five")],
            vec![("angles", "")],
        ] {
            let r = ExperimentConfig::resolve(&settings(&pairs), None, Command::Train);
            assert!(matches!(r, Err(CliError::Config(_))), "{pairs:?}: {r:?}");
        }
    }

    #[test]
    fn repeated_angles_collapse() {
        let cfg = ExperimentConfig::resolve(&settings(&[("angles", "0,15,0,30,15")]), None, Command::Robustness).unwrap();
        assert_eq!(cfg.angles, vec![0.0, 15.0, 30.0]);
        assert_eq!(dedup_angles(&[1.0, 1.0]).1, vec![1.0]);
    }
}
