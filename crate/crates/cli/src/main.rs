use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use voodoo_cli::config::{self, Command, ExperimentConfig, Format, Settings, DATA_DIR_ENV};
use voodoo_cli::{commands, CliError};

#[derive(Parser)]
#[command(name = "voodoo", version, about = "Random-projection classifiers with closed-form readouts")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train one analytic model (first of --dims and --seeds) and evaluate it.
    Train(ExperimentArgs),
    /// Accuracy across --dims for every seed, with a log-linear fit.
    Scaling(ExperimentArgs),
    /// Compare the SVD, LU and Cholesky readouts at one width.
    Solvers(ExperimentArgs),
    /// Train the SGD baseline MLP once per seed.
    Baseline(ExperimentArgs),
    /// Test accuracy of both model families under rotation.
    Robustness(ExperimentArgs),
    /// Readout-weight entropy of saved model files.
    Entropy(EntropyArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist, fashion or cifar10.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the dataset files [env: VOODOO_DATA_DIR; default: ./data/<dataset>].
    #[arg(long)]
    data_dir: Option<String>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    dims: Option<String>,
    /// svd, lu or cholesky.
    #[arg(long)]
    solver: Option<String>,
    /// Comma-separated RNG seeds [default: 42,43,44].
    #[arg(long)]
    seeds: Option<String>,
    /// Relative singular-value cutoff for the SVD readout.
    #[arg(long)]
    rcond: Option<String>,
    /// Diagonal jitter for the normal-equation readouts.
    #[arg(long)]
    ridge: Option<String>,
    /// SGD epochs.
    #[arg(long)]
    epochs: Option<String>,
    /// SGD hidden width.
    #[arg(long)]
    hidden: Option<String>,
    /// SGD learning rate.
    #[arg(long)]
    lr: Option<String>,
    /// SGD minibatch size.
    #[arg(long)]
    batch: Option<String>,
    /// Histogram bins for readout entropy.
    #[arg(long)]
    bins: Option<String>,
    /// Comma-separated rotation angles in degrees.
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    /// Results file to append to.
    #[arg(long)]
    out: Option<String>,
    /// csv or json (JSON lines).
    #[arg(long)]
    format: Option<String>,
    /// Write the trained model here.
    #[arg(long)]
    save_model: Option<String>,
    /// Use only the first N training samples.
    #[arg(long)]
    train_limit: Option<String>,
    /// Use only the first N test samples.
    #[arg(long)]
    test_limit: Option<String>,
}

impl ExperimentArgs {
    fn settings(&self) -> Settings {
        let pairs = [
            ("dataset", &self.dataset),
            ("data-dir", &self.data_dir),
            ("dims", &self.dims),
            ("solver", &self.solver),
            ("seeds", &self.seeds),
            ("rcond", &self.rcond),
            ("ridge", &self.ridge),
            ("epochs", &self.epochs),
            ("hidden", &self.hidden),
            ("lr", &self.lr),
            ("batch", &self.batch),
            ("bins", &self.bins),
            ("angles", &self.angles),
            ("out", &self.out),
            ("format", &self.format),
            ("save-model", &self.save_model),
            ("train-limit", &self.train_limit),
            ("test-limit", &self.test_limit),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn resolve(&self, command: Command) -> Result<ExperimentConfig, CliError> {
        let env = std::env::var(DATA_DIR_ENV).ok();
        ExperimentConfig::load(self.config.as_deref(), &self.settings(), env.as_deref(), command)
    }
}

#[derive(Args)]
struct EntropyArgs {
    /// One or more model files; give one analytic and one SGD model to compare.
    #[arg(required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Sub::Train(a) => commands::cmd_train(&a.resolve(Command::Train)?).map(drop),
        Sub::Scaling(a) => {
            let outcome = commands::cmd_scaling(&a.resolve(Command::Scaling)?)?;
            outcome.fit.map(drop).map_err(CliError::Numeric)
        }
        Sub::Solvers(a) => commands::cmd_solvers(&a.resolve(Command::Solvers)?).map(drop),
        Sub::Baseline(a) => commands::cmd_baseline(&a.resolve(Command::Baseline)?).map(drop),
        Sub::Robustness(a) => commands::cmd_robustness(&a.resolve(Command::Robustness)?).map(drop),
        Sub::Entropy(a) => {
            let mut settings = match &a.config {
                Some(path) => config::read_config(path)?,
                None => Settings::new(),
            };
            for (k, v) in [("bins", &a.bins), ("out", &a.out), ("format", &a.format)] {
                if let Some(v) = v {
                    settings.insert(k.to_string(), v.clone());
                }
            }
            let cfg = ExperimentConfig::resolve(&settings, None, Command::Entropy)?;
            let format: Format = cfg.format;
            commands::cmd_entropy(&a.models, cfg.bins, cfg.output.as_deref(), format).map(drop)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
