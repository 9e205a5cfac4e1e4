use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ulbench::config::{ExperimentConfig, TauSpec};
use ulbench::study::{self, Axis};
use ulbench::{data, lifecycle, output, CliError, CliResult};
use unlearn_core::sampler::DeletionDistribution;
use unlearn_core::MethodKind;

#[derive(Parser)]
#[command(name = "ulbench", version, about = "Machine unlearning experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, normalize it and write binary caches to --out (a directory).
    Ingest(Common),
    /// Train one model and print accuracy, gradient norm and weights as JSON.
    Train(Common),
    /// Retrain after each deletion distribution and fraction; CSV.
    DeletionStudy(Common),
    /// Sweep σ and τ, scoring unlearning against retraining; CSV.
    Tradeoff {
        #[arg(long, value_enum, default_value = "cert-eff")]
        axis: Axis,
        #[command(flatten)]
        common: Common,
    },
    /// Replay a deletion stream through the employ-or-retrain loop; JSON lines.
    Pipeline(Common),
    /// Unlearn one deletion batch and audit it against retraining; JSON.
    Audit(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; without it a default blob dataset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (a directory for `ingest`); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    method: Option<MethodKind>,
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Efficiency grid: integers, `m` or `m/k`.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<TauSpec>>,
    #[arg(long, value_delimiter = ',')]
    distributions: Option<Vec<DeletionDistribution>>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Time the retraining baseline without the method's noise injection.
    #[arg(long)]
    exclude_noise_from_retrain: bool,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::parse("[dataset]\nkind = \"blobs\"\n")?,
        };
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.method {
            cfg.method.name = v;
        }
        if let Some(v) = &self.sigma {
            cfg.method.sigma = v.clone();
        }
        if let Some(v) = &self.tau {
            cfg.method.tau = v.clone();
        }
        if let Some(v) = &self.distributions {
            cfg.deletion.distributions = v.clone();
        }
        if let Some(v) = &self.fractions {
            cfg.deletion.fractions = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lambda {
            cfg.train.lambda = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if self.exclude_noise_from_retrain {
            cfg.retrain_includes_noise = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (common, axis) = match &cli.command {
        Command::Tradeoff { axis, common } => (common, Some(*axis)),
        Command::Ingest(c)
        | Command::Train(c)
        | Command::DeletionStudy(c)
        | Command::Pipeline(c)
        | Command::Audit(c) => (c, None),
    };
    let cfg = common.load()?;
    let loaded = data::load(&cfg.dataset)?;
    let out = cfg.out.as_deref();
    match cli.command {
        Command::Ingest(_) => {
            let dir = out.ok_or_else(|| CliError::Config("ingest needs --out <directory>".into()))?;
            let summary = lifecycle::ingest(&loaded, dir)?;
            output::write_json(&summary, output::sink(None)?)
        }
        Command::Train(_) => output::write_json(&lifecycle::train(&cfg, &loaded)?, output::sink(out)?),
        Command::DeletionStudy(_) => output::write_csv(&study::deletion_study(&cfg, &loaded)?, output::sink(out)?),
        Command::Tradeoff { .. } => {
            let rows = study::tradeoff(&cfg, &loaded, axis.expect("tradeoff has an axis"))?;
            output::write_csv(&rows, output::sink(out)?)
        }
        Command::Pipeline(_) => {
            let (est, events) = lifecycle::run_pipeline(&cfg, &loaded)?;
            eprintln!("estimator: c = {}, theta = {}, safety = {}", est.c, est.theta, est.safety);
            output::write_jsonl(&events, output::sink(out)?)
        }
        Command::Audit(_) => output::write_json(&lifecycle::audit(&cfg, &loaded)?, output::sink(out)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ulbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
