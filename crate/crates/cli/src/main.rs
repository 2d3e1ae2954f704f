//! `ts-estimate`: fit two-stage Weibull estimators, evaluate their risk by
//! Monte Carlo and emit the tables and scatter data of the experiments.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 solver failure, 4 I/O
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ts_estimate::estimator::{fit, TsModel};
use ts_estimate::experiment::{run_label, table_to_csv, write_table};
use ts_estimate::{
    crlb, emit_scatter, reproduce_table, run_mse_experiment, ExperimentConfig, Method, PriorKind, SeedSpec, TsError,
    WeibullParams,
};

const THREADS_ENV: &str = "TS_ESTIMATE_THREADS";

#[derive(Parser)]
#[command(
    name = "ts-estimate",
    version,
    about = "Two-stage likelihood-free estimation for the Weibull model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it to the output directory.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "bayes")]
        method: Method,
    },
    /// Monte-Carlo MSE of a fitted model at the evaluation points.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Cramér-Rao bounds at the evaluation points.
    Crlb {
        #[command(flatten)]
        common: Common,
    },
    /// Bayes (uniform), Bayes (reciprocal) and minimax (uniform) risk table.
    #[command(name = "reproduce-table1")]
    ReproduceTable1 {
        #[command(flatten)]
        common: Common,
    },
    /// Estimates for fresh parameter draws, written as CSV.
    Scatter {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "bayes")]
        method: Method,
        /// Use this model instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m_theta: Option<usize>,
    #[arg(long)]
    n_obs: Option<usize>,
    #[arg(long)]
    n_quantiles: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    /// uniform | reciprocal
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    mc_runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, TsError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| with_path(e, path))?;
                serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| TsError::InvalidConfig(e.to_string()))?
            }
            None => ExperimentConfig::default(),
        };
        let t = &mut config.training;
        if let Some(seed) = self.seed {
            t.seed = SeedSpec::new(seed);
        }
        if let Some(v) = self.m_theta {
            t.m_theta = v;
        }
        if let Some(v) = self.n_obs {
            t.n_obs = v;
        }
        if let Some(v) = self.n_quantiles {
            t.n_quantiles = v;
        }
        if let Some(v) = self.ridge {
            t.ridge = v;
        }
        if let Some(v) = self.mc_runs {
            config.mc_runs = v;
        }
        if let Some(v) = &self.out {
            config.output_dir = v.clone();
        }
        if let Some(kind) = self.prior {
            config = config.with_prior(kind)?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &TsError) -> u8 {
    match err {
        TsError::Domain(_) | TsError::InvalidConfig(_) | TsError::Parse(_) => 2,
        TsError::DegenerateInput(_) | TsError::RankDeficient | TsError::BudgetExceeded { .. } => 3,
        TsError::Io(_) => 4,
    }
}

fn configure_threads() -> Result<(), TsError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| TsError::InvalidConfig(format!("{THREADS_ENV} must be a non-negative integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| TsError::InvalidConfig(format!("thread pool: {e}")))
}

fn with_path(err: std::io::Error, path: &Path) -> TsError {
    TsError::Io(std::io::Error::new(err.kind(), format!("{}: {err}", path.display())))
}

fn load_model(path: &Path, config: &ExperimentConfig) -> Result<TsModel, TsError> {
    let model = TsModel::read(path).map_err(|e| match e {
        TsError::Io(io) => with_path(io, path),
        other => other,
    })?;
    if model.n_quantiles != config.training.n_quantiles {
        return Err(TsError::InvalidConfig(format!(
            "model uses {} quantiles but the configuration asks for {}",
            model.n_quantiles, config.training.n_quantiles
        )));
    }
    Ok(model)
}

fn prior_of(config: &ExperimentConfig) -> PriorKind {
    config.training.theta_distribution.kind()
}

fn run(cli: Cli) -> Result<(), TsError> {
    configure_threads()?;
    match cli.command {
        Command::Fit { common, method } => {
            let config = common.resolve()?;
            let model = fit(&config.training, method)?;
            std::fs::create_dir_all(&config.output_dir)?;
            let path = config
                .output_dir
                .join(format!("model_{}.txt", run_label(method, prior_of(&config))));
            model.write(&path)?;
            eprintln!(
                "scale: objective {:.6e}, certificate {:.3e}; shape: objective {:.6e}, certificate {:.3e}",
                model.beta_scale.objective,
                model.beta_scale.certificate,
                model.beta_shape.objective,
                model.beta_shape.certificate
            );
            println!("{}", path.display());
        }
        Command::Evaluate { common, model } => {
            let config = common.resolve()?;
            let model = load_model(&model, &config)?;
            let label = run_label(model.method, prior_of(&config));
            let report = run_mse_experiment(&config, &model, &label)?;
            std::fs::create_dir_all(&config.output_dir)?;
            let reports = [report];
            write_table(&config.output_dir.join(format!("mse_{label}.csv")), &reports)?;
            print!("{}", table_to_csv(&reports));
        }
        Command::Crlb { common } => {
            let config = common.resolve()?;
            println!("eta,gamma,n_obs,crlb_eta,crlb_gamma");
            for &(eta, gamma) in &config.eval_points {
                let (b_eta, b_gamma) = crlb(&WeibullParams::new(eta, gamma)?, config.training.n_obs)?;
                println!("{eta},{gamma},{},{b_eta:.5e},{b_gamma:.5e}", config.training.n_obs);
            }
        }
        Command::ReproduceTable1 { common } => {
            let config = common.resolve()?;
            let reports = reproduce_table(&config)?;
            print!("{}", table_to_csv(&reports));
        }
        Command::Scatter { common, method, model } => {
            let config = common.resolve()?;
            let model = match model {
                Some(path) => load_model(&path, &config)?,
                None => fit(&config.training, method)?,
            };
            let path = emit_scatter(&model, &config, &run_label(model.method, prior_of(&config)))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
