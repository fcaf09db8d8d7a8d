use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use volforecast::config::RunConfig;
use volforecast::evalharness::{
    evaluate_stage, fit_stage, forecast_stage, ingest_stage, run_experiment, sensitivities_stage, sweep_stage,
};
use volforecast::synth::write_synth_klines;
use volforecast::Error;

/// Daily realized-volatility forecasting pipeline.
#[derive(Debug, Parser)]
#[command(name = "volforecast", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse 5-minute klines into the normalized daily panel.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit every configured model on the training range.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Write out-of-sample forecasts for every fitted model.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Compute per-coin MSE ratios against the baseline.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Input sensitivities of an LSTM ensemble.
    Sensitivities {
        #[command(flatten)]
        common: Common,
        /// LSTM model id, e.g. lstm30ret.
        #[arg(long)]
        model: Option<String>,
    },
    /// Blend RFSV and QRH forecasts over a grid of weights.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weights in [0, 1]; must include 0.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Extra comparison model (empty string to skip).
        #[arg(long)]
        lstm_baseline: Option<String>,
    },
    /// Write synthetic kline files with planted rough volatility and QRH feedback.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of coins.
        #[arg(long)]
        coins: Option<usize>,
        /// Reported days per coin.
        #[arg(long)]
        days: Option<usize>,
        /// Central Hurst exponent.
        #[arg(long = "H", visible_alias = "hurst")]
        h: Option<f64>,
        /// Vol-of-vol of the rough component.
        #[arg(long)]
        nu: Option<f64>,
        /// Weight of the planted QRH variance component.
        #[arg(long)]
        lambda: Option<f64>,
        /// First reported date (YYYY-MM-DD).
        #[arg(long)]
        start: Option<chrono::NaiveDate>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the kline files (defaults to data.klines_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ingest, fit, forecast, evaluate, sensitivities and the λ sweep.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Print the effective configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory for the panel, models, forecasts and reports.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Run every stage single-threaded.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory of per-coin kline CSV files.
    #[arg(long)]
    klines: Option<PathBuf>,
    #[arg(long)]
    train_start: Option<String>,
    #[arg(long)]
    train_end: Option<String>,
    #[arg(long)]
    test_start: Option<String>,
    #[arg(long)]
    test_end: Option<String>,
    /// Bars a day needs to count as complete.
    #[arg(long)]
    min_bars: Option<usize>,
    /// Complete days a coin needs inside the train and test span.
    #[arg(long)]
    min_history: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Comma-separated model ids.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Baseline model id for MSE ratios.
    #[arg(long)]
    baseline: Option<String>,
    /// Base seed for LSTM members.
    #[arg(long)]
    seed: Option<u64>,
    /// LSTM training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// LSTM ensemble members.
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Blend weight for the `blend` model.
    #[arg(long)]
    lambda: Option<f64>,
    /// Coin list for the top-coins LSTM variant.
    #[arg(long)]
    top_coins: Option<PathBuf>,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out_dir {
        cfg.data.out_dir = o.clone();
    }
    if common.sequential {
        cfg.parallel = false;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(k) = &a.klines {
        cfg.data.klines_dir = k.clone();
    }
    let r = &mut cfg.ranges;
    for (dst, src) in [
        (&mut r.train_start, &a.train_start),
        (&mut r.train_end, &a.train_end),
        (&mut r.test_start, &a.test_start),
        (&mut r.test_end, &a.test_end),
    ] {
        if let Some(s) = src {
            *dst = s.clone();
        }
    }
    if let Some(m) = a.min_bars {
        cfg.aggregate.min_bars_per_day = m;
    }
    if let Some(m) = a.min_history {
        cfg.aggregate.min_history = m;
    }
}

fn apply_models(cfg: &mut RunConfig, a: &ModelArgs) {
    if let Some(m) = &a.models {
        cfg.models.list = m.clone();
    }
    if let Some(b) = &a.baseline {
        cfg.models.baseline = b.clone();
    }
    if let Some(s) = a.seed {
        cfg.lstm.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.lstm.epochs = e;
    }
    if let Some(n) = a.ensemble_size {
        cfg.lstm.ensemble_size = n;
    }
    if let Some(l) = a.lambda {
        cfg.qrh.lambda = l;
    }
    if let Some(t) = &a.top_coins {
        cfg.data.top_coins_file = Some(t.clone());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { common, data } => {
            let mut cfg = load(&common)?;
            apply_data(&mut cfg, &data);
            let panel = ingest_stage(&cfg)?;
            println!(
                "ingested {} coins into {}",
                panel.coins.len(),
                cfg.data.out_dir.display()
            );
        }
        Command::Fit { common, models } => {
            let mut cfg = load(&common)?;
            apply_models(&mut cfg, &models);
            let fitted = fit_stage(&cfg)?;
            for (id, m) in &fitted {
                let failed = m.failures().len();
                println!(
                    "fitted {id}{}",
                    if failed > 0 {
                        format!(" ({failed} coins failed)")
                    } else {
                        String::new()
                    }
                );
            }
        }
        Command::Forecast { common, models } => {
            let mut cfg = load(&common)?;
            apply_models(&mut cfg, &models);
            for (id, f) in forecast_stage(&cfg)? {
                let rows: usize = f.iter().map(|c| c.rows.len()).sum();
                println!("{id}: {} coins, {rows} forecasts", f.len());
            }
        }
        Command::Evaluate { common, models } => {
            let mut cfg = load(&common)?;
            apply_models(&mut cfg, &models);
            let report = evaluate_stage(&cfg)?;
            println!("model,coins,median,q1,q3");
            for s in &report.summary {
                println!("{},{},{},{},{}", s.model, s.coins, s.median, s.q1, s.q3);
            }
        }
        Command::Sensitivities { common, model } => {
            let mut cfg = load(&common)?;
            if let Some(m) = model {
                cfg.evaluate.sensitivity_model = m;
            }
            let report = sensitivities_stage(&cfg)?;
            println!("sensitivities for {} coins", report.profiles.len());
        }
        Command::SweepLambda {
            common,
            lambdas,
            lstm_baseline,
        } => {
            let mut cfg = load(&common)?;
            if let Some(l) = lambdas {
                cfg.evaluate.lambdas = l;
            }
            if let Some(b) = lstm_baseline {
                cfg.evaluate.sweep_baseline = b;
            }
            let report = sweep_stage(&cfg)?;
            println!("lambda*: {}", report.lambda_star);
        }
        Command::Synth {
            common,
            coins,
            days,
            h,
            nu,
            lambda,
            start,
            seed,
            out,
        } => {
            let mut cfg = load(&common)?;
            let s = &mut cfg.synth;
            if let Some(v) = coins {
                s.coins = v;
            }
            if let Some(v) = days {
                s.days = v;
            }
            if let Some(v) = h {
                s.h = v;
            }
            if let Some(v) = nu {
                s.nu = v;
            }
            if let Some(v) = lambda {
                s.lambda = v;
            }
            if let Some(v) = start {
                s.start = v;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            let dir = out.unwrap_or_else(|| cfg.data.klines_dir.clone());
            let manifest = write_synth_klines(&cfg.synth, &dir, cfg.execution())?;
            println!("wrote {} synthetic coins to {}", manifest.coins.len(), dir.display());
        }
        Command::Run { common, data, models } => {
            let mut cfg = load(&common)?;
            apply_data(&mut cfg, &data);
            apply_models(&mut cfg, &models);
            cfg.validate()?;
            ingest_stage(&cfg)?;
            let outcome = run_experiment(&cfg)?;
            println!("model,coins,median,q1,q3");
            for s in &outcome.report.summary {
                println!("{},{},{},{},{}", s.model, s.coins, s.median, s.q1, s.q3);
            }
            if let Some(sw) = outcome.sweep {
                println!("lambda*: {}", sw.lambda_star);
            }
        }
        Command::ShowConfig { common } => {
            let cfg = load(&common)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).context("volforecast failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e
                .root_cause()
                .downcast_ref::<Error>()
                .or_else(|| e.downcast_ref::<Error>())
            {
                Some(Error::Config(problems)) => {
                    eprintln!("error: invalid configuration ({} problems)", problems.len());
                    for p in problems {
                        eprintln!("  - {p}");
                    }
                    ExitCode::from(2)
                }
                _ => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
