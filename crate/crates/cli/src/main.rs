//! Command-line front end: experiment runs, parameter sweeps, timing studies
//! and model inspection.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdwec::evaluation::{self, TimingConfig};
use sdwec::model::EnsembleModel;
use sdwec::report;
use sdwec::solver::SdwecParams;

use crate::config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "sdwec", version, about = "Sparse weighted ensembles of bagged decision trees")]
#[command(after_help = config::CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON config file
    #[arg(short, long)]
    config: PathBuf,
    /// Set a config key, e.g. `sdwec.lambda=10` or `repetitions=3` (repeatable)
    #[arg(short = 'O', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, replacing `output_dir`
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads, replacing `threads`
    #[arg(short = 'j', long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the repeated-split experiment and write results and diagnostics
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate every parameter point of a grid and write sweep.csv
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON list of parameter objects ({lambda, beta, gamma, epsilon, ...})
        #[arg(short, long)]
        grid: PathBuf,
    },
    /// Time the weight fit over row counts and pool sizes and write timing.csv
    Timing {
        #[command(flatten)]
        common: Common,
        /// Comma-separated row counts [default: all rows]
        #[arg(long)]
        rows: Option<String>,
        /// Comma-separated pool sizes
        #[arg(long, default_value = "100,200,500,1000")]
        pool_sizes: String,
        /// Fits per cell; the fastest is kept
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Preset whose parameters are timed [default: the first preset]
        #[arg(long)]
        preset: Option<String>,
    },
    /// Print a summary of a saved model
    InspectModel {
        /// model.json written by `run` with `save_model`
        path: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common } => cmd_run(&common),
        Command::Sweep { common, grid } => cmd_sweep(&common, &grid),
        Command::Timing {
            common,
            rows,
            pool_sizes,
            trials,
            preset,
        } => cmd_timing(&common, rows.as_deref(), &pool_sizes, trials, preset.as_deref()),
        Command::InspectModel { path } => {
            init_logging(log::LevelFilter::Warn);
            let model = EnsembleModel::load(&path).map_err(|e| Failure::Config(e.to_string()))?;
            print!("{}", model.summary());
            Ok(())
        }
    }
}

fn init_logging(level: log::LevelFilter) {
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Loads the config, applies CLI replacements, and sets up logging and threads.
fn setup(common: &Common) -> Result<CliConfig, Failure> {
    let mut cfg = config::load(&common.config, &common.overrides).map_err(Failure::Config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Failure::Config("threads must be at least 1".into()));
        }
        cfg.threads = Some(t);
    }
    init_logging(cfg.log_level().map_err(Failure::Config)?);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = cfg.threads.unwrap_or_else(|| cfg.repetitions.min(cores)).max(1);
    if rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_err() {
        log::debug!("thread pool already initialised");
    }
    log::debug!("using {threads} threads");
    Ok(cfg)
}

fn load_data(cfg: &CliConfig) -> Result<sdwec::dataset::Dataset, Failure> {
    cfg.experiment()
        .load_dataset()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let cfg = setup(common)?;
    let exp = cfg.experiment();
    let data = load_data(&cfg)?;
    let result = evaluation::run_experiment_on(&data, &exp).map_err(Failure::runtime)?;
    let written = report::write_run(&cfg.output_dir, &result).map_err(Failure::runtime)?;
    if cfg.save_model {
        let path = cfg.output_dir.join("model.json");
        EnsembleModel::train(&data, &exp, 0)
            .and_then(|m| m.save(&path))
            .map_err(Failure::runtime)?;
        log::info!("wrote {}", path.display());
    }
    log::info!("wrote {} files to {}", written.len(), cfg.output_dir.display());

    println!("{} ({} repetitions, l = {})", result.dataset, exp.repetitions, exp.pool_size);
    println!("{:<16} {:>10} {:>10}", "method", "accuracy", "sparsity");
    for (method, acc) in &result.mean_accuracy {
        let sparsity = exp
            .presets
            .iter()
            .find(|p| &evaluation::sdwec_method(&p.name) == method)
            .and_then(|p| result.mean_sparsity.get(&p.name))
            .map_or(String::new(), |s| format!("{s:.4}"));
        println!("{method:<16} {acc:>10.4} {sparsity:>10}");
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<Vec<SdwecParams>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read grid {}: {e}", path.display())))?;
    let grid: Vec<SdwecParams> = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("invalid grid {}: {e}", path.display())))?;
    if grid.is_empty() {
        return Err(Failure::Config(format!("empty grid in {}", path.display())));
    }
    for p in &grid {
        p.validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(grid)
}

fn cmd_sweep(common: &Common, grid_path: &Path) -> Result<(), Failure> {
    let cfg = setup(common)?;
    let grid = read_grid(grid_path)?;
    let data = load_data(&cfg)?;
    let rows = evaluation::sparsity_accuracy_sweep_on(&data, &cfg.experiment(), &grid).map_err(Failure::runtime)?;
    let path = report::write_sweep(&cfg.output_dir, &rows).map_err(Failure::runtime)?;
    log::info!("wrote {}", path.display());
    print!("{}", report::sweep_csv(&rows));
    Ok(())
}

fn cmd_timing(
    common: &Common,
    rows: Option<&str>,
    pool_sizes: &str,
    trials: usize,
    preset: Option<&str>,
) -> Result<(), Failure> {
    let l_values = config::parse_sizes(pool_sizes).map_err(|e| Failure::Config(format!("--pool-sizes: {e}")))?;
    let m_values = rows
        .map(|r| config::parse_sizes(r).map_err(|e| Failure::Config(format!("--rows: {e}"))))
        .transpose()?;
    if trials == 0 {
        return Err(Failure::Config("--trials must be at least 1".into()));
    }
    let cfg = setup(common)?;
    let params = match preset {
        Some(name) => cfg
            .presets
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Failure::Config(format!("no preset named `{name}`")))?
            .params,
        None => cfg
            .presets
            .first()
            .ok_or_else(|| Failure::Config("config has no presets".into()))?
            .params,
    };
    let data = load_data(&cfg)?;
    let m_values = m_values.unwrap_or_else(|| vec![data.n_rows()]);
    if let Some(&m) = m_values.iter().find(|&&m| m > data.n_rows()) {
        return Err(Failure::Config(format!("--rows {m} exceeds the {} rows of {}", data.n_rows(), data.name)));
    }
    let timing = TimingConfig {
        l_values,
        m_values,
        params,
        tree: cfg.tree,
        seed: cfg.base_seed,
        trials,
    };
    let study = evaluation::timing_scaling_study(&data, &timing).map_err(Failure::runtime)?;
    report::write_timing(&cfg.output_dir, &study).map_err(Failure::runtime)?;
    print!("{}", report::timing_csv(&study));
    for f in &study.fits {
        let other = if f.axis == "m" { "l" } else { "m" };
        println!(
            "time vs {} at {other} = {}: slope {:.3e} s per unit, intercept {:.3e} s, R^2 {:.4}",
            f.axis, f.fixed, f.fit.slope, f.fit.intercept, f.fit.r_squared
        );
    }
    Ok(())
}
