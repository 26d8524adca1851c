//! Experiment runner binary.
//!
//! Exit codes: 0 success, 2 configuration problems (unreadable or invalid
//! config, unknown preset, bad output path), 3 numerical failures inside a
//! run. Clap's own usage errors also exit with 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lsmc_cli::config::ExperimentConfig;
use lsmc_cli::{emit, presets, runner};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Least-squares Monte Carlo experiment runner.
#[derive(Parser)]
#[command(name = "lsmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in preset: table1_d2, table2_swing or table3_gas.
    Preset {
        /// Preset name.
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Training path count.
    #[arg(long)]
    train_paths: Option<usize>,
    /// Test path count for the lower bound.
    #[arg(long)]
    test_paths: Option<usize>,
    /// Training seed; the test seed becomes seed + 1.
    #[arg(long)]
    seed: Option<u64>,
    /// Depth override for every run whose method takes a depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Worker thread cap; 0 keeps the default pool size.
    #[arg(long)]
    workers: Option<usize>,
    /// Output base path; `.csv` and `.json` are appended.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit cost counters (true) or zeros (false).
    #[arg(long)]
    counters: Option<bool>,
    /// Clamp regressed continuations to the band from the cash-flow bound.
    #[arg(long)]
    truncate: Option<bool>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(m) = self.train_paths {
            cfg.sampling.train_paths = m;
        }
        if let Some(m) = self.test_paths {
            cfg.sampling.test_paths = m;
        }
        if let Some(seed) = self.seed {
            cfg.sampling.seed_train = seed;
            cfg.sampling.seed_test = seed + 1;
        }
        if let Some(depth) = self.depth {
            for run in &mut cfg.runs {
                if run.method.takes_depth() {
                    run.depth = Some(depth);
                    run.adaptive_theta = None;
                }
            }
        }
        if let Some(w) = self.workers {
            cfg.options.workers = w;
        }
        if let Some(c) = self.counters {
            cfg.options.counters = c;
        }
        if let Some(t) = self.truncate {
            cfg.options.truncate = t;
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, fallback_name, out_flag) = match &cli.command {
        Command::Run { config, overrides } => {
            let cfg = match ExperimentConfig::from_file(config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let name = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "results".into());
            (cfg, name, overrides)
        }
        Command::Preset { name, overrides } => {
            let Some(text) = presets::preset(name) else {
                eprintln!(
                    "error: unknown preset {name:?}; available: {}",
                    presets::PRESET_NAMES.join(", ")
                );
                return ExitCode::from(EXIT_CONFIG);
            };
            let cfg = match ExperimentConfig::from_toml(text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: preset {name}: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            (cfg, name.clone(), overrides)
        }
    };

    let mut cfg = cfg;
    out_flag.apply(&mut cfg);
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let records = match runner::run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    };

    let base = output_base(&cfg, &out_flag.out, &fallback_name);
    match emit::write_outputs(&cfg, &records, &base) {
        Ok((csv, json)) => {
            for r in &records {
                println!(
                    "{} {} I={}: lower bound {} +- {}",
                    r.method,
                    r.basis,
                    r.depth,
                    emit::sig(r.lower_bound, 6),
                    emit::sig(r.half_width, 3)
                );
            }
            println!("wrote {} and {}", csv.display(), json.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

/// Output stem resolution: `--out` wins, then `[output]`, then the
/// `LSMC_OUT_DIR` environment variable, then the working directory.
fn output_base(cfg: &ExperimentConfig, out_flag: &Option<PathBuf>, fallback: &str) -> PathBuf {
    if let Some(path) = out_flag {
        return path.clone();
    }
    let name = cfg.output.name.clone().unwrap_or_else(|| fallback.into());
    let dir = cfg
        .output
        .dir
        .clone()
        .or_else(|| std::env::var("LSMC_OUT_DIR").ok())
        .unwrap_or_default();
    Path::new(&dir).join(name)
}
