//! Command-line front end for the `spce` library.
//!
//! Exit status: 0 clean, 1 error, 2 usage error, 3 rejection verdict
//! (CHSH bound violated, series not pure-consistent, kernel does not factorize).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spce::chsh::Normalization;
use spce::harness::{
    analyze_chsh, analyze_factorization, analyze_purity, load_inputs, parse_grid, resolve_out_dir, run_sweep,
    simulate, series_file_name, Clock, ExperimentConfig, OutputFormat,
};
use spce::lrhv::ResponseTable;
use spce::purity::PurityConfig;

const EXIT_ERROR: u8 = 1;
const EXIT_REJECTED: u8 = 3;

#[derive(Parser)]
#[command(name = "spce", version, about = "Simulate and analyze spin-polarization correlation experiments")]
struct Cli {
    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config `output`, then $SPCE_OUT_DIR, then ./spce-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => OutputFormat::Text,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Chsh,
    Purity,
    Factorization,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one time-series file per setting plus a run manifest
    Simulate { config: PathBuf },
    /// Analyze recorded series (chsh, purity) or a response table (factorization)
    Analyze {
        #[arg(value_enum)]
        kind: Kind,
        /// Run directories or CSV files; chsh takes four series in term order
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Count no-detections as zero instead of conditioning on coincidences
        #[arg(long)]
        raw_rate: bool,
        /// Family-wise level of the purity suite
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        subsamples: usize,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
    },
    /// Run simulate and analyze over a parameter grid
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`; repeat for a product grid
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
    },
    /// Parse a config file and print its canonical form
    ValidateConfig { config: PathBuf },
}

fn load_config(path: &Path, seed: Option<u64>) -> spce::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> spce::Result<u8> {
    let format: OutputFormat = cli.format.into();
    match cli.command {
        Command::Simulate { config } => {
            let mut cfg = load_config(&config, cli.seed)?;
            cfg.ensure_seed();
            let out = resolve_out_dir(cli.out.as_deref(), Some(&cfg));
            let run = simulate(&cfg, &out, Clock::from_env())?;
            match format {
                OutputFormat::Text => {
                    println!("run {} (seed {}) -> {}", run.manifest.run_id, run.manifest.seed, run.dir.display());
                    for s in &run.series {
                        let id = s.setting_id().unwrap_or_default();
                        println!("  {}: {} trials, {} detected", series_file_name(id), s.len(), s.detected_count());
                    }
                }
                OutputFormat::Csv => {
                    println!("run_id,setting_id,path,trials,detected");
                    for s in &run.series {
                        let id = s.setting_id().unwrap_or_default();
                        let path = run.dir.join(series_file_name(id));
                        println!("{},{id},{},{},{}", run.manifest.run_id, path.display(), s.len(), s.detected_count());
                    }
                }
            }
            Ok(0)
        }
        Command::Analyze {
            kind,
            inputs,
            raw_rate,
            alpha,
            subsamples,
            fraction,
        } => {
            let outcome = match kind {
                Kind::Chsh => {
                    let norm = if raw_rate { Normalization::RawRate } else { Normalization::DetectedPairs };
                    analyze_chsh(&load_inputs(&inputs)?, norm)?
                }
                Kind::Purity => {
                    let cfg = PurityConfig { alpha, subsamples, fraction };
                    analyze_purity(&load_inputs(&inputs)?, &cfg, cli.seed.unwrap_or(0))?
                }
                Kind::Factorization => {
                    let [path] = inputs.as_slice() else {
                        return Err(spce::Error::Data("factorization takes one response table".into()));
                    };
                    analyze_factorization(&ResponseTable::load(path)?, &path.display().to_string())?
                }
            };
            let out = resolve_out_dir(cli.out.as_deref(), None);
            let report = outcome.write(&out, format)?;
            print!("{}", outcome.render(format));
            eprintln!("report written to {}", report.display());
            Ok(if outcome.rejected { EXIT_REJECTED } else { 0 })
        }
        Command::Sweep { config, grid } => {
            let mut cfg = load_config(&config, cli.seed)?;
            cfg.ensure_seed();
            let axes = grid.iter().map(|g| parse_grid(g)).collect::<spce::Result<Vec<_>>>()?;
            let out = resolve_out_dir(cli.out.as_deref(), Some(&cfg));
            let result = run_sweep(&cfg, &axes, &out, Clock::from_env())?;
            match format {
                OutputFormat::Csv => print!("{}", std::fs::read_to_string(&result.table).unwrap_or_default()),
                OutputFormat::Text => {
                    for r in &result.rows {
                        println!("point {:>3}  {:<24} {} = {}", r.point, r.values.join(", "), cli_metric(&cfg), r.estimate);
                    }
                    println!("{} points ({} reused) -> {}", result.rows.len(), result.reused, result.table.display());
                }
            }
            for (i, e) in &result.failures {
                eprintln!("point {i} failed: {e}");
            }
            Ok(if result.failures.is_empty() { 0 } else { EXIT_ERROR })
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(&config, cli.seed)?;
            match format {
                OutputFormat::Text => print!("{}", cfg.canonical()),
                OutputFormat::Csv => {
                    println!("key,value");
                    for line in cfg.canonical().lines() {
                        if let Some((k, v)) = line.split_once(" = ") {
                            println!("{k},\"{v}\"");
                        }
                    }
                }
            }
            Ok(0)
        }
    }
}

fn cli_metric(cfg: &ExperimentConfig) -> &'static str {
    match cfg.sweep.metric {
        spce::harness::SweepMetric::Gap => "gap",
        spce::harness::SweepMetric::Chsh => "S",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
