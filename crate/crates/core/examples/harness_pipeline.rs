//! Configuration file to verified run directory to analysis reports.

use spce::chsh::Normalization;
use spce::harness::{analyze_chsh, analyze_purity, load_run, simulate, Clock, ExperimentConfig, OutputFormat};

const CONFIG: &str = "\
# four CHSH settings, contextual smearing with lossy counters
model = contextual
n_trials = 20000
seed = 14
setting.0.a = 0
setting.0.b = 45
setting.1.a = 0
setting.1.b = 135
setting.2.a = 90
setting.2.b = 45
setting.3.a = 90
setting.3.b = 135
contextual.epsilon = 0.05
contextual.eta = 0.8
";

pub fn run_example() -> spce::Result<()> {
    let config = ExperimentConfig::parse(CONFIG)?;
    let out = tempfile::tempdir().map_err(|e| spce::Error::Io {
        path: std::env::temp_dir(),
        source: e,
    })?;

    let run = simulate(&config, out.path(), Clock::Fixed(0))?;
    println!("{} written to {}", run.manifest.run_id, run.dir.display());

    // reload through the manifest so every file is hash-checked
    let (manifest, series) = load_run(&run.dir)?;
    println!("{} series verified against config hash {}", series.len(), &manifest.config_hash[..16]);

    let chsh = analyze_chsh(&series, Normalization::DetectedPairs)?;
    println!("{}", chsh.render(OutputFormat::Text));
    let raw = analyze_chsh(&series, Normalization::RawRate)?;
    println!("raw-rate normalization:\n{}", raw.render(OutputFormat::Text));

    let purity = analyze_purity(&series[..1], &config.purity, manifest.seed)?;
    print!("{}", purity.render(OutputFormat::Text));
    let report = purity.write(out.path(), OutputFormat::Csv)?;
    println!("\nreport: {}", report.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
