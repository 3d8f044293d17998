//! Configuration, persistence and orchestration.
//!
//! Stream layout for a run with master seed `s`:
//!
//! * quantum and contextual trials of setting `k`: `root(s) / SETTINGS / k`,
//!   split into [`BATCH_SIZE`](crate::rng::BATCH_SIZE) batches `/ b`;
//! * LRHV protocol draws, shared by all settings: `root(s) / PROTOCOL / b`;
//! * LRHV single-setting runs (stochastic responses): `root(s) / SETTINGS / k / b`;
//! * sweep Monte Carlo: `root(s) / MONTE_CARLO / b`;
//! * purity sub-ensembles of input `i`: `root(s) / SUBSAMPLE / i`.
//!
//! Nothing depends on the number of worker threads.

pub mod analyze;
pub mod config;
pub mod manifest;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use analyze::{analyze_chsh, analyze_factorization, analyze_purity, load_inputs, AnalysisKind, AnalysisOutcome, OutputFormat};
pub use config::{Convention, DrawOrder, ExperimentConfig, SweepMetric};
pub use manifest::{Clock, RunManifest};
pub use sweep::{parse_grid, run_sweep, GridAxis, SweepOutcome};

use crate::contextual::sample_contextual_trial;
use crate::error::{Error, Result};
use crate::lrhv::{block_order, draw_hidden_variables, protocol_series, run_single_setting};
use crate::quantum::{build_singlet, sample_trial};
use crate::rng::{labels, par_batches, Stream};
use crate::series::{Detection, ModelTag, TimeSeries};
use manifest::{run_id_for, sha256_hex, Artifact, CONFIG_FILE, MANIFEST_FILE};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPCE_OUT_DIR";

/// Fallback output directory when neither the CLI, the config nor the
/// environment names one.
pub const DEFAULT_OUT_DIR: &str = "spce-out";

/// Output directory precedence: explicit, then config `output`, then
/// [`OUT_DIR_ENV`], then [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(explicit: Option<&Path>, config: Option<&ExperimentConfig>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.and_then(|c| c.output.clone()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn series_file_name(setting_id: u32) -> String {
    format!("setting_{setting_id}.csv")
}

fn require_seed(config: &ExperimentConfig) -> Result<u64> {
    config
        .seed
        .ok_or_else(|| Error::config("seed", "missing; pass --seed or call ensure_seed"))
}

fn batched(stream: &Stream, n: usize, f: impl Fn(&mut Stream) -> Detection + Sync) -> Vec<Detection> {
    par_batches(stream, n, |rng, len| (0..len).map(|_| f(rng)).collect::<Vec<_>>()).concat()
}

/// Generates one series per configured setting, in setting order.
pub fn generate(config: &ExperimentConfig, run_id: &str) -> Result<Vec<TimeSeries>> {
    let seed = require_seed(config)?;
    let root = Stream::new(seed);
    let pairs = config.pairs()?;
    let n = config.n_trials;
    let settings_stream = root.derive(labels::SETTINGS);
    let wrap = |id: u32, det: Vec<Detection>| TimeSeries::from_detections(run_id, Some(seed), config.model, id, det);
    match config.model {
        ModelTag::Quantum => {
            let state = build_singlet();
            Ok(pairs
                .par_iter()
                .map(|p| {
                    let s = settings_stream.derive(u64::from(p.id));
                    wrap(p.id, batched(&s, n, |rng| Detection::Pair(sample_trial(&state, &p.a, &p.b, rng))))
                })
                .collect())
        }
        ModelTag::Contextual => pairs
            .par_iter()
            .map(|p| {
                let setting = config.contextual_setting(p)?;
                let s = settings_stream.derive(u64::from(p.id));
                Ok(wrap(p.id, batched(&s, n, |rng| sample_contextual_trial(&setting, rng))))
            })
            .collect(),
        ModelTag::Lrhv => {
            let ensemble = config.ensemble()?;
            let response = config.response()?;
            if response.is_deterministic() {
                let mut draws = draw_hidden_variables(&ensemble, n, &root.derive(labels::PROTOCOL));
                if config.lrhv.order == DrawOrder::Blocked {
                    draws = block_order(&draws);
                }
                protocol_series(&draws, &response, &pairs, run_id, Some(seed))
            } else {
                if config.lrhv.order == DrawOrder::Blocked {
                    return Err(Error::config(
                        "lrhv.order",
                        "blocked order records every setting on one draw and needs deterministic responses",
                    ));
                }
                pairs
                    .par_iter()
                    .map(|p| {
                        let s = settings_stream.derive(u64::from(p.id));
                        let outs = par_batches(&s, n, |rng, len| run_single_setting(&ensemble, &response, p, len, rng))
                            .into_iter()
                            .collect::<Result<Vec<_>>>()?
                            .concat();
                        Ok(wrap(p.id, outs.into_iter().map(Detection::Pair).collect()))
                    })
                    .collect()
            }
        }
        ModelTag::External => Err(Error::config("model", "external series are loaded, not simulated")),
    }
}

/// Result of [`simulate`].
#[derive(Clone, Debug)]
pub struct SimulationRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub series: Vec<TimeSeries>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Generates every setting and writes `<out_root>/<run_id>/` containing
/// `config.txt`, one `setting_<id>.csv` per setting and `manifest.txt`.
pub fn simulate(config: &ExperimentConfig, out_root: &Path, clock: Clock) -> Result<SimulationRun> {
    let started = clock.now();
    let seed = require_seed(config)?;
    let config_text = config.canonical();
    let config_hash = sha256_hex(config_text.as_bytes());
    let run_id = run_id_for(&config_hash);
    let series = generate(config, &run_id)?;

    let dir = out_root.join(&run_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(&dir.join(CONFIG_FILE), config_text.as_bytes())?;
    let mut artifacts = Vec::with_capacity(series.len());
    for s in &series {
        let id = s.setting_id().expect("generated series carry one setting id");
        let name = series_file_name(id);
        let bytes = s.to_csv_string().into_bytes();
        write_file(&dir.join(&name), &bytes)?;
        artifacts.push(Artifact {
            path: name,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = RunManifest {
        run_id,
        config_hash,
        seed,
        model: config.model.to_string(),
        started_unix: started,
        finished_unix: clock.now(),
        artifacts,
        version: format!("spce {}", env!("CARGO_PKG_VERSION")),
    };
    write_file(&dir.join(MANIFEST_FILE), manifest.render().as_bytes())?;
    Ok(SimulationRun { dir, manifest, series })
}

/// Loads a run directory after verifying every hash in its manifest.
/// Series carry the manifest's run id, seed and model tag.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<TimeSeries>)> {
    let manifest = RunManifest::load(dir)?;
    manifest.verify(dir)?;
    let model: ModelTag = manifest.model.parse().map_err(Error::Data)?;
    let series = manifest
        .artifacts
        .iter()
        .filter(|a| a.path.ends_with(".csv"))
        .map(|a| {
            let mut s = TimeSeries::load_csv(&dir.join(&a.path))?;
            s.run_id = manifest.run_id.clone();
            s.seed = Some(manifest.seed);
            s.model = model;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, series))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(model: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "model = {model}\nn_trials = 1000\nseed = 3\nsetting.0.a = 0\nsetting.0.b = 45\nsetting.1.a = 90\nsetting.1.b = 45\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn quantum_run_layout_and_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config("quantum", "");
        let run = simulate(&cfg, tmp.path(), Clock::Fixed(0)).unwrap();
        assert_eq!(run.series.len(), 2);
        for s in &run.series {
            assert_eq!(s.len(), 1000);
        }
        let text = fs::read_to_string(run.dir.join("setting_1.csv")).unwrap();
        assert_eq!(text.lines().count(), 1001);
        let (manifest, loaded) = load_run(&run.dir).unwrap();
        assert_eq!(manifest, run.manifest);
        assert_eq!(loaded, run.series);
        let again = ExperimentConfig::load(&run.dir.join(CONFIG_FILE)).unwrap();
        assert_eq!(sha256_hex(again.canonical().as_bytes()), manifest.config_hash);
    }

    #[test]
    fn tampering_is_detected() {
        let tmp = tempfile::tempdir().unwrap();
        let run = simulate(&config("quantum", ""), tmp.path(), Clock::Fixed(0)).unwrap();
        let p = run.dir.join("setting_0.csv");
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("1000,0,+1,+1\n");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_run(&run.dir), Err(Error::Data(_))));
    }

    #[test]
    fn contextual_thinning() {
        let cfg = config("contextual", "contextual.eta = 0.5\n").with_override("n_trials", "20000").unwrap();
        let series = generate(&cfg, "t").unwrap();
        let n = 20000.0;
        let se = (0.25f64 * 0.75 / n).sqrt();
        for s in series {
            let frac = s.detected_count() as f64 / n;
            assert!((frac - 0.25).abs() < 4.0 * se, "{frac}");
        }
    }

    #[test]
    fn lrhv_modes() {
        let det = config("lrhv", "lrhv.ensemble = atoms\nlrhv.atom.0.lambda = 10\nlrhv.atom.1.lambda = 200\nlrhv.order = blocked\n");
        let series = generate(&det, "t").unwrap();
        // blocked order: atom 0 draws first, so the outcome changes exactly once
        let xs: Vec<_> = series[0].outcomes().map(|o| o.x).collect();
        assert_eq!(xs.windows(2).filter(|w| w[0] != w[1]).count(), 1);
        let stoch = config("lrhv", "lrhv.response = stochastic\nlrhv.visibility = 0.5\n");
        assert_eq!(generate(&stoch, "t").unwrap()[1].len(), 1000);
        let bad = config("lrhv", "lrhv.response = stochastic\nlrhv.ensemble = atoms\nlrhv.atom.0.lambda = 1\nlrhv.order = blocked\n");
        assert!(matches!(generate(&bad, "t"), Err(Error::Config { .. })));
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let mut cfg = config("quantum", "");
        cfg.seed = None;
        assert!(matches!(generate(&cfg, "t"), Err(Error::Config { ref key, .. }) if key == "seed"));
        let s = cfg.ensure_seed();
        assert_eq!(cfg.seed, Some(s));
    }
}
