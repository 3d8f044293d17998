//! Parameter sweeps over a configuration template.
//!
//! Each grid point is the template with one value per axis substituted and
//! the template seed kept, so neighbouring points share random numbers.
//! Results land in `<out>/point_<i>.txt` as one record that includes the
//! point's config hash; a rerun reuses every point whose file matches, which
//! makes sweeps resumable. The aggregate table `sweep.csv` lists completed
//! points; failed points are listed in `failures.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::chsh::{chsh_from_series, Normalization};
use crate::contextual::anti_correlation_gap;
use crate::error::{Error, Result};
use crate::lrhv::AnalyzerPair;
use crate::report::{format_record, parse_record};
use crate::rng::{labels, Stream};
use crate::series::ModelTag;
use crate::stats::Estimate;

use super::config::{ExperimentConfig, SweepMetric};
use super::manifest::{sha256_hex, Clock};

pub const AGGREGATE_FILE: &str = "sweep.csv";
pub const FAILURES_FILE: &str = "failures.txt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2,...`.
pub fn parse_grid(spec: &str) -> Result<GridAxis> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::parameter(format!("grid `{spec}` is not of the form key=v1,v2,...")))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(Error::parameter(format!("grid `{spec}` has no key or no values")));
    }
    Ok(GridAxis {
        key: key.trim().to_string(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: usize,
    pub values: Vec<String>,
    pub metric: SweepMetric,
    pub estimate: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(usize, String)>,
    pub reused: usize,
    pub table: PathBuf,
}

fn metric_name(m: SweepMetric) -> &'static str {
    match m {
        SweepMetric::Gap => "gap",
        SweepMetric::Chsh => "chsh",
    }
}

fn points(grid: &[GridAxis]) -> Vec<Vec<String>> {
    grid.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect()
    })
}

/// Evaluates the configured metric for one point.
pub fn evaluate_point(config: &ExperimentConfig, point_dir: &Path, clock: Clock) -> Result<Estimate> {
    let seed = config.seed.ok_or_else(|| Error::config("seed", "missing"))?;
    match config.sweep.metric {
        SweepMetric::Gap => {
            if config.model != ModelTag::Contextual {
                return Err(Error::config("sweep.metric", "the gap metric needs model = contextual"));
            }
            let a = config.pairs()?[0].a;
            let setting = config.contextual_setting(&AnalyzerPair::new(0, a, a))?;
            anti_correlation_gap(&setting, config.sweep.samples, &Stream::new(seed).derive(labels::MONTE_CARLO))
        }
        SweepMetric::Chsh => {
            if config.settings.len() != 4 {
                return Err(Error::config("setting", "the chsh metric needs exactly 4 settings"));
            }
            let run = super::simulate(config, point_dir, clock)?;
            let s = &run.series;
            let r = chsh_from_series([&s[0], &s[1], &s[2], &s[3]], Normalization::DetectedPairs)?;
            Ok(Estimate::new(r.s_value, r.std_error))
        }
    }
}

fn read_point(path: &Path, hash: &str) -> Option<Estimate> {
    let text = fs::read_to_string(path).ok()?;
    let rec = parse_record(text.lines().next()?).ok()?;
    if rec.get("config_hash")? != hash {
        return None;
    }
    Some(Estimate::new(rec.get("estimate")?.parse().ok()?, rec.get("std_error")?.parse().ok()?))
}

/// Runs every grid point not already completed and writes the aggregate table.
pub fn run_sweep(template: &ExperimentConfig, grid: &[GridAxis], out_dir: &Path, clock: Clock) -> Result<SweepOutcome> {
    if grid.is_empty() || grid.iter().any(|a| a.values.is_empty()) {
        return Err(Error::parameter("sweep grid is empty"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metric = template.sweep.metric;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut reused = 0;
    for (i, values) in points(grid).into_iter().enumerate() {
        let result = grid
            .iter()
            .zip(&values)
            .try_fold(template.clone(), |cfg, (axis, v)| cfg.with_override(&axis.key, v))
            .and_then(|cfg| {
                let hash = sha256_hex(cfg.canonical().as_bytes());
                let file = out_dir.join(format!("point_{i}.txt"));
                if let Some(est) = read_point(&file, &hash) {
                    reused += 1;
                    return Ok(est);
                }
                let est = evaluate_point(&cfg, &out_dir.join(format!("point_{i}")), clock)?;
                let mut fields = vec![("point".to_string(), i.to_string())];
                fields.extend(grid.iter().zip(&values).map(|(a, v)| (a.key.clone(), v.clone())));
                fields.extend([
                    ("metric".to_string(), metric_name(metric).to_string()),
                    ("estimate".to_string(), format!("{:e}", est.value)),
                    ("std_error".to_string(), format!("{:e}", est.std_error)),
                    ("config_hash".to_string(), hash),
                ]);
                fs::write(&file, format_record(&fields) + "\n").map_err(|e| Error::io(&file, e))?;
                Ok(est)
            });
        match result {
            Ok(estimate) => rows.push(SweepRow {
                point: i,
                values,
                metric,
                estimate,
            }),
            Err(e) => failures.push((i, e.to_string())),
        }
    }

    let mut csv = String::from("point,");
    for a in grid {
        csv.push_str(&a.key);
        csv.push(',');
    }
    csv.push_str("metric,estimate,std_error\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:e},{:e}\n",
            r.point,
            r.values.join(","),
            metric_name(r.metric),
            r.estimate.value,
            r.estimate.std_error
        ));
    }
    let table = out_dir.join(AGGREGATE_FILE);
    fs::write(&table, csv).map_err(|e| Error::io(&table, e))?;
    let failures_path = out_dir.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        let text: String = failures.iter().map(|(i, e)| format!("point {i}: {e}\n")).collect();
        fs::write(&failures_path, text).map_err(|e| Error::io(&failures_path, e))?;
    }
    Ok(SweepOutcome {
        rows,
        failures,
        reused,
        table,
    })
}
