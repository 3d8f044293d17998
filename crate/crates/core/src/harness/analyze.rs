//! Analyses over recorded series and response tables.

use std::fs;
use std::path::{Path, PathBuf};

use crate::chsh::{chsh_from_series, Normalization};
use crate::error::{Error, Result};
use crate::lrhv::{check_factorization, AnalyzerPair, HiddenVariable, JointKernel, ResponseTable};
use crate::purity::{purity_suite, PurityConfig};
use crate::quantum::Direction;
use crate::report::{append_record, format_record};
use crate::rng::{labels, Stream};
use crate::series::TimeSeries;

use super::manifest::MANIFEST_FILE;

/// File that every analysis appends its machine-readable records to.
pub const RECORDS_FILE: &str = "analysis_records.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnalysisKind {
    Chsh,
    Purity,
    Factorization,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Chsh => "chsh",
            AnalysisKind::Purity => "purity",
            AnalysisKind::Factorization => "factorization",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
}

/// Rendered result of one analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOutcome {
    pub kind: AnalysisKind,
    pub text: String,
    pub csv: String,
    pub records: Vec<String>,
    /// True when the analysis reached a rejection verdict (violation of a
    /// product-form constraint, non-pure series, non-factorizing kernel).
    pub rejected: bool,
}

impl AnalysisOutcome {
    /// Writes `<kind>_report.txt` (or `.csv`) into `out_dir` and appends the
    /// records to [`RECORDS_FILE`]. Returns the report path.
    pub fn write(&self, out_dir: &Path, format: OutputFormat) -> Result<PathBuf> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let (ext, body) = match format {
            OutputFormat::Text => ("txt", &self.text),
            OutputFormat::Csv => ("csv", &self.csv),
        };
        let path = out_dir.join(format!("{}_report.{ext}", self.kind.name()));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        let records = out_dir.join(RECORDS_FILE);
        for r in &self.records {
            append_record(&records, r)?;
        }
        Ok(path)
    }

    pub fn render(&self, format: OutputFormat) -> &str {
        match format {
            OutputFormat::Text => &self.text,
            OutputFormat::Csv => &self.csv,
        }
    }
}

fn setting_number(path: &Path) -> Option<u32> {
    path.file_stem()?.to_str()?.strip_prefix("setting_")?.parse().ok()
}

/// Expands inputs into series: a run directory contributes its verified
/// series in setting order, a file is parsed as a CSV series.
pub fn load_inputs(inputs: &[PathBuf]) -> Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            if p.join(MANIFEST_FILE).exists() {
                let (_, mut series) = super::load_run(p)?;
                series.sort_by_key(|s| s.setting_id());
                out.extend(series);
            } else {
                let mut files: Vec<(u32, PathBuf)> = fs::read_dir(p)
                    .map_err(|e| Error::io(p, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter_map(|f| setting_number(&f).map(|n| (n, f)))
                    .collect();
                files.sort();
                for (_, f) in files {
                    out.push(TimeSeries::load_csv(&f)?);
                }
            }
        } else {
            out.push(TimeSeries::load_csv(p)?);
        }
    }
    if out.is_empty() {
        return Err(Error::data("no time-series found in the inputs"));
    }
    Ok(out)
}

/// CHSH from four series in term order `(a,b), (a,b'), (a',b), (a',b')`.
pub fn analyze_chsh(series: &[TimeSeries], normalization: Normalization) -> Result<AnalysisOutcome> {
    if series.len() != 4 {
        return Err(Error::data(format!("chsh needs exactly 4 series, got {}", series.len())));
    }
    let mut ids = Vec::with_capacity(4);
    for s in series {
        let id = s
            .setting_id()
            .ok_or_else(|| Error::data(format!("series `{}` mixes setting ids or is empty", s.run_id)))?;
        if ids.contains(&id) {
            return Err(Error::data(format!("setting id {id} appears in more than one series")));
        }
        ids.push(id);
    }
    let report = chsh_from_series([&series[0], &series[1], &series[2], &series[3]], normalization)?;
    let norm = match normalization {
        Normalization::DetectedPairs => "detected_pairs",
        Normalization::RawRate => "raw_rate",
    };
    let runs: Vec<&str> = series.iter().map(|s| s.run_id.as_str()).collect();
    let record = format!(
        "{} {}",
        report.record(),
        format_record(&[
            ("normalization".into(), norm.into()),
            ("settings".into(), ids.iter().map(u32::to_string).collect::<Vec<_>>().join(",")),
            ("runs".into(), runs.join(",")),
        ])
    );
    Ok(AnalysisOutcome {
        kind: AnalysisKind::Chsh,
        text: format!("{report}\n"),
        csv: report.csv(),
        records: vec![record],
        rejected: report.violation_flag,
    })
}

/// The purity suite on every series. Sub-ensembles of input `i` are drawn
/// from the stream `root(seed) / SUBSAMPLE / i`.
pub fn analyze_purity(series: &[TimeSeries], config: &PurityConfig, seed: u64) -> Result<AnalysisOutcome> {
    let base = Stream::new(seed).derive(labels::SUBSAMPLE);
    let mut text = String::new();
    let mut csv = String::from("series,setting_id,test,statistic,df,p_value,alpha,verdict\n");
    let mut records = Vec::new();
    let mut rejected = false;
    for (i, s) in series.iter().enumerate() {
        let suite = purity_suite(s, config, &base.derive(i as u64))?;
        let setting = s.setting_id().map_or("mixed".to_string(), |id| id.to_string());
        text.push_str(&format!("series {} (setting {setting}, {} trials)\n{suite}\n", s.run_id, s.len()));
        for r in &suite.reports {
            csv.push_str(&format!(
                "{},{setting},{},{:.12},{},{:.12e},{},{}\n",
                s.run_id,
                r.test_name,
                r.statistic,
                r.df.map_or(String::new(), |d| d.to_string()),
                r.p_value,
                r.alpha,
                r.verdict
            ));
            records.push(format!(
                "{} {}",
                r.record(),
                format_record(&[("series".into(), s.run_id.clone()), ("setting".into(), setting.clone())])
            ));
        }
        records.push(format!(
            "{} {}",
            suite.record(),
            format_record(&[("series".into(), s.run_id.clone()), ("setting".into(), setting.clone())])
        ));
        rejected |= !suite.pure_consistent;
    }
    Ok(AnalysisOutcome {
        kind: AnalysisKind::Purity,
        text,
        csv,
        records,
        rejected,
    })
}

/// Factorization check at every `(lambda, context)` entry of a response table.
pub fn analyze_factorization(table: &ResponseTable, source: &str) -> Result<AnalysisOutcome> {
    if table.is_empty() {
        return Err(Error::data(format!("response table {source} is empty")));
    }
    // the tabulated kernel reads only the context id
    let grid: Vec<(AnalyzerPair, HiddenVariable)> = table
        .keys()
        .map(|(l, c)| (AnalyzerPair::new(c, Direction::Z, Direction::Z), HiddenVariable::Index(l)))
        .collect();
    for (pair, lambda) in &grid {
        let row = JointKernel::row(table, pair, lambda)?;
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!(
                "{source}: row for lambda {lambda:?}, context {} sums to {sum}",
                pair.id
            )));
        }
    }
    let report = check_factorization(table, &grid)?;
    let mut text = format!(
        "factorization of {source}: {} points, max violation {:.3e} (tolerance {:.0e})\n",
        report.points.len(),
        report.max_violation,
        report.tolerance
    );
    let mut csv = String::from("lambda_id,direction_id,violation,factorizes\n");
    for p in &report.points {
        let HiddenVariable::Index(l) = p.lambda else { unreachable!("grid uses indices") };
        csv.push_str(&format!("{l},{},{:.6e},{}\n", p.context_id, p.violation, p.factorizes));
        if !p.factorizes {
            text.push_str(&format!("  lambda {l}, context {}: violation {:.6e}\n", p.context_id, p.violation));
        }
    }
    text.push_str(if report.all_factorize() {
        "  verdict: product form at every point\n"
    } else {
        "  verdict: does not factorize\n"
    });
    let record = format_record(&[
        ("kind".into(), "factorization".into()),
        ("source".into(), source.into()),
        ("points".into(), report.points.len().to_string()),
        ("failures".into(), report.failures().to_string()),
        ("max_violation".into(), format!("{:.12e}", report.max_violation)),
        ("tolerance".into(), format!("{:e}", report.tolerance)),
        ("factorizes".into(), report.all_factorize().to_string()),
    ]);
    Ok(AnalysisOutcome {
        kind: AnalysisKind::Factorization,
        text,
        csv,
        records: vec![record],
        rejected: !report.all_factorize(),
    })
}
