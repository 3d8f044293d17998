//! Non-parametric tests of the pure-ensemble criterion on recorded series.
//!
//! A series is pure-consistent when rich random sub-ensembles share one
//! distribution of counting rates and no serial fine structure is visible.
//! Three statistics realize this: chi-square homogeneity across
//! sub-ensembles, Wald-Wolfowitz runs, and a first-half/second-half
//! comparison. No-detection tokens are removed before testing, and their
//! rate gets its own half-vs-half test.

use std::fmt;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::quantum::{Outcome, Spin};
use crate::report::format_record;
use crate::rng::Stream;
use crate::series::{Detection, TimeSeries};
use crate::stats::{chi_square_sf, normal_two_sided};

/// Smallest series or sub-ensemble the tests accept.
pub const RICHNESS_FLOOR: usize = 30;

/// Expected cell count below which the chi-square approximation is flagged.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PurityConfig {
    /// Family-wise level, split across the applicable tests (Bonferroni).
    pub alpha: f64,
    pub subsamples: usize,
    pub fraction: f64,
}

impl Default for PurityConfig {
    fn default() -> Self {
        PurityConfig {
            alpha: 0.05,
            subsamples: 10,
            fraction: 0.2,
        }
    }
}

impl PurityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::parameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.subsamples < 2 {
            return Err(Error::parameter("homogeneity needs at least 2 subsamples"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::parameter(format!("fraction must lie in (0, 1], got {}", self.fraction)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Reject,
    Retain,
    /// The statistic is undefined for this series (e.g. a constant channel).
    NotApplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Reject => "reject",
            Verdict::Retain => "retain",
            Verdict::NotApplicable => "not_applicable",
        })
    }
}

/// How sub-ensembles were formed; determines the null distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SubsampleScheme {
    /// Non-overlapping sub-ensembles (e.g. contiguous blocks).
    Disjoint,
    /// Independent draws without replacement from one series of `population`
    /// trials. The statistic is divided by the finite-population factor
    /// `(N - n) / (N - 1)` so it stays chi-square under the null.
    Subsampled { population: usize },
}

impl fmt::Display for SubsampleScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsampleScheme::Disjoint => f.write_str("disjoint"),
            SubsampleScheme::Subsampled { population } => write!(f, "random_without_replacement(N={population})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PurityReport {
    pub test_name: String,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub verdict: Verdict,
    pub scheme: String,
    pub warnings: Vec<String>,
}

impl PurityReport {
    fn new(test_name: &str, statistic: f64, df: Option<f64>, p_value: f64, alpha: f64, scheme: String) -> Self {
        let mut r = PurityReport {
            test_name: test_name.to_string(),
            statistic,
            df,
            p_value: p_value.clamp(0.0, 1.0),
            alpha,
            verdict: Verdict::Retain,
            scheme,
            warnings: Vec::new(),
        };
        r.set_alpha(alpha);
        r
    }

    fn not_applicable(test_name: &str, alpha: f64, scheme: String, reason: String) -> Self {
        PurityReport {
            test_name: test_name.to_string(),
            statistic: 0.0,
            df: None,
            p_value: 1.0,
            alpha,
            verdict: Verdict::NotApplicable,
            scheme,
            warnings: vec![reason],
        }
    }

    /// Re-evaluates the verdict at a new level.
    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
        if self.verdict != Verdict::NotApplicable {
            self.verdict = if self.p_value < alpha { Verdict::Reject } else { Verdict::Retain };
        }
    }

    pub fn record(&self) -> String {
        let fields = vec![
            ("kind".to_string(), "purity".to_string()),
            ("test".to_string(), self.test_name.clone()),
            ("statistic".to_string(), format!("{:.12}", self.statistic)),
            ("df".to_string(), self.df.map_or("NA".to_string(), |d| d.to_string())),
            ("p_value".to_string(), format!("{:.12e}", self.p_value)),
            ("alpha".to_string(), format!("{}", self.alpha)),
            ("verdict".to_string(), self.verdict.to_string()),
            ("scheme".to_string(), self.scheme.clone()),
            ("warnings".to_string(), self.warnings.join("; ")),
        ];
        format_record(&fields)
    }
}

impl fmt::Display for PurityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} stat = {:>12.4}  df = {:>4}  p = {:.4e}  alpha = {:.4}  -> {}",
            self.test_name,
            self.statistic,
            self.df.map_or("-".to_string(), |d| d.to_string()),
            self.p_value,
            self.alpha,
            self.verdict
        )?;
        for w in &self.warnings {
            write!(f, "\n    warning: {w}")?;
        }
        Ok(())
    }
}

/// Binary channel fed to the runs test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    X,
    Y,
    Product,
}

impl Channel {
    fn name(self) -> &'static str {
        match self {
            Channel::X => "x",
            Channel::Y => "y",
            Channel::Product => "xy",
        }
    }

    fn value(self, o: Outcome) -> bool {
        match self {
            Channel::X => o.x == Spin::Up,
            Channel::Y => o.y == Spin::Up,
            Channel::Product => o.product() > 0,
        }
    }
}

/// `m` random sub-ensembles of `round(fraction * len)` trials each, drawn
/// without replacement within a sub-ensemble and independently across them.
/// Trials keep their original order and are renumbered from 0.
pub fn random_subensembles(series: &TimeSeries, m: usize, fraction: f64, stream: &Stream) -> Result<Vec<TimeSeries>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::parameter(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let len = series.len();
    let size = (fraction * len as f64).round() as usize;
    if size < RICHNESS_FLOOR {
        return Err(Error::parameter(format!(
            "sub-ensembles of {size} trials fall below the richness floor of {RICHNESS_FLOOR}"
        )));
    }
    let mut rng = stream.clone_fresh();
    Ok((0..m)
        .map(|_| {
            let mut idx = index::sample(&mut rng, len, size).into_vec();
            idx.sort_unstable();
            series.select(&idx)
        })
        .collect())
}

/// `m` disjoint contiguous blocks covering the series (the last absorbs the remainder).
pub fn contiguous_blocks(series: &TimeSeries, m: usize) -> Result<Vec<TimeSeries>> {
    if m == 0 || series.len() / m < RICHNESS_FLOOR {
        return Err(Error::parameter(format!(
            "{m} blocks of a {}-trial series fall below the richness floor of {RICHNESS_FLOOR}",
            series.len()
        )));
    }
    let step = series.len() / m;
    Ok((0..m)
        .map(|k| {
            let end = if k + 1 == m { series.len() } else { (k + 1) * step };
            series.select(&(k * step..end).collect::<Vec<_>>())
        })
        .collect())
}

fn outcome_counts(series: &TimeSeries) -> Vec<f64> {
    let mut c = vec![0.0; 4];
    for o in series.outcomes() {
        c[o.index()] += 1.0;
    }
    c
}

/// Pearson chi-square for an `r x k` contingency table; all-zero columns are
/// dropped. Returns `(statistic, df, min expected)`, or `None` when fewer than
/// two categories are populated.
fn contingency(rows: &[Vec<f64>]) -> Option<(f64, f64, f64)> {
    let k = rows.first()?.len();
    let cols: Vec<usize> = (0..k).filter(|&j| rows.iter().any(|r| r[j] > 0.0)).collect();
    if cols.len() < 2 {
        return None;
    }
    let row_tot: Vec<f64> = rows.iter().map(|r| cols.iter().map(|&j| r[j]).sum()).collect();
    let col_tot: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    let mut stat = 0.0;
    let mut min_expected = f64::INFINITY;
    for (r, rt) in rows.iter().zip(&row_tot) {
        for (&j, ct) in cols.iter().zip(&col_tot) {
            let e = rt * ct / total;
            min_expected = min_expected.min(e);
            stat += (r[j] - e) * (r[j] - e) / e;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as f64;
    Some((stat, df, min_expected))
}

/// Chi-square homogeneity of outcome-category counts across sub-ensembles.
pub fn homogeneity_test(subsamples: &[TimeSeries], scheme: SubsampleScheme, alpha: f64) -> Result<PurityReport> {
    const NAME: &str = "homogeneity";
    if subsamples.len() < 2 {
        return Err(Error::parameter("homogeneity needs at least 2 subsamples"));
    }
    let setting = subsamples[0].setting_id();
    if setting.is_none() || subsamples.iter().any(|s| s.setting_id() != setting) {
        return Err(Error::data("subsamples must share one setting id"));
    }
    let rows: Vec<Vec<f64>> = subsamples.iter().map(outcome_counts).collect();
    if rows.iter().any(|r| r.iter().sum::<f64>() == 0.0) {
        return Err(Error::data("a subsample has no detected pairs"));
    }
    let factor = match scheme {
        SubsampleScheme::Disjoint => 1.0,
        SubsampleScheme::Subsampled { population } => {
            let n = subsamples[0].len();
            if subsamples.iter().any(|s| s.len() != n) || population < n || population < 2 {
                return Err(Error::parameter(
                    "random sub-ensembles must have equal sizes not exceeding the population",
                ));
            }
            (population - n) as f64 / (population - 1) as f64
        }
    };
    let scheme_text = format!("{scheme}, m={}", subsamples.len());
    let Some((raw, df, min_expected)) = contingency(&rows) else {
        return Ok(PurityReport::not_applicable(NAME, alpha, scheme_text, "a single outcome category".into()));
    };
    if factor == 0.0 {
        // every sub-ensemble is the full series
        return Ok(PurityReport::new(NAME, 0.0, Some(df), 1.0, alpha, scheme_text));
    }
    let stat = raw / factor;
    let mut r = PurityReport::new(NAME, stat, Some(df), chi_square_sf(stat, df), alpha, scheme_text);
    if min_expected < MIN_EXPECTED {
        r.warnings.push(format!("expected cell count {min_expected:.2} below {MIN_EXPECTED}"));
    }
    Ok(r)
}

/// Wald-Wolfowitz runs test on a binary channel of the detected outcomes.
pub fn runs_test(series: &TimeSeries, channel: Channel, alpha: f64) -> Result<PurityReport> {
    let name = format!("runs_{}", channel.name());
    let bits: Vec<bool> = series.outcomes().map(|o| channel.value(o)).collect();
    runs_on_bits(&bits, &name, alpha)
}

fn runs_on_bits(bits: &[bool], name: &str, alpha: f64) -> Result<PurityReport> {
    let n = bits.len();
    if n < RICHNESS_FLOOR {
        return Err(Error::data(format!(
            "{name}: {n} detected trials fall below the richness floor of {RICHNESS_FLOOR}"
        )));
    }
    let n1 = bits.iter().filter(|&&b| b).count() as f64;
    let n2 = n as f64 - n1;
    let scheme = format!("n={n}");
    if n1 == 0.0 || n2 == 0.0 {
        return Ok(PurityReport::not_applicable(name, alpha, scheme, "all outcomes identical".into()));
    }
    let runs = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let nf = n as f64;
    let mean = 2.0 * n1 * n2 / nf + 1.0;
    let var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - nf) / (nf * nf * (nf - 1.0));
    if var <= 0.0 {
        return Ok(PurityReport::not_applicable(name, alpha, scheme, "runs variance vanishes".into()));
    }
    let z = (runs as f64 - mean) / var.sqrt();
    Ok(PurityReport::new(name, z, None, normal_two_sided(z), alpha, scheme))
}

fn halves(bits_or_cats: &[usize], k: usize) -> Option<(f64, f64, f64)> {
    let mid = bits_or_cats.len() / 2;
    let mut rows = vec![vec![0.0; k]; 2];
    for (i, &c) in bits_or_cats.iter().enumerate() {
        rows[usize::from(i >= mid)][c] += 1.0;
    }
    contingency(&rows)
}

/// First half against second half of the detected outcomes, 2 x 4 chi-square.
pub fn halves_test(series: &TimeSeries, alpha: f64) -> Result<PurityReport> {
    const NAME: &str = "halves";
    let cats: Vec<usize> = series.outcomes().map(Outcome::index).collect();
    if cats.len() < 2 * RICHNESS_FLOOR {
        return Err(Error::data(format!(
            "{NAME}: {} detected trials give halves below the richness floor",
            cats.len()
        )));
    }
    let scheme = format!("n={}", cats.len());
    match halves(&cats, 4) {
        None => Ok(PurityReport::not_applicable(NAME, alpha, scheme, "a single outcome category".into())),
        Some((stat, df, min_e)) => {
            let mut r = PurityReport::new(NAME, stat, Some(df), chi_square_sf(stat, df), alpha, scheme);
            if min_e < MIN_EXPECTED {
                r.warnings.push(format!("expected cell count {min_e:.2} below {MIN_EXPECTED}"));
            }
            Ok(r)
        }
    }
}

/// First half against second half of the no-detection rate.
pub fn detection_rate_test(series: &TimeSeries, alpha: f64) -> Result<PurityReport> {
    const NAME: &str = "detection_rate_halves";
    let cats: Vec<usize> = series.detections().map(|d| usize::from(d == Detection::NoDetection)).collect();
    if cats.len() < 2 * RICHNESS_FLOOR {
        return Err(Error::data(format!("{NAME}: series too short")));
    }
    let scheme = format!("n={}", cats.len());
    match halves(&cats, 2) {
        None => Ok(PurityReport::not_applicable(NAME, alpha, scheme, "detection rate is 0 or 1".into())),
        Some((stat, df, _)) => Ok(PurityReport::new(NAME, stat, Some(df), chi_square_sf(stat, df), alpha, scheme)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PuritySuiteReport {
    pub reports: Vec<PurityReport>,
    pub family_alpha: f64,
    pub per_test_alpha: f64,
    pub pure_consistent: bool,
}

impl PuritySuiteReport {
    pub fn record(&self) -> String {
        let rejected: Vec<&str> = self
            .reports
            .iter()
            .filter(|r| r.verdict == Verdict::Reject)
            .map(|r| r.test_name.as_str())
            .collect();
        format_record(&[
            ("kind".to_string(), "purity_suite".to_string()),
            ("family_alpha".to_string(), self.family_alpha.to_string()),
            ("per_test_alpha".to_string(), format!("{:.6}", self.per_test_alpha)),
            ("tests".to_string(), self.reports.len().to_string()),
            ("rejected".to_string(), rejected.join(",")),
            ("pure_consistent".to_string(), self.pure_consistent.to_string()),
        ])
    }
}

impl fmt::Display for PuritySuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "purity suite (family alpha {}, per test {:.4})",
            self.family_alpha, self.per_test_alpha
        )?;
        for r in &self.reports {
            writeln!(f, "  {r}")?;
        }
        write!(
            f,
            "  verdict: {}",
            if self.pure_consistent { "pure-consistent" } else { "not pure" }
        )
    }
}

/// Runs every applicable test and applies a Bonferroni correction across them.
///
/// Sub-ensembles for the homogeneity test are drawn from `stream`.
pub fn purity_suite(series: &TimeSeries, config: &PurityConfig, stream: &Stream) -> Result<PuritySuiteReport> {
    config.validate()?;
    let alpha = config.alpha;
    let skipped = |name: &str, e: Error| PurityReport::not_applicable(name, alpha, String::new(), e.to_string());
    let detected = series.outcomes().count();
    let detected_series = if detected == series.len() {
        series.clone()
    } else {
        let idx: Vec<usize> = (0..series.len())
            .filter(|&i| series.trials()[i].detection.is_detected())
            .collect();
        series.select(&idx)
    };

    let mut reports = Vec::new();
    reports.push(
        random_subensembles(&detected_series, config.subsamples, config.fraction, stream)
            .and_then(|subs| {
                homogeneity_test(
                    &subs,
                    SubsampleScheme::Subsampled {
                        population: detected_series.len(),
                    },
                    alpha,
                )
            })
            .unwrap_or_else(|e| skipped("homogeneity", e)),
    );
    for ch in [Channel::X, Channel::Y] {
        reports.push(runs_test(series, ch, alpha).unwrap_or_else(|e| skipped(&format!("runs_{}", ch.name()), e)));
    }
    reports.push(halves_test(series, alpha).unwrap_or_else(|e| skipped("halves", e)));
    if series.no_detection_count() > 0 {
        reports.push(detection_rate_test(series, alpha).unwrap_or_else(|e| skipped("detection_rate_halves", e)));
    }

    let applicable = reports.iter().filter(|r| r.verdict != Verdict::NotApplicable).count();
    let per_test_alpha = alpha / applicable.max(1) as f64;
    for r in &mut reports {
        r.set_alpha(per_test_alpha);
    }
    let pure_consistent = reports.iter().all(|r| r.verdict != Verdict::Reject);
    Ok(PuritySuiteReport {
        reports,
        family_alpha: alpha,
        per_test_alpha,
        pure_consistent,
    })
}
