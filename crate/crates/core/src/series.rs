//! Outcome time-series and their CSV representation.
//!
//! A file holds one run of one analyzer setting:
//!
//! ```text
//! trial_index,setting_id,x,y
//! 0,0,+1,-1
//! 1,0,ND,ND
//! ```
//!
//! UTF-8, LF line endings, `ND` in both outcome columns for a trial in which no
//! coincidence was registered.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quantum::{Outcome, Spin};

pub const CSV_HEADER: &str = "trial_index,setting_id,x,y";
pub const NO_DETECTION_TOKEN: &str = "ND";

/// What a single trial registered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detection {
    Pair(Outcome),
    NoDetection,
}

impl Detection {
    pub fn outcome(self) -> Option<Outcome> {
        match self {
            Detection::Pair(o) => Some(o),
            Detection::NoDetection => None,
        }
    }

    pub fn is_detected(self) -> bool {
        matches!(self, Detection::Pair(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub setting_id: u32,
    pub detection: Detection,
}

/// Which generator produced a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelTag {
    Quantum,
    Contextual,
    Lrhv,
    External,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTag::Quantum => "quantum",
            ModelTag::Contextual => "contextual",
            ModelTag::Lrhv => "lrhv",
            ModelTag::External => "external",
        })
    }
}

impl FromStr for ModelTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quantum" => Ok(ModelTag::Quantum),
            "contextual" => Ok(ModelTag::Contextual),
            "lrhv" => Ok(ModelTag::Lrhv),
            "external" => Ok(ModelTag::External),
            other => Err(format!(
                "unknown model `{other}` (expected quantum, contextual, lrhv or external)"
            )),
        }
    }
}

/// One run `T(S, E, i)`: an ordered list of trials plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    trials: Vec<TrialRecord>,
    pub run_id: String,
    pub seed: Option<u64>,
    pub model: ModelTag,
}

impl TimeSeries {
    pub fn new(run_id: impl Into<String>, seed: Option<u64>, model: ModelTag) -> Self {
        TimeSeries {
            trials: Vec::new(),
            run_id: run_id.into(),
            seed,
            model,
        }
    }

    /// Builds a series from detections, numbering trials from 0.
    pub fn from_detections(
        run_id: impl Into<String>,
        seed: Option<u64>,
        model: ModelTag,
        setting_id: u32,
        detections: impl IntoIterator<Item = Detection>,
    ) -> Self {
        let mut s = TimeSeries::new(run_id, seed, model);
        for d in detections {
            s.push(setting_id, d);
        }
        s
    }

    /// Validates that trial indices start at 0 and strictly increase.
    pub fn from_records(
        run_id: impl Into<String>,
        seed: Option<u64>,
        model: ModelTag,
        trials: Vec<TrialRecord>,
    ) -> Result<Self> {
        if let Some(first) = trials.first() {
            if first.trial_index != 0 {
                return Err(Error::data(format!(
                    "trial indices must start at 0, found {}",
                    first.trial_index
                )));
            }
        }
        if let Some(w) = trials.windows(2).find(|w| w[1].trial_index <= w[0].trial_index) {
            return Err(Error::data(format!(
                "trial index {} does not follow {}",
                w[1].trial_index, w[0].trial_index
            )));
        }
        Ok(TimeSeries {
            trials,
            run_id: run_id.into(),
            seed,
            model,
        })
    }

    pub fn push(&mut self, setting_id: u32, detection: Detection) {
        let trial_index = self.trials.last().map_or(0, |t| t.trial_index + 1);
        self.trials.push(TrialRecord {
            trial_index,
            setting_id,
            detection,
        });
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn detections(&self) -> impl Iterator<Item = Detection> + '_ {
        self.trials.iter().map(|t| t.detection)
    }

    /// Detected outcomes in trial order; no-detection trials are skipped.
    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.detections().filter_map(Detection::outcome)
    }

    pub fn detected_count(&self) -> usize {
        self.outcomes().count()
    }

    pub fn no_detection_count(&self) -> usize {
        self.len() - self.detected_count()
    }

    /// The setting id shared by every trial, if there is exactly one.
    pub fn setting_id(&self) -> Option<u32> {
        let first = self.trials.first()?.setting_id;
        self.trials
            .iter()
            .all(|t| t.setting_id == first)
            .then_some(first)
    }

    /// New series made of the trials at `indices` (in the given order),
    /// renumbered from 0.
    pub fn select(&self, indices: &[usize]) -> TimeSeries {
        let mut out = TimeSeries::new(self.run_id.clone(), self.seed, self.model);
        for &i in indices {
            let t = self.trials[i];
            out.push(t.setting_id, t.detection);
        }
        out
    }

    /// Applies `f` to every detected outcome.
    pub fn map_outcomes(&self, f: impl Fn(Outcome) -> Outcome) -> TimeSeries {
        let mut out = self.clone();
        for t in &mut out.trials {
            if let Detection::Pair(o) = t.detection {
                t.detection = Detection::Pair(f(o));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for t in &self.trials {
            match t.detection {
                Detection::Pair(o) => {
                    writeln!(w, "{},{},{},{}", t.trial_index, t.setting_id, o.x, o.y)?
                }
                Detection::NoDetection => writeln!(
                    w,
                    "{},{},{NO_DETECTION_TOKEN},{NO_DETECTION_TOKEN}",
                    t.trial_index, t.setting_id
                )?,
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 * self.len() + 32);
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Parses a CSV time-series. The run id defaults to the file stem and
    /// the model tag to [`ModelTag::External`].
    pub fn load_csv(path: &Path) -> Result<TimeSeries> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let run_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        parse_csv(&text, path, run_id)
    }
}

/// Parses CSV text; `path` is used only in error messages.
pub fn parse_csv(text: &str, path: &Path, run_id: String) -> Result<TimeSeries> {
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, "header", e.to_string()))?
        .clone();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        let column = headers
            .iter()
            .zip(expected.iter())
            .find(|(h, e)| h != *e)
            .map_or_else(|| "header".to_string(), |(h, _)| h.to_string());
        return Err(parse_err(
            1,
            &column,
            format!("expected header `{CSV_HEADER}`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut trials = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            parse_err(row, "record", e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let trial_index: u64 = field(0)
            .parse()
            .map_err(|_| parse_err(row, "trial_index", format!("`{}` is not a non-negative integer", field(0))))?;
        let setting_id: u32 = field(1)
            .parse()
            .map_err(|_| parse_err(row, "setting_id", format!("`{}` is not a non-negative integer", field(1))))?;
        let detection = match (field(2), field(3)) {
            (NO_DETECTION_TOKEN, NO_DETECTION_TOKEN) => Detection::NoDetection,
            (NO_DETECTION_TOKEN, _) | (_, NO_DETECTION_TOKEN) => {
                let column = if field(2) == NO_DETECTION_TOKEN { "y" } else { "x" };
                return Err(parse_err(row, column, "ND must appear in both x and y".into()));
            }
            (x, y) => {
                let x = parse_spin(x).ok_or_else(|| parse_err(row, "x", format!("`{x}` is not +1, -1 or ND")))?;
                let y = parse_spin(y).ok_or_else(|| parse_err(row, "y", format!("`{y}` is not +1, -1 or ND")))?;
                Detection::Pair(Outcome::new(x, y))
            }
        };
        let expected_floor = trials.last().map_or(0, |t: &TrialRecord| t.trial_index + 1);
        if trial_index < expected_floor || (trials.is_empty() && trial_index != 0) {
            return Err(parse_err(
                row,
                "trial_index",
                format!("index {trial_index} breaks the strictly increasing sequence from 0"),
            ));
        }
        trials.push(TrialRecord {
            trial_index,
            setting_id,
            detection,
        });
    }
    TimeSeries::from_records(run_id, None, ModelTag::External, trials)
}

fn parse_spin(s: &str) -> Option<Spin> {
    match s {
        "+1" | "1" => Some(Spin::Up),
        "-1" => Some(Spin::Down),
        _ => None,
    }
}
