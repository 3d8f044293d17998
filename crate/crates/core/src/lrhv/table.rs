//! Tabulated response kernels `p(x, y | context, lambda)`.
//!
//! File format (CSV, header required):
//!
//! ```text
//! lambda_id,direction_id,x,y,probability
//! 0,0,+1,+1,0.25
//! ```
//!
//! `direction_id` names the analyzer context (the setting id of the run), and
//! hidden variables are referenced by index. Outcomes missing from the file
//! have probability zero.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AnalyzerPair, HiddenVariable, JointKernel};
use crate::error::{Error, Result};
use crate::quantum::{Outcome, Spin};

pub const TABLE_HEADER: &str = "lambda_id,direction_id,x,y,probability";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResponseTable {
    entries: BTreeMap<(u32, u32), [f64; 4]>,
}

impl ResponseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lambda_id: u32, context_id: u32, row: [f64; 4]) {
        self.entries.insert((lambda_id, context_id), row);
    }

    pub fn row(&self, lambda_id: u32, context_id: u32) -> Option<&[f64; 4]> {
        self.entries.get(&(lambda_id, context_id))
    }

    /// Every `(lambda_id, context_id)` present, in ascending order.
    pub fn keys(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.entries.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when every entry is 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        self.entries
            .values()
            .flatten()
            .all(|&p| p == 0.0 || p == 1.0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |row: usize, column: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| err(1, "header", e.to_string()))?
            .clone();
        let expected: Vec<&str> = TABLE_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(err(1, "header", format!("expected `{TABLE_HEADER}`")));
        }
        let mut table = ResponseTable::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let row = e.position().map_or(0, |p| p.line() as usize);
                err(row, "record", e.to_string())
            })?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            let get = |i: usize| record.get(i).unwrap_or("");
            let lambda: u32 = get(0)
                .parse()
                .map_err(|_| err(row, "lambda_id", format!("`{}` is not an index", get(0))))?;
            let context: u32 = get(1)
                .parse()
                .map_err(|_| err(row, "direction_id", format!("`{}` is not an index", get(1))))?;
            let spin = |i: usize, name: &str| match get(i) {
                "+1" | "1" => Ok(Spin::Up),
                "-1" => Ok(Spin::Down),
                other => Err(err(row, name, format!("`{other}` is not +1 or -1"))),
            };
            let out = Outcome::new(spin(2, "x")?, spin(3, "y")?);
            let p: f64 = get(4)
                .parse()
                .ok()
                .filter(|p: &f64| (0.0..=1.0).contains(p))
                .ok_or_else(|| err(row, "probability", format!("`{}` is not a probability", get(4))))?;
            let entry = table.entries.entry((lambda, context)).or_insert([0.0; 4]);
            entry[out.index()] = p;
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TABLE_HEADER}")?;
        for (&(l, c), row) in &self.entries {
            for o in Outcome::ALL {
                writeln!(w, "{l},{c},{},{},{}", o.x, o.y, row[o.index()])?;
            }
        }
        Ok(())
    }
}

impl JointKernel for ResponseTable {
    fn joint(&self, pair: &AnalyzerPair, lambda: &HiddenVariable, out: Outcome) -> Result<f64> {
        let HiddenVariable::Index(l) = lambda else {
            return Err(Error::contract("tabulated kernels need indexed hidden variables"));
        };
        self.row(*l, pair.id)
            .map(|r| r[out.index()])
            .ok_or_else(|| Error::domain(format!("no table entry for lambda {l}, context {}", pair.id)))
    }
}
