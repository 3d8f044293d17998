//! CHSH combinations from exact probabilities and from recorded series.
//!
//! Sign convention: `S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`. The singlet
//! correlation is `-a.b`, so the optimal coplanar settings give `S = -2 sqrt 2`;
//! the classical bound and the violation flag are stated for `|S|`.

use std::fmt;

use crate::error::{Error, Result};
use crate::lrhv::AnalyzerPair;
use crate::quantum::{Direction, Outcome, EXACT_TOL};
use crate::series::TimeSeries;

/// Bound on `|S|` for every product-form model.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// Tolerance on the row sums of a probability function.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Term signs in the order `(a,b), (a,b'), (a',b), (a',b')`.
pub const SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChshSettings {
    pub a: Direction,
    pub a_prime: Direction,
    pub b: Direction,
    pub b_prime: Direction,
}

impl ChshSettings {
    pub fn new(a: Direction, a_prime: Direction, b: Direction, b_prime: Direction) -> Self {
        ChshSettings { a, a_prime, b, b_prime }
    }

    /// Coplanar settings from angles in degrees.
    pub fn coplanar_degrees(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        let d = Direction::planar_degrees;
        ChshSettings::new(d(a), d(a_prime), d(b), d(b_prime))
    }

    /// `a = 0, a' = 90, b = 45, b' = 135` degrees, where the singlet reaches `|S| = 2 sqrt 2`.
    pub fn optimal() -> Self {
        ChshSettings::coplanar_degrees(0.0, 90.0, 45.0, 135.0)
    }

    /// The four contexts in term order, with ids 0..=3.
    pub fn pairs(&self) -> [AnalyzerPair; 4] {
        [
            AnalyzerPair::new(0, self.a, self.b),
            AnalyzerPair::new(1, self.a, self.b_prime),
            AnalyzerPair::new(2, self.a_prime, self.b),
            AnalyzerPair::new(3, self.a_prime, self.b_prime),
        ]
    }
}

/// How no-detection trials enter the correlation estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Condition on coincidences: `E = sum xy / N_detected`.
    #[default]
    DetectedPairs,
    /// Count no-detections as zero: `E = sum xy / N_trials`.
    RawRate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationTerm {
    pub value: f64,
    pub std_error: f64,
    pub n_trials: u64,
    pub n_detected: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChshReport {
    pub s_value: f64,
    pub std_error: f64,
    pub terms: [CorrelationTerm; 4],
    /// Largest `|S|` over the four placements of the minus sign.
    pub s_max: f64,
    pub bound_classical: f64,
    pub violation_flag: bool,
}

impl ChshReport {
    fn from_terms(terms: [CorrelationTerm; 4]) -> Self {
        let s_value = signed_sum(&SIGNS, &terms);
        let std_error = terms.iter().map(|t| t.std_error * t.std_error).sum::<f64>().sqrt();
        let s_max = (0..4)
            .map(|k| {
                let mut signs = [1.0; 4];
                signs[k] = -1.0;
                signed_sum(&signs, &terms).abs()
            })
            .fold(0.0, f64::max);
        // the rounding allowance keeps exact evaluations at the bound unflagged
        let violation_flag = s_value.abs() - CLASSICAL_BOUND > 3.0 * std_error + EXACT_TOL;
        ChshReport {
            s_value,
            std_error,
            terms,
            s_max,
            bound_classical: CLASSICAL_BOUND,
            violation_flag,
        }
    }

    /// Flat `key=value` record on one line, for appending to report files.
    pub fn record(&self) -> String {
        let mut fields = vec![
            ("kind".to_string(), "chsh".to_string()),
            ("s_value".to_string(), format!("{:.12}", self.s_value)),
            ("std_error".to_string(), format!("{:.12}", self.std_error)),
            ("s_max".to_string(), format!("{:.12}", self.s_max)),
            ("bound_classical".to_string(), format!("{}", self.bound_classical)),
            ("violation_flag".to_string(), self.violation_flag.to_string()),
        ];
        for (i, t) in self.terms.iter().enumerate() {
            fields.push((format!("e{i}"), format!("{:.12}", t.value)));
            fields.push((format!("e{i}_se"), format!("{:.12}", t.std_error)));
            fields.push((format!("n{i}"), t.n_trials.to_string()));
            fields.push((format!("n{i}_detected"), t.n_detected.to_string()));
        }
        crate::report::format_record(&fields)
    }

    /// Header and row for a CSV rendering.
    pub fn csv(&self) -> String {
        let mut out = String::from("quantity,value,std_error,n_trials,n_detected\n");
        for (name, t) in ["ab", "ab'", "a'b", "a'b'"].iter().zip(&self.terms) {
            out.push_str(&format!("{name},{:.12},{:.12},{},{}\n", t.value, t.std_error, t.n_trials, t.n_detected));
        }
        out.push_str(&format!("S,{:.12},{:.12},,\n", self.s_value, self.std_error));
        out.push_str(&format!("s_max,{:.12},,,\n", self.s_max));
        out.push_str(&format!("bound_classical,{},,,\n", self.bound_classical));
        out.push_str(&format!("violation_flag,{},,,\n", self.violation_flag));
        out
    }
}

impl fmt::Display for ChshReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CHSH  S = E(a,b) - E(a,b') + E(a',b) + E(a',b')")?;
        for (name, t) in ["(a,b)  ", "(a,b') ", "(a',b) ", "(a',b')"].iter().zip(&self.terms) {
            writeln!(
                f,
                "  E{name} = {:+.6} ± {:.6}  [{} trials, {} detected]",
                t.value, t.std_error, t.n_trials, t.n_detected
            )?;
        }
        writeln!(f, "  S       = {:+.6} ± {:.6}", self.s_value, self.std_error)?;
        writeln!(f, "  max |S| over sign placements = {:.6}", self.s_max)?;
        write!(
            f,
            "  classical bound {}: {}",
            self.bound_classical,
            if self.violation_flag { "violated (|S| - 2 > 3 SE)" } else { "not violated" }
        )
    }
}

fn signed_sum(signs: &[f64; 4], terms: &[CorrelationTerm; 4]) -> f64 {
    signs.iter().zip(terms).map(|(s, t)| s * t.value).sum()
}

/// `E = sum xy P(x,y)` from an exact table, after checking it is a distribution.
pub fn correlation_from_table(table: &[f64; 4]) -> Result<f64> {
    let sum: f64 = table.iter().sum();
    if table.iter().any(|p| !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(p)) || (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::domain(format!(
            "probabilities {table:?} do not form a distribution (sum {sum})"
        )));
    }
    Ok(Outcome::ALL.iter().map(|o| f64::from(o.product()) * table[o.index()]).sum())
}

/// Exact CHSH value with zero standard errors.
pub fn chsh_from_model<F>(prob_fn: F, settings: &ChshSettings) -> Result<ChshReport>
where
    F: Fn(&Direction, &Direction, Outcome) -> f64,
{
    chsh_from_context(|pair: &AnalyzerPair| Ok(Outcome::ALL.map(|o| prob_fn(&pair.a, &pair.b, o))), settings)
}

/// Exact CHSH value from a context-aware table function (receives the
/// context id, for tabulated and context-indexed models).
pub fn chsh_from_context<F>(table_fn: F, settings: &ChshSettings) -> Result<ChshReport>
where
    F: Fn(&AnalyzerPair) -> Result<[f64; 4]>,
{
    let pairs = settings.pairs();
    let mut terms = [CorrelationTerm {
        value: 0.0,
        std_error: 0.0,
        n_trials: 0,
        n_detected: 0,
    }; 4];
    for (t, p) in terms.iter_mut().zip(&pairs) {
        t.value = correlation_from_table(&table_fn(p)?)?;
    }
    Ok(ChshReport::from_terms(terms))
}

/// Plug-in correlation of one recorded setting with its binomial standard error.
pub fn correlation_from_series(series: &TimeSeries, normalization: Normalization) -> Result<CorrelationTerm> {
    let n_trials = series.len() as u64;
    let mut n_detected = 0u64;
    let mut sum = 0i64;
    for o in series.outcomes() {
        n_detected += 1;
        sum += i64::from(o.product());
    }
    if n_detected == 0 {
        return Err(Error::data(format!(
            "series `{}` has no detected pairs",
            series.run_id
        )));
    }
    let (value, variance) = match normalization {
        Normalization::DetectedPairs => {
            let n = n_detected as f64;
            let e = sum as f64 / n;
            (e, (1.0 - e * e) / n)
        }
        Normalization::RawRate => {
            // xy takes values in {-1, 0, 1} with E[(xy)^2] = detected fraction
            let n = n_trials as f64;
            let e = sum as f64 / n;
            (e, (n_detected as f64 / n - e * e) / n)
        }
    };
    Ok(CorrelationTerm {
        value,
        std_error: variance.max(0.0).sqrt(),
        n_trials,
        n_detected,
    })
}

/// Empirical CHSH from one series per setting, in term order.
pub fn chsh_from_series(series: [&TimeSeries; 4], normalization: Normalization) -> Result<ChshReport> {
    let mut terms = Vec::with_capacity(4);
    for s in series {
        terms.push(correlation_from_series(s, normalization)?);
    }
    let terms: [CorrelationTerm; 4] = terms.try_into().expect("four terms");
    Ok(ChshReport::from_terms(terms))
}
