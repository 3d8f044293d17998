//! Hidden-variable descriptions of coincidence experiments.
//!
//! Two integral forms are provided:
//!
//! * the product form, where one distribution `rho(lambda)` over a single
//!   space serves every context and the kernel factorizes into local
//!   responses, `P(x,y|A,B) = sum_lambda p1(x|A,lambda) p2(y|B,lambda) rho(lambda)`
//!   ([`lrhv_probability`]);
//! * the context-indexed form, where both the space and its distribution may
//!   depend on `(A, B)` and the kernel `p(x,y|A,B,lambda)` need not factorize
//!   ([`contextual_probability`]).
//!
//! [`run_protocol`] is the random experiment behind the product form with
//! deterministic responses: draw a pair from a finite ensemble with
//! replacement, record its predetermined outcomes for every listed setting,
//! tally.

mod table;

use std::f64::consts::{FRAC_1_PI, TAU};

use rand::Rng;

pub use table::{ResponseTable, TABLE_HEADER};

use crate::error::{Error, Result};
use crate::quantum::{build_singlet, joint_table, sample_from_table, Direction, Outcome, Spin, TwoQubitState};
use crate::rng::{par_batches, Stream};
use crate::series::{Detection, ModelTag, TimeSeries};
use crate::stats::{Estimate, Moments};

/// Tolerance separating exact factorization from a genuine violation.
pub const FACTORIZATION_TOL: f64 = 1e-10;

/// Tolerance on the row sums of a kernel.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HiddenVariable {
    Direction(Direction),
    /// Opaque label, e.g. a row group of a [`ResponseTable`].
    Index(u32),
}

/// An analyzer context `(A, B)` with an identifier used by tabulated kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyzerPair {
    pub id: u32,
    pub a: Direction,
    pub b: Direction,
}

impl AnalyzerPair {
    pub fn new(id: u32, a: Direction, b: Direction) -> Self {
        AnalyzerPair { id, a, b }
    }
}

/// A conditional distribution `p(x, y | A, B, lambda)`.
pub trait JointKernel {
    fn joint(&self, pair: &AnalyzerPair, lambda: &HiddenVariable, out: Outcome) -> Result<f64>;

    /// The four probabilities in [`Outcome::ALL`] order.
    fn row(&self, pair: &AnalyzerPair, lambda: &HiddenVariable) -> Result<[f64; 4]> {
        let mut row = [0.0; 4];
        for o in Outcome::ALL {
            row[o.index()] = self.joint(pair, lambda, o)?;
        }
        Ok(row)
    }
}

/// Local response functions `p1(x | A, lambda)`, `p2(y | B, lambda)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ResponseModel {
    /// `x = sign(A . lambda)`, `y = -sign(B . lambda)`, with `sign(0) = +1`.
    DeterministicSign,
    /// Independent local coins: `p1(x) = (1 + x v A.lambda) / 2`,
    /// `p2(y) = (1 - y v B.lambda) / 2` for visibility `v` in `[0, 1]`.
    StochasticIndependent { visibility: f64 },
    /// Tabulated responses; they must factorize wherever the product form is used.
    Table(ResponseTable),
}

impl ResponseModel {
    pub fn stochastic(visibility: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::parameter(format!(
                "visibility must lie in [0, 1], got {visibility}"
            )));
        }
        Ok(ResponseModel::StochasticIndependent { visibility })
    }

    /// Whether every response probability is 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        match self {
            ResponseModel::DeterministicSign => true,
            ResponseModel::StochasticIndependent { .. } => false,
            ResponseModel::Table(t) => t.is_deterministic(),
        }
    }

    /// Marginal response probabilities `([p1(+), p1(-)], [p2(+), p2(-)])`.
    pub fn local_responses(&self, pair: &AnalyzerPair, lambda: &HiddenVariable) -> Result<([f64; 2], [f64; 2])> {
        match (self, lambda) {
            (ResponseModel::DeterministicSign, HiddenVariable::Direction(l)) => {
                let x = Spin::from_sign(pair.a.dot(l));
                let y = Spin::from_sign(pair.b.dot(l)).flip();
                Ok((indicator(x), indicator(y)))
            }
            (ResponseModel::StochasticIndependent { visibility: v }, HiddenVariable::Direction(l)) => {
                let pa = 0.5 * (1.0 + v * pair.a.dot(l));
                let pb = 0.5 * (1.0 - v * pair.b.dot(l));
                Ok(([pa, 1.0 - pa], [pb, 1.0 - pb]))
            }
            (ResponseModel::Table(t), lambda) => {
                let row = JointKernel::row(t, pair, lambda)?;
                Ok(marginals(&row))
            }
            (_, HiddenVariable::Index(_)) => Err(Error::contract(
                "direction-based responses need direction-valued hidden variables",
            )),
        }
    }

    /// Predetermined outcome for a deterministic response.
    pub fn outcome(&self, pair: &AnalyzerPair, lambda: &HiddenVariable) -> Result<Outcome> {
        let (p1, p2) = self.local_responses(pair, lambda)?;
        let pick = |p: [f64; 2]| match p {
            [1.0, 0.0] => Ok(Spin::Up),
            [0.0, 1.0] => Ok(Spin::Down),
            _ => Err(Error::contract("response is not deterministic at this hidden variable")),
        };
        Ok(Outcome::new(pick(p1)?, pick(p2)?))
    }

    /// Checks the factorization at one point and returns the product table.
    fn product_row(&self, pair: &AnalyzerPair, lambda: &HiddenVariable) -> Result<[f64; 4]> {
        if let ResponseModel::Table(t) = self {
            let row = JointKernel::row(t, pair, lambda)?;
            check_row(&row)?;
            let v = factorization_violation(&row);
            if v > FACTORIZATION_TOL {
                return Err(Error::contract(format!(
                    "tabulated response does not factorize at context {} (violation {v:.3e}); \
                     use contextual_probability",
                    pair.id
                )));
            }
        }
        let (p1, p2) = self.local_responses(pair, lambda)?;
        Ok(Outcome::ALL.map(|o| p1[spin_index(o.x)] * p2[spin_index(o.y)]))
    }
}

impl JointKernel for ResponseModel {
    fn joint(&self, pair: &AnalyzerPair, lambda: &HiddenVariable, out: Outcome) -> Result<f64> {
        if let ResponseModel::Table(t) = self {
            return t.joint(pair, lambda, out);
        }
        let (p1, p2) = self.local_responses(pair, lambda)?;
        Ok(p1[spin_index(out.x)] * p2[spin_index(out.y)])
    }
}

fn indicator(s: Spin) -> [f64; 2] {
    match s {
        Spin::Up => [1.0, 0.0],
        Spin::Down => [0.0, 1.0],
    }
}

fn spin_index(s: Spin) -> usize {
    match s {
        Spin::Up => 0,
        Spin::Down => 1,
    }
}

fn marginals(row: &[f64; 4]) -> ([f64; 2], [f64; 2]) {
    ([row[0] + row[1], row[2] + row[3]], [row[0] + row[2], row[1] + row[3]])
}

/// `max |p(x,y) - p1(x) p2(y)|` with `p1`, `p2` the marginals of `row`.
pub fn factorization_violation(row: &[f64; 4]) -> f64 {
    let (p1, p2) = marginals(row);
    Outcome::ALL
        .iter()
        .map(|o| (row[o.index()] - p1[spin_index(o.x)] * p2[spin_index(o.y)]).abs())
        .fold(0.0, f64::max)
}

fn check_row(row: &[f64; 4]) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|p| !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(p)) || (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::domain(format!(
            "kernel row {row:?} is not a probability distribution (sum {sum})"
        )));
    }
    Ok(())
}

/// A hidden variable with its multiplicity in a finite ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub lambda: HiddenVariable,
    pub count: u64,
}

/// Distribution over the hidden-variable space.
#[derive(Clone, Debug, PartialEq)]
pub enum HiddenVariableEnsemble {
    /// `n_k` pairs described by `lambda_k`.
    Atoms(Vec<Atom>),
    /// Directions uniformly distributed on the unit sphere.
    UniformSphere,
}

/// One draw of the protocol: the hidden variable and, for finite ensembles,
/// which atom it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub lambda: HiddenVariable,
    pub atom: Option<usize>,
}

impl HiddenVariableEnsemble {
    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::parameter("an ensemble needs at least one atom"));
        }
        if let Some(a) = atoms.iter().find(|a| a.count == 0) {
            return Err(Error::parameter(format!("atom {:?} has zero count", a.lambda)));
        }
        Ok(HiddenVariableEnsemble::Atoms(atoms))
    }

    /// Single-atom ensemble.
    pub fn point(lambda: HiddenVariable) -> Self {
        HiddenVariableEnsemble::Atoms(vec![Atom { lambda, count: 1 }])
    }

    pub fn total_count(&self) -> Option<u64> {
        match self {
            HiddenVariableEnsemble::Atoms(a) => Some(a.iter().map(|a| a.count).sum()),
            HiddenVariableEnsemble::UniformSphere => None,
        }
    }

    /// Density with respect to surface measure (continuous ensembles only).
    pub fn density(&self, lambda: &Direction) -> Option<f64> {
        let _ = lambda;
        match self {
            HiddenVariableEnsemble::UniformSphere => Some(0.25 * FRAC_1_PI),
            HiddenVariableEnsemble::Atoms(_) => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        match self {
            HiddenVariableEnsemble::Atoms(atoms) => {
                let total: u64 = atoms.iter().map(|a| a.count).sum();
                let mut k = rng.random_range(0..total);
                for (i, a) in atoms.iter().enumerate() {
                    if k < a.count {
                        return Draw {
                            lambda: a.lambda,
                            atom: Some(i),
                        };
                    }
                    k -= a.count;
                }
                unreachable!("draw below the total count always lands on an atom")
            }
            HiddenVariableEnsemble::UniformSphere => Draw {
                lambda: HiddenVariable::Direction(uniform_direction(rng)),
                atom: None,
            },
        }
    }
}

/// Uniform point on the unit sphere (Archimedes: `z` uniform on `[-1, 1]`).
pub fn uniform_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi = TAU * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Direction::from_raw_unit([r * phi.cos(), r * phi.sin(), z])
}

/// Product-form probability `P(x, y | A, B)`, integrated exactly.
///
/// Finite ensembles are summed; the uniform sphere uses the closed forms of
/// the two direction-based responses. Non-factorizing tables are rejected.
pub fn lrhv_probability(
    ensemble: &HiddenVariableEnsemble,
    response: &ResponseModel,
    pair: &AnalyzerPair,
    out: Outcome,
) -> Result<f64> {
    Ok(lrhv_table(ensemble, response, pair)?[out.index()])
}

/// All four product-form probabilities in [`Outcome::ALL`] order.
pub fn lrhv_table(ensemble: &HiddenVariableEnsemble, response: &ResponseModel, pair: &AnalyzerPair) -> Result<[f64; 4]> {
    match ensemble {
        HiddenVariableEnsemble::Atoms(atoms) => {
            let total: u64 = atoms.iter().map(|a| a.count).sum();
            let mut acc = [0.0; 4];
            for a in atoms {
                let row = response.product_row(pair, &a.lambda)?;
                let w = a.count as f64 / total as f64;
                for (acc, p) in acc.iter_mut().zip(row) {
                    *acc += w * p;
                }
            }
            Ok(acc)
        }
        HiddenVariableEnsemble::UniformSphere => {
            let correlation = match response {
                // P(sign(A.l) != sign(B.l)) = theta / pi for uniform l
                ResponseModel::DeterministicSign => -1.0 + 2.0 * pair.a.angle_to(&pair.b) * FRAC_1_PI,
                // E[(A.l)(B.l)] = A.B / 3 for uniform l
                ResponseModel::StochasticIndependent { visibility: v } => -v * v * pair.a.dot(&pair.b) / 3.0,
                ResponseModel::Table(_) => {
                    return Err(Error::contract(
                        "tabulated responses need a finite ensemble of indexed hidden variables",
                    ))
                }
            };
            // both marginals are 1/2 by the symmetry lambda -> -lambda
            Ok(Outcome::ALL.map(|o| 0.25 * (1.0 + f64::from(o.product()) * correlation)))
        }
    }
}

/// Monte Carlo route for the product form, usable with any ensemble that can
/// be sampled.
pub fn lrhv_probability_mc(
    ensemble: &HiddenVariableEnsemble,
    response: &ResponseModel,
    pair: &AnalyzerPair,
    out: Outcome,
    n_samples: usize,
    stream: &Stream,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::parameter("Monte Carlo integration needs at least 2 samples"));
    }
    let batches = par_batches(stream, n_samples, |rng, len| -> Result<Moments> {
        let mut m = Moments::default();
        for _ in 0..len {
            let d = ensemble.sample(rng);
            m.push(response.product_row(pair, &d.lambda)?[out.index()]);
        }
        Ok(m)
    });
    let mut total = Moments::default();
    for b in batches {
        total.merge(&b?);
    }
    Ok(total.estimate())
}

/// Hidden-variable space and distribution chosen per context.
pub trait ContextSpace {
    fn ensemble_for(&self, pair: &AnalyzerPair) -> Result<HiddenVariableEnsemble>;
}

impl ContextSpace for HiddenVariableEnsemble {
    fn ensemble_for(&self, _pair: &AnalyzerPair) -> Result<HiddenVariableEnsemble> {
        Ok(self.clone())
    }
}

impl<F> ContextSpace for F
where
    F: Fn(&AnalyzerPair) -> HiddenVariableEnsemble,
{
    fn ensemble_for(&self, pair: &AnalyzerPair) -> Result<HiddenVariableEnsemble> {
        Ok(self(pair))
    }
}

/// Context-indexed probability `sum_{lambda in Lambda(A,B)} p(x,y|A,B,lambda) rho_AB(lambda)`.
///
/// The space must be finite in every context. Every kernel row used is
/// checked to be a probability distribution.
pub fn contextual_probability(
    space: &impl ContextSpace,
    kernel: &impl JointKernel,
    pair: &AnalyzerPair,
    out: Outcome,
) -> Result<f64> {
    let HiddenVariableEnsemble::Atoms(atoms) = space.ensemble_for(pair)? else {
        return Err(Error::contract(
            "context-indexed integration needs a finite ensemble in each context",
        ));
    };
    let total: u64 = atoms.iter().map(|a| a.count).sum();
    let mut acc = 0.0;
    for a in &atoms {
        let row = kernel.row(pair, &a.lambda)?;
        check_row(&row)?;
        acc += a.count as f64 / total as f64 * row[out.index()];
    }
    Ok(acc)
}

/// The singlet distribution, independent of `lambda`.
#[derive(Clone, Copy, Debug)]
pub struct SingletKernel {
    state: TwoQubitState,
}

impl Default for SingletKernel {
    fn default() -> Self {
        SingletKernel { state: build_singlet() }
    }
}

impl JointKernel for SingletKernel {
    fn joint(&self, pair: &AnalyzerPair, _lambda: &HiddenVariable, out: Outcome) -> Result<f64> {
        Ok(crate::quantum::joint_probability(&self.state, &pair.a, &pair.b, out))
    }
}

/// One atom per context, `lambda = Index(context id)`, carrying the exact
/// quantum table of that context.
#[derive(Clone, Debug, Default)]
pub struct QuantumTableKernel {
    tables: std::collections::BTreeMap<u32, [f64; 4]>,
}

impl QuantumTableKernel {
    pub fn for_pairs<'a>(pairs: impl IntoIterator<Item = &'a AnalyzerPair>) -> Self {
        let state = build_singlet();
        let tables = pairs
            .into_iter()
            .map(|p| (p.id, joint_table(&state, &p.a, &p.b)))
            .collect();
        QuantumTableKernel { tables }
    }

    /// The matching context space: a single atom labelled by the context id.
    pub fn space() -> impl Fn(&AnalyzerPair) -> HiddenVariableEnsemble {
        |pair: &AnalyzerPair| HiddenVariableEnsemble::point(HiddenVariable::Index(pair.id))
    }
}

impl JointKernel for QuantumTableKernel {
    fn joint(&self, pair: &AnalyzerPair, lambda: &HiddenVariable, out: Outcome) -> Result<f64> {
        match lambda {
            HiddenVariable::Index(i) if *i == pair.id => self
                .tables
                .get(i)
                .map(|t| t[out.index()])
                .ok_or_else(|| Error::domain(format!("no quantum table for context {i}"))),
            // outside Lambda(A, B) the kernel is never evaluated by the
            // matching space; report a uniform row to keep it a distribution
            _ => Ok(0.25),
        }
    }
}

/// Per-point result of [`check_factorization`].
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationPoint {
    pub context_id: u32,
    pub lambda: HiddenVariable,
    pub violation: f64,
    pub factorizes: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationReport {
    pub points: Vec<FactorizationPoint>,
    pub max_violation: f64,
    pub tolerance: f64,
}

impl FactorizationReport {
    pub fn all_factorize(&self) -> bool {
        self.points.iter().all(|p| p.factorizes)
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| !p.factorizes).count()
    }
}

/// Tests `p(x,y|A,B,lambda) = p1(x|A,lambda) p2(y|B,lambda)` at every grid
/// point, with `p1`, `p2` the kernel's own marginals at fixed `lambda`.
pub fn check_factorization(
    kernel: &impl JointKernel,
    grid: &[(AnalyzerPair, HiddenVariable)],
) -> Result<FactorizationReport> {
    if grid.is_empty() {
        return Err(Error::parameter("factorization grid is empty"));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut max_violation: f64 = 0.0;
    for (pair, lambda) in grid {
        let row = kernel.row(pair, lambda)?;
        let violation = factorization_violation(&row);
        max_violation = max_violation.max(violation);
        points.push(FactorizationPoint {
            context_id: pair.id,
            lambda: *lambda,
            violation,
            factorizes: violation <= FACTORIZATION_TOL,
        });
    }
    Ok(FactorizationReport {
        points,
        max_violation,
        tolerance: FACTORIZATION_TOL,
    })
}

/// Empirical joint distribution of one setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointCounts {
    pub pair_id: u32,
    pub counts: [u64; 4],
}

impl JointCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.total() as f64;
        self.counts.map(|c| c as f64 / n)
    }

    /// Binomial standard error of each frequency.
    pub fn std_errors(&self) -> [f64; 4] {
        let n = self.total() as f64;
        self.frequencies().map(|p| (p * (1.0 - p) / n).sqrt())
    }
}

fn require_deterministic(response: &ResponseModel) -> Result<()> {
    if !response.is_deterministic() {
        return Err(Error::contract(
            "recording every setting on one draw requires deterministic responses; \
             use run_single_setting for stochastic responses",
        ));
    }
    Ok(())
}

/// Step (i)-(ii) sampling: `n_draws` pairs drawn with replacement.
pub fn draw_hidden_variables(ensemble: &HiddenVariableEnsemble, n_draws: usize, stream: &Stream) -> Vec<Draw> {
    par_batches(stream, n_draws, |rng, len| (0..len).map(|_| ensemble.sample(rng)).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Reorders draws so all pairs of atom 0 come first, then atom 1, and so on.
pub fn block_order(draws: &[Draw]) -> Vec<Draw> {
    let mut out = draws.to_vec();
    out.sort_by_key(|d| d.atom);
    out
}

/// Step (iii): tally the predetermined outcomes of every draw for every setting.
pub fn tally_protocol(draws: &[Draw], response: &ResponseModel, settings: &[AnalyzerPair]) -> Result<Vec<JointCounts>> {
    require_deterministic(response)?;
    settings
        .iter()
        .map(|pair| {
            let mut counts = [0u64; 4];
            for d in draws {
                counts[response.outcome(pair, &d.lambda)?.index()] += 1;
            }
            Ok(JointCounts {
                pair_id: pair.id,
                counts,
            })
        })
        .collect()
}

/// The full protocol: draw, record every setting on the same draw, tally.
pub fn run_protocol(
    ensemble: &HiddenVariableEnsemble,
    response: &ResponseModel,
    settings: &[AnalyzerPair],
    n_draws: usize,
    stream: &Stream,
) -> Result<Vec<JointCounts>> {
    require_deterministic(response)?;
    if n_draws == 0 {
        return Err(Error::parameter("the protocol needs at least one draw"));
    }
    let draws = draw_hidden_variables(ensemble, n_draws, stream);
    tally_protocol(&draws, response, settings)
}

/// Per-setting time-series of a sequence of draws, in draw order.
pub fn protocol_series(
    draws: &[Draw],
    response: &ResponseModel,
    settings: &[AnalyzerPair],
    run_id: &str,
    seed: Option<u64>,
) -> Result<Vec<TimeSeries>> {
    require_deterministic(response)?;
    settings
        .iter()
        .map(|pair| {
            let mut s = TimeSeries::new(run_id, seed, ModelTag::Lrhv);
            for d in draws {
                s.push(pair.id, Detection::Pair(response.outcome(pair, &d.lambda)?));
            }
            Ok(s)
        })
        .collect()
}

/// Single-setting mode: each draw is measured in one context only and the
/// outcome pair is sampled from the kernel row at the drawn `lambda`. Works for
/// any response model, including stochastic and tabulated ones.
pub fn run_single_setting<R: Rng + ?Sized>(
    ensemble: &HiddenVariableEnsemble,
    response: &ResponseModel,
    pair: &AnalyzerPair,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<Outcome>> {
    (0..n_draws)
        .map(|_| {
            let d = ensemble.sample(rng);
            let row = response.row(pair, &d.lambda)?;
            check_row(&row)?;
            Ok(sample_from_table(&row, rng))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::joint_probability;

    fn pair(id: u32, a: f64, b: f64) -> AnalyzerPair {
        AnalyzerPair::new(id, Direction::planar_degrees(a), Direction::planar_degrees(b))
    }

    fn random_atoms(rng: &mut Stream, k: usize) -> HiddenVariableEnsemble {
        HiddenVariableEnsemble::atoms(
            (0..k)
                .map(|_| Atom {
                    lambda: HiddenVariable::Direction(uniform_direction(rng)),
                    count: rng.random_range(1..50),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ensemble_validation() {
        assert!(HiddenVariableEnsemble::atoms(vec![]).is_err());
        let zero = Atom {
            lambda: HiddenVariable::Index(0),
            count: 0,
        };
        assert!(HiddenVariableEnsemble::atoms(vec![zero]).is_err());
        assert!(ResponseModel::stochastic(1.5).is_err());
    }

    #[test]
    fn uniform_density_integrates_to_one() {
        // integrate rho over the sphere with the (cos theta, phi) rectangle as
        // the sampling domain: area element is dz dphi, total area 4 pi
        let e = HiddenVariableEnsemble::UniformSphere;
        let mut rng = Stream::new(1);
        let mut m = Moments::default();
        for _ in 0..10_000 {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..TAU);
            let d = Direction::from_spherical(z.acos(), phi);
            m.push(4.0 * std::f64::consts::PI * e.density(&d).unwrap());
        }
        let est = m.estimate();
        assert!((est.value - 1.0).abs() <= 3.0 * est.std_error + 1e-12);
    }

    #[test]
    fn point_mass_on_the_analyzer() {
        let a = Direction::planar_degrees(25.0);
        let ens = HiddenVariableEnsemble::point(HiddenVariable::Direction(a));
        let p = AnalyzerPair::new(0, a, Direction::planar_degrees(80.0));
        let px_up: f64 = [Spin::Up, Spin::Down]
            .iter()
            .map(|&y| lrhv_probability(&ens, &ResponseModel::DeterministicSign, &p, Outcome::new(Spin::Up, y)).unwrap())
            .sum();
        assert_eq!(px_up, 1.0);
    }

    #[test]
    fn deterministic_equal_settings_never_agree() {
        let mut rng = Stream::new(2);
        let ens = random_atoms(&mut rng, 25);
        let p = pair(0, 33.0, 33.0);
        for o in [Outcome::new(Spin::Up, Spin::Up), Outcome::new(Spin::Down, Spin::Down)] {
            assert_eq!(lrhv_probability(&ens, &ResponseModel::DeterministicSign, &p, o).unwrap(), 0.0);
        }
        let closed = lrhv_probability(&HiddenVariableEnsemble::UniformSphere, &ResponseModel::DeterministicSign, &p, Outcome::ALL[0]).unwrap();
        assert_eq!(closed, 0.0);
    }

    #[test]
    fn sign_tie_resolves_up() {
        // lambda perpendicular to both analyzers: x = +1, y = -sign(0) = -1
        let p = AnalyzerPair::new(0, Direction::Z, Direction::Z);
        let o = ResponseModel::DeterministicSign
            .outcome(&p, &HiddenVariable::Direction(Direction::X))
            .unwrap();
        assert_eq!(o, Outcome::new(Spin::Up, Spin::Down));
    }

    #[test]
    fn uniform_sign_model_correlation_against_mc_oracle() {
        // oracle: plain sampling of uniform lambda and direct sign evaluation
        let mut rng = Stream::new(3);
        for (a, b) in [(0.0, 30.0), (0.0, 90.0), (10.0, 145.0)] {
            let p = pair(0, a, b);
            let mut m = Moments::default();
            for _ in 0..1_000_000 {
                let l = uniform_direction(&mut rng);
                let x = if p.a.dot(&l) >= 0.0 { 1.0 } else { -1.0 };
                let y = if p.b.dot(&l) >= 0.0 { -1.0 } else { 1.0 };
                m.push(x * y);
            }
            let oracle = m.estimate();
            let table = lrhv_table(&HiddenVariableEnsemble::UniformSphere, &ResponseModel::DeterministicSign, &p).unwrap();
            let e: f64 = Outcome::ALL.iter().map(|o| f64::from(o.product()) * table[o.index()]).sum();
            let theta = (b - a).to_radians();
            assert!((e - (-1.0 + 2.0 * theta / std::f64::consts::PI)).abs() < 1e-12);
            assert!((e - oracle.value).abs() < 3.0 * oracle.std_error, "{e} vs {}", oracle);
        }
    }

    #[test]
    fn closed_forms_agree_with_mc_route() {
        let ens = HiddenVariableEnsemble::UniformSphere;
        let p = pair(0, 20.0, 110.0);
        for resp in [ResponseModel::DeterministicSign, ResponseModel::stochastic(0.8).unwrap()] {
            for o in Outcome::ALL {
                let exact = lrhv_probability(&ens, &resp, &p, o).unwrap();
                let mc = lrhv_probability_mc(&ens, &resp, &p, o, 200_000, &Stream::new(4)).unwrap();
                assert!((exact - mc.value).abs() < 4.0 * mc.std_error, "{resp:?} {o:?}");
            }
        }
    }

    #[test]
    fn outcomes_sum_to_one_and_no_signalling() {
        let mut rng = Stream::new(5);
        let ens = random_atoms(&mut rng, 10);
        for resp in [ResponseModel::DeterministicSign, ResponseModel::stochastic(0.6).unwrap()] {
            let t1 = lrhv_table(&ens, &resp, &pair(0, 10.0, 40.0)).unwrap();
            let t2 = lrhv_table(&ens, &resp, &pair(1, 10.0, 170.0)).unwrap();
            assert!((t1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // marginal of particle I does not depend on B
            assert!(((t1[0] + t1[1]) - (t2[0] + t2[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn non_factorizing_table_is_rejected() {
        let mut t = ResponseTable::new();
        t.insert(0, 0, [0.0, 0.5, 0.5, 0.0]);
        let ens = HiddenVariableEnsemble::point(HiddenVariable::Index(0));
        let err = lrhv_probability(&ens, &ResponseModel::Table(t), &pair(0, 0.0, 0.0), Outcome::ALL[0]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn factorizing_table_is_accepted() {
        let mut t = ResponseTable::new();
        // p1 = (0.3, 0.7), p2 = (0.6, 0.4)
        t.insert(0, 0, [0.18, 0.12, 0.42, 0.28]);
        t.insert(1, 0, [0.0, 1.0, 0.0, 0.0]);
        let ens = HiddenVariableEnsemble::atoms(vec![
            Atom { lambda: HiddenVariable::Index(0), count: 1 },
            Atom { lambda: HiddenVariable::Index(1), count: 3 },
        ])
        .unwrap();
        let p = lrhv_probability(&ens, &ResponseModel::Table(t), &pair(0, 0.0, 0.0), Outcome::ALL[1]).unwrap();
        assert!((p - (0.25 * 0.12 + 0.75)).abs() < 1e-12);
    }

    #[test]
    fn singlet_kernel_reproduces_quantum_values() {
        let state = build_singlet();
        let space = HiddenVariableEnsemble::point(HiddenVariable::Index(0));
        for (a, b) in [(0.0, 0.0), (0.0, 45.0), (30.0, 200.0)] {
            let p = pair(0, a, b);
            for o in Outcome::ALL {
                let v = contextual_probability(&space, &SingletKernel::default(), &p, o).unwrap();
                assert_eq!(v, joint_probability(&state, &p.a, &p.b, o));
            }
        }
    }

    #[test]
    fn per_context_tables_match_closed_form() {
        let pairs: Vec<_> = (0..20).map(|i| pair(i, 7.0 * i as f64, 200.0 - 13.0 * i as f64)).collect();
        let kernel = QuantumTableKernel::for_pairs(&pairs);
        let space = QuantumTableKernel::space();
        for p in &pairs {
            for o in Outcome::ALL {
                let v = contextual_probability(&space, &kernel, p, o).unwrap();
                assert!((v - crate::quantum::singlet_probability(&p.a, &p.b, o)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_kernel_with_fixed_space_reduces_to_product_form() {
        let mut rng = Stream::new(6);
        let ens = random_atoms(&mut rng, 12);
        let resp = ResponseModel::stochastic(0.9).unwrap();
        let p = pair(0, 15.0, 75.0);
        for o in Outcome::ALL {
            let a = contextual_probability(&ens, &resp, &p, o).unwrap();
            let b = lrhv_probability(&ens, &resp, &p, o).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_kernel_rows_are_rejected() {
        struct Bad;
        impl JointKernel for Bad {
            fn joint(&self, _: &AnalyzerPair, _: &HiddenVariable, _: Outcome) -> Result<f64> {
                Ok(0.3)
            }
        }
        let space = HiddenVariableEnsemble::point(HiddenVariable::Index(0));
        let err = contextual_probability(&space, &Bad, &pair(0, 0.0, 0.0), Outcome::ALL[0]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let err = contextual_probability(&HiddenVariableEnsemble::UniformSphere, &Bad, &pair(0, 0.0, 0.0), Outcome::ALL[0]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn factorization_witnesses() {
        let l = HiddenVariable::Direction(Direction::planar_degrees(12.0));
        let grid: Vec<_> = (0..10).map(|i| (pair(i, 10.0 * i as f64, 5.0 * i as f64), l)).collect();
        let r = check_factorization(&ResponseModel::stochastic(0.7).unwrap(), &grid).unwrap();
        assert!(r.all_factorize());
        assert!(r.max_violation < 1e-15);
        let r = check_factorization(&ResponseModel::DeterministicSign, &grid).unwrap();
        assert_eq!(r.max_violation, 0.0);

        let same = [(pair(0, 40.0, 40.0), HiddenVariable::Index(0))];
        let r = check_factorization(&SingletKernel::default(), &same).unwrap();
        assert!(r.max_violation >= 0.25 - 1e-12);
        assert_eq!(r.failures(), 1);

        assert!(check_factorization(&SingletKernel::default(), &[]).is_err());
    }

    #[test]
    fn single_atom_protocol_is_exact_after_one_draw() {
        let l = HiddenVariable::Direction(Direction::planar_degrees(10.0));
        let ens = HiddenVariableEnsemble::point(l);
        let settings = [pair(0, 0.0, 45.0), pair(1, 90.0, 135.0)];
        let tables = run_protocol(&ens, &ResponseModel::DeterministicSign, &settings, 1, &Stream::new(7)).unwrap();
        for (t, p) in tables.iter().zip(&settings) {
            let o = ResponseModel::DeterministicSign.outcome(p, &l).unwrap();
            let mut expect = [0; 4];
            expect[o.index()] = 1;
            assert_eq!(t.counts, expect);
        }
    }

    #[test]
    fn protocol_contract_errors() {
        let ens = HiddenVariableEnsemble::UniformSphere;
        let settings = [pair(0, 0.0, 45.0)];
        let stoch = ResponseModel::stochastic(1.0).unwrap();
        assert!(matches!(run_protocol(&ens, &stoch, &settings, 10, &Stream::new(0)), Err(Error::Contract(_))));
        assert!(matches!(
            run_protocol(&ens, &ResponseModel::DeterministicSign, &settings, 0, &Stream::new(0)),
            Err(Error::Parameter(_))
        ));
        // single-setting mode accepts stochastic responses
        let mut rng = Stream::new(8);
        let outs = run_single_setting(&ens, &stoch, &settings[0], 100_000, &mut rng).unwrap();
        let e: f64 = outs.iter().map(|o| f64::from(o.product())).sum::<f64>() / outs.len() as f64;
        let expect = -settings[0].a.dot(&settings[0].b) / 3.0;
        assert!((e - expect).abs() < 4.0 / (outs.len() as f64).sqrt());
    }

    #[test]
    fn shuffled_draws_give_identical_tables() {
        use rand::seq::SliceRandom;
        let mut rng = Stream::new(9);
        let ens = random_atoms(&mut rng, 5);
        let settings = [pair(0, 0.0, 45.0), pair(1, 0.0, 135.0), pair(2, 90.0, 45.0)];
        let draws = draw_hidden_variables(&ens, 5000, &Stream::new(10));
        let base = tally_protocol(&draws, &ResponseModel::DeterministicSign, &settings).unwrap();
        let mut shuffled = draws.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(tally_protocol(&shuffled, &ResponseModel::DeterministicSign, &settings).unwrap(), base);
        assert_eq!(tally_protocol(&block_order(&draws), &ResponseModel::DeterministicSign, &settings).unwrap(), base);
    }
}
