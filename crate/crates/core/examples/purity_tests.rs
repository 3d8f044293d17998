//! Purity tests on three kinds of series: i.i.d. quantum trials, a
//! two-atom hidden-variable ensemble drawn in blocks, and the same ensemble
//! drawn in random order.

use spce::lrhv::{
    block_order, draw_hidden_variables, protocol_series, AnalyzerPair, Atom, HiddenVariable, HiddenVariableEnsemble,
    ResponseModel,
};
use spce::purity::{purity_suite, PurityConfig};
use spce::quantum::{build_singlet, sample_trial, Direction};
use spce::rng::{labels, Stream};
use spce::series::{Detection, ModelTag, TimeSeries};

pub fn run_example() -> spce::Result<()> {
    let pair = AnalyzerPair::new(0, Direction::planar_degrees(0.0), Direction::planar_degrees(45.0));
    let root = Stream::new(99);
    let n = 4000;

    let mut rng = root.derive(labels::SETTINGS);
    let psi = build_singlet();
    let det = (0..n).map(|_| Detection::Pair(sample_trial(&psi, &pair.a, &pair.b, &mut rng)));
    let quantum = TimeSeries::from_detections("quantum", Some(99), ModelTag::Quantum, 0, det);

    let atoms = [10.0, 200.0]
        .iter()
        .map(|&deg| Atom {
            lambda: HiddenVariable::Direction(Direction::planar_degrees(deg)),
            count: 1,
        })
        .collect();
    let ensemble = HiddenVariableEnsemble::atoms(atoms)?;
    let draws = draw_hidden_variables(&ensemble, n, &root.derive(labels::PROTOCOL));
    let response = ResponseModel::DeterministicSign;
    let shuffled = protocol_series(&draws, &response, &[pair], "lrhv-shuffled", Some(99))?.remove(0);
    let blocked = protocol_series(&block_order(&draws), &response, &[pair], "lrhv-blocked", Some(99))?.remove(0);

    let config = PurityConfig::default();
    for (i, s) in [quantum, shuffled, blocked].iter().enumerate() {
        let suite = purity_suite(s, &config, &root.derive(labels::SUBSAMPLE).derive(i as u64))?;
        println!("{}\n{suite}\n", s.run_id);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
