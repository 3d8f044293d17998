//! The hidden-variable protocol: draw a pair, record its predetermined
//! outcomes for every setting, tally. The tallies converge to the product
//! form and every CHSH combination stays within the classical bound.

use spce::chsh::{chsh_from_context, ChshSettings};
use spce::lrhv::{lrhv_table, run_protocol, Atom, HiddenVariable, HiddenVariableEnsemble, ResponseModel};
use spce::quantum::Direction;
use spce::rng::{labels, Stream};

pub fn run_example() -> spce::Result<()> {
    let atoms = [(15.0, 3), (100.0, 1), (250.0, 2)]
        .iter()
        .map(|&(deg, count)| Atom {
            lambda: HiddenVariable::Direction(Direction::planar_degrees(deg)),
            count,
        })
        .collect();
    let ensemble = HiddenVariableEnsemble::atoms(atoms)?;
    let response = ResponseModel::DeterministicSign;
    let settings = ChshSettings::optimal();
    let pairs = settings.pairs();

    let tallies = run_protocol(&ensemble, &response, &pairs, 200_000, &Stream::new(5).derive(labels::PROTOCOL))?;
    println!("setting  empirical (++, +-, -+, --)          exact");
    for (t, p) in tallies.iter().zip(&pairs) {
        let exact = lrhv_table(&ensemble, &response, p)?;
        let f = t.frequencies();
        println!("{:>7}  {:.4} {:.4} {:.4} {:.4}   {:.4} {:.4} {:.4} {:.4}", p.id, f[0], f[1], f[2], f[3], exact[0], exact[1], exact[2], exact[3]);
    }

    let atomic = chsh_from_context(|p| lrhv_table(&ensemble, &response, p), &settings)?;
    let uniform = chsh_from_context(|p| lrhv_table(&HiddenVariableEnsemble::UniformSphere, &response, p), &settings)?;
    println!("\natomic ensemble:  S = {:+.6}, max |S| = {:.6}", atomic.s_value, atomic.s_max);
    println!("uniform ensemble: S = {:+.6}, max |S| = {:.6}", uniform.s_value, uniform.s_max);
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
