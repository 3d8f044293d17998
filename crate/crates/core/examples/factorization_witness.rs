//! Does a kernel split into local responses at fixed hidden variable?

use spce::lrhv::{check_factorization, AnalyzerPair, HiddenVariable, ResponseModel, SingletKernel};
use spce::quantum::Direction;

pub fn run_example() -> spce::Result<()> {
    let grid: Vec<(AnalyzerPair, HiddenVariable)> = (0..12)
        .map(|k| {
            let a = Direction::planar_degrees(30.0 * k as f64);
            let lambda = HiddenVariable::Direction(Direction::planar_degrees(17.0 + 40.0 * k as f64));
            (AnalyzerPair::new(k, a, a), lambda)
        })
        .collect();

    for (name, report) in [
        ("deterministic sign", check_factorization(&ResponseModel::DeterministicSign, &grid)?),
        ("stochastic, v = 0.7", check_factorization(&ResponseModel::stochastic(0.7)?, &grid)?),
        ("singlet, lambda-free", check_factorization(&SingletKernel::default(), &grid)?),
    ] {
        println!(
            "{name:<22} max violation {:.3e}  ({} of {} points fail)",
            report.max_violation,
            report.failures(),
            report.points.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
