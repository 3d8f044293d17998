//! Smearing the analyzer directions over small caps: perfect anti-correlation
//! of the sharp model is lost for equal macroscopic settings.

use spce::contextual::{
    anti_correlation_gap, smeared_probability_quadrature, CapDistribution, CapProfile, ExperimentSetting,
};
use spce::quantum::{Direction, Outcome, Spin};
use spce::rng::{labels, Stream};

pub fn run_example() -> spce::Result<()> {
    let a = Direction::planar_degrees(20.0);
    let stream = Stream::new(7).derive(labels::MONTE_CARLO);
    let pp = Outcome::new(Spin::Up, Spin::Up);

    println!("epsilon   gap (MC, 2e5 samples)        quadrature   closed form");
    for eps in [0.001, 0.01, 0.05, 0.1] {
        let cap = CapDistribution::uniform(a, eps)?;
        let setting = ExperimentSetting::ideal(cap, cap);
        let gap = anti_correlation_gap(&setting, 200_000, &stream)?;
        let quad = 2.0 * smeared_probability_quadrature(&setting, pp, 24)?;
        // uniform caps: P(x,x) = (1 - m^2) / 4 with m = 1 - eps / 2
        let m = 1.0 - eps / 2.0;
        println!("{eps:<8}  {gap}   {quad:.6e}  {:.6e}", (1.0 - m * m) / 2.0);
    }

    let gauss = CapDistribution::new(a, 0.05, CapProfile::TruncatedGaussian { sigma: 0.1 })?;
    let lossy = ExperimentSetting::new(gauss, gauss, 0.8, 0.9)?;
    let gap = anti_correlation_gap(&lossy, 200_000, &stream)?;
    println!("\ngaussian profile, eta = (0.8, 0.9): gap = {gap}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
