//! CHSH for the singlet: exact value and a simulated estimate.

use spce::chsh::{chsh_from_model, chsh_from_series, ChshSettings, Normalization};
use spce::quantum::{build_singlet, joint_probability, sample_trial};
use spce::rng::{labels, Stream};
use spce::series::{Detection, ModelTag, TimeSeries};

pub fn run_example() -> spce::Result<()> {
    let psi = build_singlet();
    let settings = ChshSettings::optimal();

    let exact = chsh_from_model(|a, b, o| joint_probability(&psi, a, b, o), &settings)?;
    println!("exact\n{exact}\n");

    let root = Stream::new(2024).derive(labels::SETTINGS);
    let n = 100_000;
    let series: Vec<TimeSeries> = settings
        .pairs()
        .iter()
        .map(|p| {
            let mut rng = root.derive(u64::from(p.id));
            let det = (0..n).map(|_| Detection::Pair(sample_trial(&psi, &p.a, &p.b, &mut rng)));
            TimeSeries::from_detections("quantum-chsh", Some(2024), ModelTag::Quantum, p.id, det)
        })
        .collect();
    let sim = chsh_from_series([&series[0], &series[1], &series[2], &series[3]], Normalization::DetectedPairs)?;
    println!("simulated, {n} pairs per setting\n{sim}");

    let z = (sim.s_value - exact.s_value) / sim.std_error;
    println!("\ndeviation from the exact value: {z:+.2} standard errors");
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
