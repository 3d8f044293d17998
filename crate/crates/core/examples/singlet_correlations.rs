//! Joint outcome probabilities of the singlet for sharp analyzer directions.

use spce::quantum::{
    build_singlet, correlation, joint_table, marginal_probability, reduce_on_outcome, Direction, Outcome, QubitState,
    Spin,
};

pub fn run_example() -> spce::Result<()> {
    let psi = build_singlet();
    let a = Direction::planar_degrees(0.0);

    println!("angle   P(++)    P(+-)    P(-+)    P(--)    E       -cos");
    for deg in [0.0, 30.0, 45.0, 90.0, 135.0, 180.0] {
        let b = Direction::planar_degrees(deg);
        let t = joint_table(&psi, &a, &b);
        let e = correlation(&psi, &a, &b);
        println!(
            "{deg:>5}  {:.5}  {:.5}  {:.5}  {:.5}  {e:+.4}  {:+.4}",
            t[0],
            t[1],
            t[2],
            t[3],
            -f64::to_radians(deg).cos()
        );
    }

    // equal settings never agree
    let same = joint_table(&psi, &a, &a);
    assert_eq!(same[Outcome::new(Spin::Up, Spin::Up).index()], 0.0);
    println!("P(+|a) = {}", marginal_probability(&psi, &a, Spin::Up));

    // finding +1 on the first particle leaves the second in the -1 state along a
    let rest = reduce_on_outcome(&psi, &a, Spin::Up)?;
    let fidelity = rest.fidelity(&QubitState::eigenstate(&a, Spin::Down));
    println!("fidelity of the reduced state with |-a> = {fidelity:.12}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> spce::Result<()> {
    run_example()
}
