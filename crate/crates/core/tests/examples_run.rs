//! Every example in `examples/` runs to completion.

macro_rules! example {
    ($module:ident, $test:ident) => {
        #[test]
        fn $test() {
            $module::run_example().expect(concat!(stringify!($module), " should run"));
        }
    };
}

#[path = "../examples/singlet_correlations.rs"]
mod singlet_correlations;
example!(singlet_correlations, singlet_correlations_runs);

#[path = "../examples/quantum_chsh.rs"]
mod quantum_chsh;
example!(quantum_chsh, quantum_chsh_runs);

#[path = "../examples/contextual_gap.rs"]
mod contextual_gap;
example!(contextual_gap, contextual_gap_runs);

#[path = "../examples/lrhv_protocol.rs"]
mod lrhv_protocol;
example!(lrhv_protocol, lrhv_protocol_runs);

#[path = "../examples/contextual_decomposition.rs"]
mod contextual_decomposition;
example!(contextual_decomposition, contextual_decomposition_runs);

#[path = "../examples/factorization_witness.rs"]
mod factorization_witness;
example!(factorization_witness, factorization_witness_runs);

#[path = "../examples/purity_tests.rs"]
mod purity_tests;
example!(purity_tests, purity_tests_runs);

#[path = "../examples/harness_pipeline.rs"]
mod harness_pipeline;
example!(harness_pipeline, harness_pipeline_runs);
