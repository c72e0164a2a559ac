//! Finite-difference check of the hand-written backward passes.

use conceptsynth::pipeline::{gradcheck_suite, GradcheckCase};

pub fn run_example(networks: usize) -> Result<Vec<GradcheckCase>, Box<dyn std::error::Error>> {
    let cases = gradcheck_suite(networks, 0, 1e-5)?;
    for c in &cases {
        println!(
            "{:<24} {:>6} params  max rel err {:.2e}  {}",
            c.name,
            c.parameters,
            c.max_relative_error,
            if c.passes(1e-4) { "ok" } else { "FAIL" }
        );
    }
    Ok(cases)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(20)?;
    Ok(())
}
