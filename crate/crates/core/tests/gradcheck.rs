mod common;

use std::time::Instant;

use common::{gradient_suite, FD_TOL};

#[test]
fn every_op_and_the_model_match_finite_differences() {
    let start = Instant::now();
    let results = gradient_suite();
    let secs = start.elapsed().as_secs_f64();
    let failures: Vec<String> = results
        .iter()
        .filter(|(_, e)| !(*e < FD_TOL))
        .map(|(n, e)| format!("{n}: {e:.3e}"))
        .collect();
    assert!(failures.is_empty(), "gradient mismatches: {failures:?}");
    assert!(results.iter().any(|(n, _)| *n == "model"));
    assert!(secs < 60.0, "gradient suite took {secs:.1}s");
}
