#![no_main]

use binfleet_core::routing::{brute_force_optimum, nearest_neighbor, two_opt, PlanProblem, DEFAULT_MAX_PASSES};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(problem) = PlanProblem::from_json(data) else {
        return;
    };
    let nn = nearest_neighbor(&problem).expect("non-empty problem routes");
    let improved = two_opt(&nn, &problem, DEFAULT_MAX_PASSES).expect("2-opt keeps the permutation");
    if !nn.length_m.is_finite() {
        return;
    }
    assert!(improved.length_m <= nn.length_m + 1e-6 * nn.length_m.max(1.0));
    if problem.len() <= 7 {
        let best = brute_force_optimum(&problem).expect("small problem");
        assert!(best.length_m <= improved.length_m + 1e-6 * improved.length_m.max(1.0));
    }
});
