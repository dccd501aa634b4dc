//! Fixtures shared by the benchmarks.

use vecurve_core::{builtin_scenario, simulate_trial, TrialDataset};

/// One simulated trial from built-in scenario `id`.
pub fn scenario_dataset(id: u8, n_per_arm: usize, seed: u64) -> TrialDataset {
    let mut spec = builtin_scenario(id).expect("built-in scenario");
    spec.n_per_arm = n_per_arm;
    simulate_trial(&spec, seed).expect("simulation")
}
