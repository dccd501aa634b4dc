mod common;

use common::mean_and_se;
use rayon::prelude::*;
use vecurve_core::hazard_sim::{hazard_upper_bound, simulate_subject_with_bound};
use vecurve_core::rng::subject_rng;
use vecurve_core::study_runner::run_scenario;
use vecurve_core::{builtin_scenario, simulate_trial, Arm, BaselineHazard, EffectSpec};

const N: usize = 100_000;

/// Event times of `N` subjects all followed to `censor`.
fn cohort(baseline: &BaselineHazard, effect: &EffectSpec, arm: Arm, censor: f64, bound: f64, seed: u64) -> Vec<Vec<f64>> {
    (0..N as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = subject_rng(seed, i);
            simulate_subject_with_bound(baseline, effect, arm, censor, bound, &mut rng).unwrap()
        })
        .collect()
}

/// With no censoring before `t`, the Nelson-Aalen estimate at `t` is the
/// mean number of events up to `t`.
fn check_cumulative(events: &[Vec<f64>], expected: impl Fn(f64) -> f64) {
    for t in [3.0, 6.0, 9.0, 12.0] {
        let counts: Vec<f64> = events.iter().map(|e| e.iter().filter(|&&x| x <= t).count() as f64).collect();
        let (na, se) = mean_and_se(&counts);
        let want = expected(t);
        assert!((na - want).abs() < 3.0 * se, "t={t}: {na} vs {want} (se {se})");
    }
}

#[test]
fn seasonal_control_cohort_matches_cumulative_hazard() {
    let b = BaselineHazard::low_high(12.0);
    let e = EffectSpec::linear(-4.0, 0.33);
    let bound = hazard_upper_bound(&b, &e, Arm::Control, 12.0).unwrap();
    let ev = cohort(&b, &e, Arm::Control, 12.0, bound, 1);
    check_cumulative(&ev, |t| b.cumulative(t));
}

#[test]
fn vaccine_cohort_matches_cumulative_hazard() {
    let b = BaselineHazard::constant(0.15).unwrap();
    let (b0, b1) = (-4.0f64, 0.33f64);
    let e = EffectSpec::linear(b0, b1);
    let bound = hazard_upper_bound(&b, &e, Arm::Vaccine, 12.0).unwrap();
    let ev = cohort(&b, &e, Arm::Vaccine, 12.0, bound, 2);
    check_cumulative(&ev, |t| 0.15 / b1 * ((b0 + b1 * t).exp() - b0.exp()));

    let counts: Vec<f64> = ev.iter().map(|e| e.len() as f64).collect();
    let (m, se) = mean_and_se(&counts);
    assert!((m - 0.428397181937995).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn homogeneous_control_mean_count() {
    let b = BaselineHazard::constant(0.15).unwrap();
    let e = EffectSpec::linear(-4.0, 0.33);
    let ev = cohort(&b, &e, Arm::Control, 12.0, 0.15, 3);
    let counts: Vec<f64> = ev.iter().map(|e| e.len() as f64).collect();
    let (m, se) = mean_and_se(&counts);
    assert!((m - 1.8).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn inflated_bound_gives_same_distribution() {
    let b = BaselineHazard::high_low(12.0);
    let e = EffectSpec::linear(-4.0, 0.33);
    let bound = hazard_upper_bound(&b, &e, Arm::Vaccine, 12.0).unwrap();
    let tight: Vec<f64> = cohort(&b, &e, Arm::Vaccine, 12.0, bound, 4).iter().map(|e| e.len() as f64).collect();
    let loose: Vec<f64> = cohort(&b, &e, Arm::Vaccine, 12.0, 2.0 * bound, 5).iter().map(|e| e.len() as f64).collect();
    let (m1, s1) = mean_and_se(&tight);
    let (m2, s2) = mean_and_se(&loose);
    assert!((m1 - m2).abs() < 3.0 * (s1 * s1 + s2 * s2).sqrt(), "{m1} vs {m2}");
}

#[test]
fn bound_below_hazard_is_an_internal_error() {
    let b = BaselineHazard::constant(0.15).unwrap();
    let e = EffectSpec::constant(0.0);
    let mut rng = subject_rng(0, 0);
    let err = (0..50)
        .find_map(|_| simulate_subject_with_bound(&b, &e, Arm::Control, 12.0, 0.1, &mut rng).err())
        .expect("an accepted candidate exposes the violated bound");
    assert!(err.is_numerical());
}

#[test]
fn trials_are_reproducible_and_censoring_matches_design() {
    let s4 = builtin_scenario(4).unwrap();
    let a = simulate_trial(&s4, 17).unwrap();
    assert_eq!(a, simulate_trial(&s4, 17).unwrap());
    assert_ne!(a, simulate_trial(&s4, 18).unwrap());
    assert!(a.subjects().iter().all(|s| (6.0..=10.0).contains(&s.censor_time)));
    let s1 = simulate_trial(&builtin_scenario(1).unwrap(), 17).unwrap();
    assert_eq!(s1.len(), 2000);
    assert!(s1.subjects().iter().all(|s| s.censor_time == 12.0));
}

#[test]
fn study_summary_does_not_depend_on_thread_count() {
    let mut spec = builtin_scenario(7).unwrap();
    spec.n_per_arm = 200;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_scenario(&spec, 12, 5).unwrap())
    };
    assert_eq!(run(1), run(4));
}
