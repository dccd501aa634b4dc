#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecurve_core::{Arm, Subject, TrialDataset};

/// Random recurrent-event dataset. `grid > 0` rounds times to multiples of
/// `grid` so that ties across subjects occur.
pub fn random_dataset(seed: u64, n: usize, n_strata: usize, grid: f64, max_events: usize) -> TrialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snap = |t: f64| if grid > 0.0 { ((t / grid).ceil() * grid).max(grid) } else { t };
    let subjects = (0..n)
        .map(|i| {
            let arm = if i % 2 == 0 { Arm::Control } else { Arm::Vaccine };
            let stratum = format!("s{}", (i / 2) % n_strata);
            let censor = snap(rng.random_range(1.0..12.0));
            let k = rng.random_range(0..=max_events);
            let mut events: Vec<f64> = (0..k).map(|_| snap(rng.random_range(0.0..censor)).min(censor)).collect();
            events.retain(|&t| t > 0.0);
            events.sort_by(|a, b| a.partial_cmp(b).unwrap());
            events.dedup();
            Subject::new(format!("id{i:04}"), arm, stratum, censor, events)
                .unwrap()
                .with_vaccination_month(rng.random_range(1..=12))
                .unwrap()
        })
        .collect();
    TrialDataset::new(subjects).unwrap()
}

/// Keep only each subject's first event; follow-up ends there.
pub fn first_events_only(ds: &TrialDataset) -> TrialDataset {
    let subjects = ds
        .subjects()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(&t) = s.event_times.first() {
                s.censor_time = t;
                s.event_times = vec![t];
            }
            s
        })
        .collect();
    TrialDataset::new(subjects).unwrap()
}

pub fn dataset_strategy(n: usize, n_strata: usize) -> impl Strategy<Value = TrialDataset> {
    (any::<u64>(), prop_oneof![Just(0.0), Just(0.5), Just(1.0)])
        .prop_map(move |(seed, grid)| random_dataset(seed, n, n_strata, grid, 4))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
