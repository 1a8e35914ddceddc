//! Shared fixtures for the criterion benchmarks in `benches/`.

use parktrack_core::face_gallery::{enroll_roster, RosterEntry, SyntheticEmbeddings};
use parktrack_core::park_simulator::{DetectionModel, Scenario, WalkerProfile};
use parktrack_core::Gallery;

/// `n` walkers with spread-out paces on the default 110 m loop.
pub fn crowd(n: usize, horizon_s: f64, detection: DetectionModel) -> Scenario {
    Scenario {
        perimeter_m: 110.0,
        horizon_s,
        detection,
        walkers: (0..n)
            .map(|k| WalkerProfile {
                start_offset_m: (k as f64 * 7.0) % 110.0,
                ..WalkerProfile::constant(format!("S{}", k + 1), 50.0 + k as f64, 3.5 + (k % 9) as f64, horizon_s)
            })
            .collect(),
        embeddings: None,
    }
}

pub fn gallery_for(scenario: &Scenario, dimension: usize) -> Gallery {
    let roster: Vec<_> = scenario
        .walkers
        .iter()
        .map(|w| RosterEntry {
            subject_id: w.subject_id.clone(),
            name: w.subject_id.to_string(),
            weight_kg: w.weight_kg,
        })
        .collect();
    enroll_roster(&roster, &SyntheticEmbeddings::new(dimension, 1)).expect("valid roster")
}
