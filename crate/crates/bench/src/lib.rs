//! Fixtures shared by the benchmarks.

use rtbarrier_core::{simulate_dataset, ClusteredSample, ModelDataset, PopulationParams};

/// Men's incl. 2022 population estimates.
pub fn reference_params() -> PopulationParams {
    PopulationParams::new(-1.910, -2.200, -1.178, 0.058, 0.320).expect("valid parameters")
}

/// Thirteen championship venues with eight heats each, heat sizes
/// cycling 6 to 9.
pub fn reference_structure() -> ModelDataset {
    let mut rows = Vec::new();
    for (v, year) in (1999..=2019).step_by(2).chain([2022, 2023]).enumerate() {
        for h in 0..8 {
            let size = 6 + (v * 8 + h) % 4;
            for _ in 0..size {
                rows.push((0.15, year as u16, format!("{year}-{h}")));
            }
        }
    }
    ModelDataset::from_triples(rows.iter().map(|(y, v, h)| (*y, *v, h.as_str()))).expect("non-empty")
}

pub fn reference_dataset(seed: u64) -> ModelDataset {
    simulate_dataset(&reference_structure(), &reference_params(), seed)
}

/// `clusters` athletes with a deterministic mix of sizes 2 to 6.
pub fn clustered_fixture(clusters: usize) -> ClusteredSample {
    let raw: Vec<Vec<(f64, bool)>> = (0..clusters)
        .map(|i| {
            let m = 2 + i % 5;
            (0..m)
                .map(|k| {
                    let x = 0.12 + 0.001 * ((i * 37 + k * 11) % 60) as f64;
                    (x, k % 2 == 0)
                })
                .collect()
        })
        .collect();
    ClusteredSample::from_pairs(&raw).expect("every cluster has both groups")
}
