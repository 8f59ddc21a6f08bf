//! Fixtures shared by the benchmarks.

use trajanon::synthetic::{road_network_tracks, SyntheticConfig};
use trajanon::trajectory::{build_dataset, DEFAULT_MIN_LEN};
use trajanon::{BoundingBox, GenTrajectory, GridPair};

/// `n` synthetic trajectories quantized at `height`.
pub fn corpus(n: usize, height: u32, seed: u64) -> (Vec<GenTrajectory>, GridPair) {
    let bbox = BoundingBox::default();
    let grids = bbox.grids(height).expect("valid height");
    let cfg = SyntheticConfig {
        trajectories: n,
        users: (n / 9).max(1),
        seed,
        ..Default::default()
    };
    let tracks = road_network_tracks(&bbox, &cfg).expect("valid corpus config");
    let data = build_dataset(&tracks, &bbox, &grids, DEFAULT_MIN_LEN);
    (data.iter().map(GenTrajectory::from).collect(), grids)
}
