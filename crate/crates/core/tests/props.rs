//! Property tests for the format and thresholding invariants.

use proptest::prelude::*;

use evk_core::geom::voxel::Bounds;
use evk_core::geom::{CountGrid, TensorBlob, read_tensor, write_tensor};
use evk_core::maskvote::{VoteConfig, threshold_mask};

fn tmp_path(tag: u64) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("evk-props-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{tag}.evk"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// write -> read is the identity, bit for bit, for any finite tensor.
    #[test]
    fn tensor_round_trip_is_identity(
        dims in prop::collection::vec(1usize..5, 1..4),
        raw in prop::collection::vec(-1.0e30f32..1.0e30, 1..200),
        tag in any::<u64>(),
    ) {
        let count: usize = dims.iter().product();
        prop_assume!(count <= raw.len());
        let data = raw[..count].to_vec();
        let blob = TensorBlob::new(dims, data).unwrap();
        let path = tmp_path(tag);
        write_tensor(&path, &blob).unwrap();
        let back = read_tensor(&path).unwrap();
        let _ = std::fs::remove_file(&path);
        prop_assert_eq!(blob.dims(), back.dims());
        for (a, b) in blob.data().iter().zip(back.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// Raising tau can only shrink the kept voxel set, for any vote counts.
    #[test]
    fn threshold_is_monotone_in_tau(
        counts in prop::collection::vec(0u32..=12, 64..=64),
        tau_lo in 0.05f64..1.0,
        tau_hi in 0.05f64..1.0,
    ) {
        let (tau_lo, tau_hi) = if tau_lo <= tau_hi { (tau_lo, tau_hi) } else { (tau_hi, tau_lo) };
        let mut grid = CountGrid::new(4, Bounds::UNIT).unwrap();
        grid.counts_mut().copy_from_slice(&counts);
        let wide = threshold_mask(&grid, &VoteConfig::new(tau_lo, 12));
        let tight = threshold_mask(&grid, &VoteConfig::new(tau_hi, 12));
        for (w, t) in wide.bits().iter().zip(tight.bits()) {
            prop_assert!(*w || !*t, "tighter tau kept a voxel the looser one dropped");
        }
    }
}
