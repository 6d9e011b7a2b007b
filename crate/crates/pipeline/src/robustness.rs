//! Mask-radius perturbation study: dilate, count, compare against the
//! original mask.

use serde::{Deserialize, Serialize};

use evk_core::geom::VoxelGrid;
use evk_core::maskvote::{VoteError, dilate_mask, mask_iou};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub percent: f64,
    pub voxel_count: usize,
    pub iou_vs_original: f64,
}

/// One row per percent, sorted ascending. IoU against the undilated mask is
/// non-increasing and the voxel count non-decreasing in the dilation radius.
pub fn robustness_study(
    mask: &VoxelGrid,
    percents: &[f64],
) -> Result<Vec<RobustnessRow>, VoteError> {
    let mut sorted: Vec<f64> = percents.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite percents"));
    let mut rows = Vec::with_capacity(sorted.len());
    for percent in sorted {
        let dilated = dilate_mask(mask, percent)?;
        rows.push(RobustnessRow {
            percent,
            voxel_count: dilated.occupied_count(),
            iou_vs_original: mask_iou(&dilated, mask)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evk_core::geom::shapes::icosphere;
    use evk_core::geom::voxelize;

    #[test]
    fn zero_percent_is_identity_row() {
        let mask = voxelize(&icosphere(0.4, 1), 12).unwrap();
        let rows = robustness_study(&mask, &[0.0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].iou_vs_original, 1.0);
        assert_eq!(rows[0].voxel_count, mask.occupied_count());
    }

    #[test]
    fn table_trends_match_dilation_direction() {
        let mask = voxelize(&icosphere(0.42, 2), 32).unwrap();
        let rows = robustness_study(&mask, &[9.0, 18.0, 27.0]).unwrap();
        for pair in rows.windows(2) {
            assert!(pair[1].voxel_count > pair[0].voxel_count);
            assert!(pair[1].iou_vs_original < pair[0].iou_vs_original);
        }
        assert!(rows[0].iou_vs_original < 1.0);
    }

    #[test]
    fn rows_sorted_by_percent() {
        let mask = voxelize(&icosphere(0.3, 1), 10).unwrap();
        let rows = robustness_study(&mask, &[27.0, 9.0, 18.0]).unwrap();
        let percents: Vec<f64> = rows.iter().map(|r| r.percent).collect();
        assert_eq!(percents, vec![9.0, 18.0, 27.0]);
    }

    #[test]
    fn empty_mask_rejected() {
        let mask = VoxelGrid::new(4, evk_core::geom::voxel::Bounds::UNIT).unwrap();
        assert!(robustness_study(&mask, &[9.0]).is_err());
    }
}
