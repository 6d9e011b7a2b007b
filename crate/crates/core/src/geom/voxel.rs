//! Voxel occupancy lattices, vote-count grids, and surface voxelization.

use super::GeomError;
use super::mesh::TriMesh;
use super::tensor::TensorBlob;
use super::vec3::{self, Vec3};

/// Axis-aligned box in world units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    /// The canonical normalized-asset domain.
    pub const UNIT: Self = Self {
        min: [-0.5, -0.5, -0.5],
        max: [0.5, 0.5, 0.5],
    };

    pub fn extent(&self) -> Vec3 {
        vec3::sub(self.max, self.min)
    }

    pub fn is_degenerate(&self) -> bool {
        let e = self.extent();
        e[0] <= 0.0 || e[1] <= 0.0 || e[2] <= 0.0
    }
}

/// Binary occupancy over an `R^3` lattice. Cells are indexed `(x, y, z)` with
/// x fastest: `linear = (z * R + y) * R + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    bounds: Bounds,
    bits: Vec<bool>,
}

/// Per-cell non-negative vote counts over the same lattice layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CountGrid {
    resolution: usize,
    bounds: Bounds,
    counts: Vec<u32>,
}

impl VoxelGrid {
    pub fn new(resolution: usize, bounds: Bounds) -> Result<Self, GeomError> {
        if resolution < 2 {
            return Err(GeomError::ResolutionTooSmall(resolution));
        }
        if bounds.is_degenerate() {
            return Err(GeomError::DegenerateExtent);
        }
        Ok(Self {
            resolution,
            bounds,
            bits: vec![false; resolution * resolution * resolution],
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution + y) * self.resolution + x
    }

    #[inline]
    pub fn coords(&self, linear: usize) -> (usize, usize, usize) {
        let r = self.resolution;
        (linear % r, (linear / r) % r, linear / (r * r))
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.linear(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.linear(x, y, z);
        self.bits[i] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn cell_size(&self) -> Vec3 {
        let e = self.bounds.extent();
        let r = self.resolution as f64;
        [e[0] / r, e[1] / r, e[2] / r]
    }

    /// World-space center of cell `(x, y, z)`; strictly inside the bounds.
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let s = self.cell_size();
        [
            self.bounds.min[0] + (x as f64 + 0.5) * s[0],
            self.bounds.min[1] + (y as f64 + 0.5) * s[1],
            self.bounds.min[2] + (z as f64 + 0.5) * s[2],
        ]
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Linear indices of occupied cells in ascending order.
    pub fn occupied_cells(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn same_domain(&self, other: &Self) -> bool {
        self.resolution == other.resolution && self.bounds == other.bounds
    }

    /// Stores occupancy as a `[R, R, R]` f32 tensor of 0/1 values
    /// (dims ordered z, y, x to match the linear layout).
    pub fn to_tensor(&self) -> TensorBlob {
        let r = self.resolution;
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        TensorBlob::new(vec![r, r, r], data).expect("occupancy tensor is always valid")
    }

    /// Inverse of `to_tensor`; any value > 0.5 counts as occupied. Bounds are
    /// not stored in the container and default to the unit domain.
    pub fn from_tensor(blob: &TensorBlob, bounds: Bounds) -> Result<Self, GeomError> {
        let dims = blob.dims();
        if dims.len() != 3 || dims[0] != dims[1] || dims[1] != dims[2] {
            return Err(GeomError::DimOverflow(format!(
                "expected cubic [R, R, R] grid, got {dims:?}"
            )));
        }
        let mut grid = Self::new(dims[0], bounds)?;
        for (bit, &v) in grid.bits.iter_mut().zip(blob.data()) {
            *bit = v > 0.5;
        }
        Ok(grid)
    }
}

impl CountGrid {
    pub fn new(resolution: usize, bounds: Bounds) -> Result<Self, GeomError> {
        if resolution < 2 {
            return Err(GeomError::ResolutionTooSmall(resolution));
        }
        if bounds.is_degenerate() {
            return Err(GeomError::DegenerateExtent);
        }
        Ok(Self {
            resolution,
            bounds,
            counts: vec![0; resolution * resolution * resolution],
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub fn to_tensor(&self) -> TensorBlob {
        let r = self.resolution;
        let data = self.counts.iter().map(|&c| c as f32).collect();
        TensorBlob::new(vec![r, r, r], data).expect("count tensor is always valid")
    }
}

/// Conservative surface voxelization over the unit domain: a cell is occupied
/// iff some triangle overlaps its box (touching counts).
pub fn voxelize(mesh: &TriMesh, resolution: usize) -> Result<VoxelGrid, GeomError> {
    voxelize_opts(mesh, resolution, false)
}

/// As `voxelize`, optionally flood-filling the enclosed interior.
pub fn voxelize_opts(
    mesh: &TriMesh,
    resolution: usize,
    fill_interior: bool,
) -> Result<VoxelGrid, GeomError> {
    if mesh.triangles.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    let mut grid = VoxelGrid::new(resolution, Bounds::UNIT)?;
    let cell = grid.cell_size();
    let half = [cell[0] * 0.5, cell[1] * 0.5, cell[2] * 0.5];
    let r = resolution;

    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle_vertices(t);
        // Cell range covered by the triangle's AABB, clamped to the grid.
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for k in 0..3 {
            let min_k = tri[0][k].min(tri[1][k]).min(tri[2][k]);
            let max_k = tri[0][k].max(tri[1][k]).max(tri[2][k]);
            let lo_idx = ((min_k - grid.bounds.min[k]) / cell[k]).floor() as i64 - 1;
            let hi_idx = ((max_k - grid.bounds.min[k]) / cell[k]).floor() as i64 + 1;
            lo[k] = lo_idx.clamp(0, r as i64 - 1) as usize;
            hi[k] = hi_idx.clamp(0, r as i64 - 1) as usize;
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    if grid.get(x, y, z) {
                        continue;
                    }
                    let center = grid.cell_center(x, y, z);
                    if tri_box_overlap(center, half, &tri) {
                        grid.set(x, y, z, true);
                    }
                }
            }
        }
    }

    if fill_interior {
        fill_enclosed(&mut grid);
    }

    if grid.occupied_count() == 0 {
        return Err(GeomError::EmptyMesh);
    }
    Ok(grid)
}

/// Marks every cell not reachable from the grid boundary through empty cells.
fn fill_enclosed(grid: &mut VoxelGrid) {
    let r = grid.resolution;
    let mut outside = vec![false; r * r * r];
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    let push = |x: usize, y: usize, z: usize,
                    outside: &mut Vec<bool>,
                    stack: &mut Vec<(usize, usize, usize)>,
                    grid: &VoxelGrid| {
        let i = grid.linear(x, y, z);
        if !outside[i] && !grid.bits[i] {
            outside[i] = true;
            stack.push((x, y, z));
        }
    };
    for a in 0..r {
        for b in 0..r {
            for (x, y, z) in [
                (0, a, b),
                (r - 1, a, b),
                (a, 0, b),
                (a, r - 1, b),
                (a, b, 0),
                (a, b, r - 1),
            ] {
                push(x, y, z, &mut outside, &mut stack, grid);
            }
        }
    }
    while let Some((x, y, z)) = stack.pop() {
        let neighbors = [
            (x.wrapping_sub(1), y, z),
            (x + 1, y, z),
            (x, y.wrapping_sub(1), z),
            (x, y + 1, z),
            (x, y, z.wrapping_sub(1)),
            (x, y, z + 1),
        ];
        for (nx, ny, nz) in neighbors {
            if nx < r && ny < r && nz < r {
                push(nx, ny, nz, &mut outside, &mut stack, grid);
            }
        }
    }
    for i in 0..grid.bits.len() {
        if !outside[i] {
            grid.bits[i] = true;
        }
    }
}

/// Separating-axis triangle/box overlap (Akenine-Möller). Touching contact
/// counts as overlap, which keeps the voxelization conservative.
fn tri_box_overlap(box_center: Vec3, half: Vec3, tri: &[Vec3; 3]) -> bool {
    let v0 = vec3::sub(tri[0], box_center);
    let v1 = vec3::sub(tri[1], box_center);
    let v2 = vec3::sub(tri[2], box_center);
    let e0 = vec3::sub(v1, v0);
    let e1 = vec3::sub(v2, v1);
    let e2 = vec3::sub(v0, v2);

    // 1. Box axes (AABB test on the triangle).
    for k in 0..3 {
        let min = v0[k].min(v1[k]).min(v2[k]);
        let max = v0[k].max(v1[k]).max(v2[k]);
        if min > half[k] || max < -half[k] {
            return false;
        }
    }

    // 2. Nine edge cross-product axes.
    let axes = |e: Vec3| {
        [
            [0.0, -e[2], e[1]],
            [e[2], 0.0, -e[0]],
            [-e[1], e[0], 0.0],
        ]
    };
    for edge in [e0, e1, e2] {
        for axis in axes(edge) {
            let p0 = vec3::dot(v0, axis);
            let p1 = vec3::dot(v1, axis);
            let p2 = vec3::dot(v2, axis);
            let rad = half[0] * axis[0].abs() + half[1] * axis[1].abs() + half[2] * axis[2].abs();
            let min = p0.min(p1).min(p2);
            let max = p0.max(p1).max(p2);
            if min > rad || max < -rad {
                return false;
            }
        }
    }

    // 3. Triangle plane vs box (box is centered at the origin here).
    let normal = vec3::cross(e0, e1);
    let d = -vec3::dot(normal, v0);
    let rad =
        half[0] * normal[0].abs() + half[1] * normal[1].abs() + half[2] * normal[2].abs();
    d.abs() <= rad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes::{icosphere, unit_cube_mesh};

    #[test]
    fn unit_cube_at_r4_occupies_shell_only() {
        let grid = voxelize(&unit_cube_mesh(), 4).unwrap();
        assert_eq!(grid.occupied_count(), 56);
        for z in 1..3 {
            for y in 1..3 {
                for x in 1..3 {
                    assert!(!grid.get(x, y, z), "interior cell ({x},{y},{z}) occupied");
                }
            }
        }
    }

    #[test]
    fn tiny_mesh_occupies_single_cell() {
        let tri = TriMesh::new(
            vec![[0.1, 0.1, 0.1], [0.15, 0.1, 0.1], [0.1, 0.15, 0.1]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let grid = voxelize(&tri, 2).unwrap();
        assert_eq!(grid.occupied_count(), 1);
        assert!(grid.get(1, 1, 1));
    }

    #[test]
    fn resolution_one_rejected() {
        assert!(matches!(
            voxelize(&unit_cube_mesh(), 1),
            Err(GeomError::ResolutionTooSmall(1))
        ));
    }

    #[test]
    fn interior_fill_closes_the_cube() {
        let open = voxelize(&unit_cube_mesh(), 4).unwrap();
        let filled = voxelize_opts(&unit_cube_mesh(), 4, true).unwrap();
        assert_eq!(open.occupied_count(), 56);
        assert_eq!(filled.occupied_count(), 64);
    }

    #[test]
    fn refinement_stays_within_one_dilated_cell() {
        // Occupancy at R, upsampled x2, must sit inside the 26-neighborhood
        // dilation of the occupancy at 2R.
        let mesh = icosphere(0.42, 1);
        let coarse = voxelize(&mesh, 8).unwrap();
        let fine = voxelize(&mesh, 16).unwrap();
        for idx in coarse.occupied_cells() {
            let (x, y, z) = coarse.coords(idx);
            for (cx, cy, cz) in [
                (2 * x, 2 * y, 2 * z),
                (2 * x + 1, 2 * y, 2 * z),
                (2 * x, 2 * y + 1, 2 * z),
                (2 * x, 2 * y, 2 * z + 1),
                (2 * x + 1, 2 * y + 1, 2 * z),
                (2 * x + 1, 2 * y, 2 * z + 1),
                (2 * x, 2 * y + 1, 2 * z + 1),
                (2 * x + 1, 2 * y + 1, 2 * z + 1),
            ] {
                let mut near = false;
                'search: for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny, nz) =
                                (cx as i64 + dx, cy as i64 + dy, cz as i64 + dz);
                            if nx >= 0
                                && ny >= 0
                                && nz >= 0
                                && (nx as usize) < 16
                                && (ny as usize) < 16
                                && (nz as usize) < 16
                                && fine.get(nx as usize, ny as usize, nz as usize)
                            {
                                near = true;
                                break 'search;
                            }
                        }
                    }
                }
                assert!(near, "child of occupied coarse cell far from fine occupancy");
            }
        }
    }

    #[test]
    fn tensor_round_trip_preserves_occupancy() {
        let grid = voxelize(&unit_cube_mesh(), 4).unwrap();
        let back = VoxelGrid::from_tensor(&grid.to_tensor(), grid.bounds()).unwrap();
        assert_eq!(grid, back);
    }

    #[test]
    fn cell_centers_stay_strictly_inside_bounds() {
        let grid = VoxelGrid::new(5, Bounds::UNIT).unwrap();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let c = grid.cell_center(x, y, z);
                    for k in 0..3 {
                        assert!(c[k] > Bounds::UNIT.min[k] && c[k] < Bounds::UNIT.max[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_and_coords_are_inverse() {
        let grid = VoxelGrid::new(6, Bounds::UNIT).unwrap();
        for idx in 0..6 * 6 * 6 {
            let (x, y, z) = grid.coords(idx);
            assert_eq!(grid.linear(x, y, z), idx);
        }
    }
}
