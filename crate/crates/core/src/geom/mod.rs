//! Geometry substrate: meshes, point clouds, voxel grids, cameras, masks,
//! tensors, and their file formats.

pub mod camera;
pub mod mask;
pub mod mesh;
pub mod pointcloud;
pub mod shapes;
pub mod tensor;
pub mod vec3;
pub mod voxel;

mod error;

pub use camera::{View, load_views, ring_views, save_views};
pub use error::GeomError;
pub use mask::Mask2D;
pub use mesh::{LoadStats, NormalizeTransform, TriMesh, load_mesh, normalize_unit_cube};
pub use pointcloud::{PointCloud, sample_surface};
pub use tensor::{TensorBlob, read_tensor, write_tensor};
pub use voxel::{Bounds, CountGrid, VoxelGrid, voxelize, voxelize_opts};
