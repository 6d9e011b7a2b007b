//! Area-weighted surface sampling into point clouds with face normals.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GeomError;
use super::mesh::TriMesh;
use super::vec3::{self, Vec3};

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Unit normals, one per point, when the source population carried them.
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Draws exactly `n` points with triangle choice proportional to area and
/// barycentric-uniform position inside the chosen triangle. Each point gets
/// its triangle's face normal. Deterministic per `seed`.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeomError> {
    assert!(n >= 1, "sample count must be >= 1");
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0f64;
    for t in 0..mesh.triangles.len() {
        total += mesh.face_area(t);
        cumulative.push(total);
    }
    if total <= 0.0 || mesh.triangles.is_empty() {
        return Err(GeomError::EmptyMesh);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let tri = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(tri);
        let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p = vec3::add(
            a,
            vec3::add(
                vec3::scale(vec3::sub(b, a), u),
                vec3::scale(vec3::sub(c, a), v),
            ),
        );
        points.push(p);
        normals.push(vec3::normalize(mesh.face_normal_raw(tri)).unwrap_or([0.0, 0.0, 1.0]));
    }
    Ok(PointCloud {
        points,
        normals: Some(normals),
    })
}
