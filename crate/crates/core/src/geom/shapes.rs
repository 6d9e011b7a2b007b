//! Procedural meshes used as fixtures and CLI demo inputs.

use super::mesh::TriMesh;
use super::vec3::{self, Vec3};

/// Axis-aligned cube spanning [-0.5, 0.5]^3: 8 vertices, 12 triangles,
/// outward winding.
pub fn unit_cube_mesh() -> TriMesh {
    let h = 0.5;
    let vertices = vec![
        [-h, -h, -h],
        [h, -h, -h],
        [h, h, -h],
        [-h, h, -h],
        [-h, -h, h],
        [h, -h, h],
        [h, h, h],
        [-h, h, h],
    ];
    let triangles = vec![
        // -z
        [0, 2, 1],
        [0, 3, 2],
        // +z
        [4, 5, 6],
        [4, 6, 7],
        // -y
        [0, 1, 5],
        [0, 5, 4],
        // +y
        [3, 7, 6],
        [3, 6, 2],
        // -x
        [0, 4, 7],
        [0, 7, 3],
        // +x
        [1, 2, 6],
        [1, 6, 5],
    ];
    TriMesh {
        vertices,
        triangles,
        normals: None,
    }
}

/// Icosphere of the given radius centered at the origin.
/// `subdivisions` = 0 gives the raw icosahedron (20 faces); each level
/// quadruples the face count.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in &mut vertices {
        *v = vec3::normalize(*v).unwrap();
    }
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint_cache: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vs: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint_cache.entry(key).or_insert_with(|| {
                let m = vec3::normalize(vec3::scale(vec3::add(vs[a], vs[b]), 0.5)).unwrap();
                vs.push(m);
                vs.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }

    for v in &mut vertices {
        *v = vec3::scale(*v, radius);
    }
    TriMesh {
        vertices,
        triangles,
        normals: None,
    }
}

/// Applies an affine map `p -> R * diag(axes) * p` to every vertex; with a
/// rotation `r` this turns an icosphere into an arbitrary ellipsoid.
pub fn transform_vertices(mesh: &TriMesh, axes: Vec3, r: &super::vec3::Mat3) -> TriMesh {
    let vertices = mesh
        .vertices
        .iter()
        .map(|&v| super::vec3::mat3_mul_vec(r, [v[0] * axes[0], v[1] * axes[1], v[2] * axes[2]]))
        .collect();
    TriMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        normals: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_has_expected_counts() {
        let m = unit_cube_mesh();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        let total_area: f64 = (0..12).map(|t| m.face_area(t)).sum();
        assert!((total_area - 6.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_faces_quadruple() {
        assert_eq!(icosphere(1.0, 0).triangles.len(), 20);
        assert_eq!(icosphere(1.0, 2).triangles.len(), 320);
    }

    #[test]
    fn icosphere_vertices_on_sphere() {
        let m = icosphere(0.4, 1);
        for v in &m.vertices {
            assert!((vec3::length(*v) - 0.4).abs() < 1e-12);
        }
    }
}
