//! Static 3D KD-tree for exact nearest-neighbor queries.
//!
//! Median split on the widest axis, branch-and-bound descent. Exactness
//! matters here: results must match an O(n^2) scan bitwise on distances, so
//! pruning uses the strict inequality and the same squared-distance kernel.

use crate::geom::vec3::{Vec3, dist_sq};

struct Node {
    /// Index into `points`.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        assert!(!points.is_empty(), "cannot build a kd-tree over no points");
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        tree.root = tree.build_rec(&mut order);
        tree
    }

    fn build_rec(&mut self, order: &mut [u32]) -> i32 {
        if order.is_empty() {
            return -1;
        }
        // Split on the axis with the widest spread for balanced-ish cells.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in order.iter() {
            let p = self.points[i as usize];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut axis = 0;
        for k in 1..3 {
            if hi[k] - lo[k] > hi[axis] - lo[axis] {
                axis = k;
            }
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let pa = self.points[a as usize][axis];
            let pb = self.points[b as usize][axis];
            pa.partial_cmp(&pb).expect("finite coordinates")
        });
        let point = order[mid];
        let (left_slice, rest) = order.split_at_mut(mid);
        let right_slice = &mut rest[1..];
        let left = self.build_rec(left_slice);
        let right = self.build_rec(right_slice);
        self.nodes.push(Node {
            point,
            axis: axis as u8,
            left,
            right,
        });
        (self.nodes.len() - 1) as i32
    }

    /// Exact nearest neighbor: (point index, squared distance).
    pub fn nearest(&self, query: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(self.root, query, &mut best);
        best
    }

    fn nearest_rec(&self, node: i32, query: Vec3, best: &mut (usize, f64)) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point as usize];
        let d = dist_sq(query, p);
        if d < best.1 {
            *best = (n.point as usize, d);
        }
        let axis = n.axis as usize;
        let delta = query[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, query, best);
        if delta * delta < best.1 {
            self.nearest_rec(far, query, best);
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Vec3], q: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, &p) in points.iter().enumerate() {
            let d = dist_sq(q, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for round in 0..20 {
            let n = 50 + round * 97;
            let points: Vec<Vec3> = (0..n)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            let tree = KdTree::build(&points);
            for _ in 0..200 {
                let q = [
                    rng.random::<f64>() * 1.5 - 0.25,
                    rng.random::<f64>() * 1.5 - 0.25,
                    rng.random::<f64>() * 1.5 - 0.25,
                ];
                let (ti, td) = tree.nearest(q);
                let (bi, bd) = brute_force(&points, q);
                assert_eq!(td.to_bits(), bd.to_bits(), "distance mismatch");
                assert_eq!(ti, bi, "index mismatch at equal distance");
            }
        }
    }

    #[test]
    fn self_queries_return_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let points: Vec<Vec3> = (0..500)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let tree = KdTree::build(&points);
        for (i, &p) in points.iter().enumerate() {
            let (idx, d) = tree.nearest(p);
            assert_eq!(d, 0.0);
            assert_eq!(idx, i);
        }
    }

    #[test]
    fn duplicate_points_handled() {
        let points = vec![[1.0, 1.0, 1.0]; 16];
        let tree = KdTree::build(&points);
        let (_, d) = tree.nearest([1.0, 1.0, 1.5]);
        assert_eq!(d, 0.25);
    }
}
