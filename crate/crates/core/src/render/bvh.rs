//! Bounding volume hierarchy over world-space triangles with a watertight
//! ray/triangle test.

use nalgebra::{Point3, Vector3};

use crate::geom::Aabb;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// Index into the triangle list the BVH was built from.
    pub triangle: usize,
    /// Barycentric weights of the three vertices.
    pub bary: [f64; 3],
}

#[derive(Debug, Clone)]
enum NodeKind {
    Inner { left: usize, right: usize },
    Leaf { start: usize, count: usize },
}

#[derive(Debug, Clone)]
pub struct BvhNode {
    pub bounds: Aabb,
    kind: NodeKind,
}

pub const MAX_LEAF: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<[Point3<f64>; 3]>,
    /// Leaf slot -> original triangle index.
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

fn centroid(t: &[Point3<f64>; 3]) -> Point3<f64> {
    Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0)
}

impl Bvh {
    /// Median split along the longest axis of the centroid bounds; `None`
    /// for an empty triangle list.
    pub fn build(triangles: Vec<[Point3<f64>; 3]>) -> Option<Self> {
        if triangles.is_empty() {
            return None;
        }
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Point3<f64>> = triangles.iter().map(centroid).collect();
        let mut bvh = Self {
            triangles,
            order: Vec::new(),
            nodes: Vec::new(),
        };
        let n = order.len();
        bvh.build_node(&mut order, 0, n, &centroids);
        bvh.order = order;
        Some(bvh)
    }

    fn build_node(&mut self, order: &mut [usize], start: usize, end: usize, centroids: &[Point3<f64>]) -> usize {
        let slice = &mut order[start..end];
        let bounds = slice
            .iter()
            .fold(Aabb::empty(), |b, &i| b.union(&Aabb::from_points(&self.triangles[i])));
        let idx = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds,
            kind: NodeKind::Leaf {
                start,
                count: end - start,
            },
        });
        if end - start <= MAX_LEAF {
            return idx;
        }
        let cb = Aabb::from_points(slice.iter().map(|&i| &centroids[i]));
        let axis = cb.longest_axis();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        let left = self.build_node(order, start, start + mid, centroids);
        let right = self.build_node(order, start + mid, end, centroids);
        self.nodes[idx].kind = NodeKind::Inner { left, right };
        idx
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangles(&self) -> &[[Point3<f64>; 3]] {
        &self.triangles
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Children of node `i`, or `None` for a leaf.
    pub fn children(&self, i: usize) -> Option<(usize, usize)> {
        match self.nodes[i].kind {
            NodeKind::Inner { left, right } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Original triangle indices stored in leaf `i` (empty for inner nodes).
    pub fn leaf_triangles(&self, i: usize) -> &[usize] {
        match self.nodes[i].kind {
            NodeKind::Leaf { start, count } => &self.order[start..start + count],
            NodeKind::Inner { .. } => &[],
        }
    }

    /// Nearest hit with `t_min < t < t_max`.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        self.traverse(ray, t_min, t_max, false)
    }

    /// Whether anything is hit with `t_min < t < t_max`.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        self.traverse(ray, t_min, t_max, true).is_some()
    }

    fn traverse(&self, ray: &Ray, t_min: f64, mut t_max: f64, any: bool) -> Option<Hit> {
        let inv = ray.dir.map(|d| 1.0 / d);
        let pre = WatertightRay::new(ray);
        let mut best = None;
        let mut stack = [0usize; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp]];
            if slab(&node.bounds, ray, &inv, t_min, t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &tri in &self.order[start..start + count] {
                        if let Some((t, bary)) = pre.intersect(&self.triangles[tri]) {
                            let closer = t < t_max || (t == t_max && best.is_some_and(|h: Hit| tri < h.triangle));
                            if t > t_min && closer {
                                t_max = t;
                                best = Some(Hit { t, triangle: tri, bary });
                                if any {
                                    return best;
                                }
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = slab(&self.nodes[left].bounds, ray, &inv, t_min, t_max);
                    let dr = slab(&self.nodes[right].bounds, ray, &inv, t_min, t_max);
                    // Push the farther child first so the nearer is popped next.
                    match (dl, dr) {
                        (Some(a), Some(b)) => {
                            let (near, far) = if a <= b { (left, right) } else { (right, left) };
                            stack[sp] = far;
                            stack[sp + 1] = near;
                            sp += 2;
                        }
                        (Some(_), None) => {
                            stack[sp] = left;
                            sp += 1;
                        }
                        (None, Some(_)) => {
                            stack[sp] = right;
                            sp += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

/// Entry distance of the ray into `b` within `[t_min, t_max]`.
fn slab(b: &Aabb, ray: &Ray, inv: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
    let mut lo = t_min;
    let mut hi = t_max;
    for a in 0..3 {
        let t0 = (b.min[a] - ray.origin[a]) * inv[a];
        let t1 = (b.max[a] - ray.origin[a]) * inv[a];
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        // NaN (0 * inf) leaves the interval unchanged: the ray lies in the slab plane.
        if t0 > lo {
            lo = t0;
        }
        if t1 < hi {
            hi = t1;
        }
    }
    // Widen slightly so rounding in the slab test never culls a true hit.
    if lo <= hi * (1.0 + 4.0 * f64::EPSILON) + 1e-12 {
        Some(lo)
    } else {
        None
    }
}

/// Per-ray precomputation for the watertight test of Woop, Benthin and Wald.
pub struct WatertightRay {
    origin: Point3<f64>,
    k: [usize; 3],
    s: [f64; 3],
}

impl WatertightRay {
    pub fn new(ray: &Ray) -> Self {
        let d = ray.dir;
        let kz = d.iamax();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if d[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Self {
            origin: ray.origin,
            k: [kx, ky, kz],
            s: [d[kx] / d[kz], d[ky] / d[kz], 1.0 / d[kz]],
        }
    }

    /// `(t, barycentrics)` of the hit, for any `t` (sign included).
    pub fn intersect(&self, tri: &[Point3<f64>; 3]) -> Option<(f64, [f64; 3])> {
        let [kx, ky, kz] = self.k;
        let [sx, sy, sz] = self.s;
        let a = tri[0] - self.origin;
        let b = tri[1] - self.origin;
        let c = tri[2] - self.origin;
        let ax = a[kx] - sx * a[kz];
        let ay = a[ky] - sy * a[kz];
        let bx = b[kx] - sx * b[kz];
        let by = b[ky] - sy * b[kz];
        let cx = c[kx] - sx * c[kz];
        let cy = c[ky] - sy * c[kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let t = (u * sz * a[kz] + v * sz * b[kz] + w * sz * c[kz]) / det;
        if !t.is_finite() {
            return None;
        }
        Some((t, [u / det, v / det, w / det]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [Point3<f64>; 3] {
        [Point3::from(a), Point3::from(b), Point3::from(c)]
    }

    #[test]
    fn single_triangle_centroid_hit() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let bvh = Bvh::build(vec![t]).unwrap();
        let c = centroid(&t);
        let ray = Ray {
            origin: c + Vector3::new(0.1, -0.2, 3.0),
            dir: (Vector3::new(-0.1, 0.2, -3.0)).normalize(),
        };
        let hit = bvh.intersect(&ray, 0.0, f64::INFINITY).unwrap();
        assert!((hit.bary.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let p = ray.origin + ray.dir * hit.t;
        assert!((p - c).norm() < 1e-9);
        for b in hit.bary {
            assert!((b - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_ray_misses() {
        let t = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let bvh = Bvh::build(vec![t]).unwrap();
        let ray = Ray {
            origin: Point3::new(-1.0, 0.2, 0.5),
            dir: Vector3::x(),
        };
        assert!(bvh.intersect(&ray, 0.0, f64::INFINITY).is_none());
        let inplane = Ray {
            origin: Point3::new(-1.0, 0.2, 0.0),
            dir: Vector3::x(),
        };
        assert!(bvh.intersect(&inplane, 0.0, f64::INFINITY).is_none());
    }

    #[test]
    fn empty_build() {
        assert!(Bvh::build(vec![]).is_none());
    }

    fn random_soup(n: usize, seed: u64) -> Vec<[Point3<f64>; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c = Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let mut p = || {
                    Point3::from(
                        c + Vector3::new(
                            rng.random_range(-0.3..0.3),
                            rng.random_range(-0.3..0.3),
                            rng.random_range(-0.3..0.3),
                        ),
                    )
                };
                [p(), p(), p()]
            })
            .collect()
    }

    #[test]
    fn structure_invariants() {
        let tris = random_soup(500, 1);
        let bvh = Bvh::build(tris.clone()).unwrap();
        let mut seen = vec![0usize; tris.len()];
        for i in 0..bvh.nodes().len() {
            match bvh.children(i) {
                Some((l, r)) => {
                    assert!(bvh.nodes()[i].bounds.contains(&bvh.nodes()[l].bounds));
                    assert!(bvh.nodes()[i].bounds.contains(&bvh.nodes()[r].bounds));
                }
                None => {
                    let leaf = bvh.leaf_triangles(i);
                    assert!(!leaf.is_empty() && leaf.len() <= MAX_LEAF);
                    for &t in leaf {
                        seen[t] += 1;
                        assert!(bvh.nodes()[i].bounds.contains(&Aabb::from_points(&tris[t])));
                    }
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn matches_brute_force() {
        let tris = random_soup(500, 2);
        let bvh = Bvh::build(tris.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = 0;
        for _ in 0..1000 {
            let origin = Point3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            );
            let target = Point3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let ray = Ray {
                origin,
                dir: (target - origin).normalize(),
            };
            let pre = WatertightRay::new(&ray);
            let mut brute: Option<(f64, usize)> = None;
            for (i, t) in tris.iter().enumerate() {
                if let Some((d, _)) = pre.intersect(t) {
                    if d > 0.0 && brute.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                        brute = Some((d, i));
                    }
                }
            }
            let got = bvh.intersect(&ray, 0.0, f64::INFINITY).map(|h| (h.t, h.triangle));
            assert_eq!(got, brute);
            assert_eq!(bvh.occluded(&ray, 0.0, f64::INFINITY), brute.is_some());
            hits += brute.is_some() as usize;
        }
        assert!(hits > 300, "{hits}");
    }

    #[test]
    fn shared_edge_is_watertight() {
        // Two triangles sharing the diagonal of a unit square.
        let a = tri([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
        let b = tri([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]);
        let bvh = Bvh::build(vec![a, b]).unwrap();
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let ray = Ray {
                origin: Point3::new(s, s, 1.0),
                dir: -Vector3::z(),
            };
            assert!(bvh.intersect(&ray, 0.0, f64::INFINITY).is_some(), "gap at {s}");
        }
    }
}
