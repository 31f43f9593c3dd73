//! Bounding volume hierarchy over triangles, built with a full-sweep SAH.

use crate::geometry::{Aabb, Ray, Vec3};

/// Maximum triangles per leaf.
pub const MAX_LEAF: usize = 4;

/// Barycentric slack that makes shared edges watertight.
const EDGE_EPSILON: f64 = 1e-10;
/// Hits closer than this are ignored.
pub const T_MIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: u32,
    pub u: f64,
    pub v: f64,
}

impl Hit {
    /// Nearest-first ordering with the triangle id as tie breaker.
    #[inline]
    fn closer_than(&self, other: &Hit) -> bool {
        self.t < other.t || (self.t == other.t && self.triangle < other.triangle)
    }
}

/// Möller-Trumbore with a small inclusive tolerance on the barycentrics.
#[inline]
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3], t_max: f64) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.direction.cross(e2);
    let det = e1.dot(p);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(p) * inv;
    if !(-EDGE_EPSILON..=1.0 + EDGE_EPSILON).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.direction.dot(q) * inv;
    if v < -EDGE_EPSILON || u + v > 1.0 + EDGE_EPSILON {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > T_MIN && t < t_max {
        Some((t, u, v))
    } else {
        None
    }
}

/// Reference nearest-hit search over every triangle.
pub fn brute_force_intersect(triangles: &[[Vec3; 3]], ray: &Ray) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, tri) in triangles.iter().enumerate() {
        if let Some((t, u, v)) = intersect_triangle(ray, tri, f64::INFINITY) {
            let hit = Hit {
                t,
                triangle: i as u32,
                u,
                v,
            };
            if best.is_none_or(|b| hit.closer_than(&b)) {
                best = Some(hit);
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// First child index for interior nodes, first entry in `order` for leaves.
    start: u32,
    /// Zero for interior nodes.
    count: u32,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    triangles: Vec<[Vec3; 3]>,
}

impl Bvh {
    pub fn build(triangles: Vec<[Vec3; 3]>) -> Self {
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let bounds: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::EMPTY;
                t.iter().for_each(|&p| b.grow(p));
                b.padded()
            })
            .collect();
        let centroids: Vec<Vec3> = bounds.iter().map(Aabb::center).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len().max(1));
        nodes.push(Node {
            bounds: Aabb::EMPTY,
            start: 0,
            count: 0,
        });
        if !triangles.is_empty() {
            build_node(&mut nodes, 0, &mut order, 0, &bounds, &centroids);
        }
        Self {
            nodes,
            order,
            triangles,
        }
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Triangle ids per leaf, for structural checks.
    pub fn leaves(&self) -> Vec<&[u32]> {
        self.nodes
            .iter()
            .filter(|n| n.count > 0)
            .map(|n| &self.order[n.start as usize..(n.start + n.count) as usize])
            .collect()
    }

    /// Nearest hit with `t` in `(T_MIN, inf)`.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.triangles.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut best: Option<Hit> = None;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        if self.nodes[0].bounds.hit(ray.origin, inv, f64::INFINITY).is_some() {
            stack.push(0);
        }
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            let limit = best.map_or(f64::INFINITY, |b| b.t);
            if node.count > 0 {
                for &tri in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    // inclusive limit keeps equal-t ties visible to the id tie break
                    if let Some((t, u, v)) = intersect_triangle(ray, &self.triangles[tri as usize], next_up(limit)) {
                        let hit = Hit { t, triangle: tri, u, v };
                        if best.is_none_or(|b| hit.closer_than(&b)) {
                            best = Some(hit);
                        }
                    }
                }
                continue;
            }
            let (l, r) = (node.start, node.start + 1);
            let tl = self.nodes[l as usize].bounds.hit(ray.origin, inv, limit);
            let tr = self.nodes[r as usize].bounds.hit(ray.origin, inv, limit);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    // push the farther child first so the nearer one pops next
                    if a <= b {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                (Some(_), None) => stack.push(l),
                (None, Some(_)) => stack.push(r),
                (None, None) => {}
            }
        }
        best
    }

    /// True if any triangle is hit with `t` in `(T_MIN, t_max)`.
    pub fn occluded(&self, ray: &Ray, t_max: f64) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if node.bounds.hit(ray.origin, inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let tris = &self.order[node.start as usize..(node.start + node.count) as usize];
                if tris
                    .iter()
                    .any(|&t| intersect_triangle(ray, &self.triangles[t as usize], t_max).is_some())
                {
                    return true;
                }
            } else {
                stack.push(node.start);
                stack.push(node.start + 1);
            }
        }
        false
    }
}

#[inline]
fn next_up(x: f64) -> f64 {
    if x.is_finite() {
        f64::from_bits(x.to_bits() + 1)
    } else {
        x
    }
}

fn build_node(nodes: &mut Vec<Node>, index: usize, order: &mut [u32], offset: usize, bounds: &[Aabb], centroids: &[Vec3]) {
    let mut node_bounds = Aabb::EMPTY;
    let mut centroid_bounds = Aabb::EMPTY;
    for &t in order.iter() {
        node_bounds = node_bounds.union(bounds[t as usize]);
        centroid_bounds.grow(centroids[t as usize]);
    }
    nodes[index].bounds = node_bounds;
    let n = order.len();
    if n <= MAX_LEAF {
        nodes[index].start = offset as u32;
        nodes[index].count = n as u32;
        return;
    }

    let mut best: Option<(f64, usize, usize)> = None;
    let extent = centroid_bounds.extent();
    for axis in 0..3 {
        if extent[axis] <= 0.0 && best.is_some() {
            continue;
        }
        order.sort_by(|&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let mut right_area = vec![0.0; n];
        let mut acc = Aabb::EMPTY;
        for i in (1..n).rev() {
            acc = acc.union(bounds[order[i] as usize]);
            right_area[i] = acc.surface_area();
        }
        let mut acc = Aabb::EMPTY;
        for i in 1..n {
            acc = acc.union(bounds[order[i - 1] as usize]);
            let cost = acc.surface_area() * i as f64 + right_area[i] * (n - i) as f64;
            if best.is_none_or(|b| cost < b.0) {
                best = Some((cost, axis, i));
            }
        }
    }
    let (_, axis, split) = best.expect("at least one split candidate");
    order.sort_by(|&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });

    let left = nodes.len();
    let blank = Node {
        bounds: Aabb::EMPTY,
        start: 0,
        count: 0,
    };
    nodes.push(blank);
    nodes.push(blank);
    nodes[index].start = left as u32;
    nodes[index].count = 0;
    let (lo, hi) = order.split_at_mut(split);
    build_node(nodes, left, lo, offset, bounds, centroids);
    build_node(nodes, left + 1, hi, offset + split, bounds, centroids);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::cuboid;
    use crate::rng::StreamRng;

    fn cube_triangles(center: Vec3, half: f64) -> Vec<[Vec3; 3]> {
        let m = cuboid(center, Vec3::splat(half));
        (0..m.triangles.len()).map(|i| m.triangle(i)).collect()
    }

    #[test]
    fn ray_through_cube_center_hits_near_face() {
        let bvh = Bvh::build(cube_triangles(Vec3::splat(0.5), 0.5));
        let ray = Ray::new(Vec3::new(0.5, 0.5, -3.0), Vec3::new(0.0, 0.0, 1.0));
        let hit = bvh.intersect(&ray).unwrap();
        assert_eq!(hit.t, 3.0);
        let diag = Ray::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let hit = bvh.intersect(&diag).unwrap();
        assert!((hit.t - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn miss_outside_bounds() {
        let bvh = Bvh::build(cube_triangles(Vec3::ZERO, 1.0));
        let ray = Ray::new(Vec3::new(5.0, 5.0, 5.0), Vec3::new(1.0, 0.0, 0.0));
        assert!(bvh.intersect(&ray).is_none());
        assert!(!bvh.occluded(&ray, f64::INFINITY));
        assert!(Bvh::build(Vec::new()).intersect(&ray).is_none());
    }

    #[test]
    fn leaves_partition_triangles() {
        let mut rng = StreamRng::new(1, 1, 1);
        let tris: Vec<[Vec3; 3]> = (0..500)
            .map(|_| {
                let c = Vec3::new(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));
                [c, c + Vec3::new(rng.unit(), 0.1, 0.0), c + Vec3::new(0.0, rng.unit(), 0.2)]
            })
            .collect();
        let bvh = Bvh::build(tris);
        let mut seen = vec![0; 500];
        for leaf in bvh.leaves() {
            assert!(!leaf.is_empty() && leaf.len() <= MAX_LEAF);
            for &t in leaf {
                seen[t as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn matches_brute_force_on_random_rays() {
        let mut rng = StreamRng::new(42, 0, 0);
        let mut tris = Vec::new();
        for _ in 0..8 {
            let c = Vec3::new(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            tris.extend(cube_triangles(c, rng.uniform(0.1, 0.8)));
        }
        let bvh = Bvh::build(tris.clone());
        for _ in 0..2000 {
            let o = Vec3::new(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
            let d = Vec3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            if d.length() < 1e-3 {
                continue;
            }
            let ray = Ray::new(o, d);
            let expected = brute_force_intersect(&tris, &ray);
            assert_eq!(bvh.intersect(&ray), expected);
            assert_eq!(bvh.occluded(&ray, f64::INFINITY), expected.is_some());
        }
    }
}
