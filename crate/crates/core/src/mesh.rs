//! Triangle meshes with named groups: built-in procedural objects and a
//! minimal Wavefront OBJ importer.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("OBJ parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no triangles")]
    Empty,
    #[error("unknown builtin object {0:?}")]
    UnknownBuiltin(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Group index of each triangle.
    pub triangle_groups: Vec<u32>,
    pub group_names: Vec<String>,
}

impl Mesh {
    pub fn group_count(&self) -> usize {
        self.group_names.len()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.positions[a as usize], self.positions[b as usize], self.positions[c as usize]]
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for &p in &self.positions {
            b.grow(p);
        }
        b
    }

    fn group_index(&mut self, name: &str) -> u32 {
        match self.group_names.iter().position(|g| g == name) {
            Some(i) => i as u32,
            None => {
                self.group_names.push(name.to_string());
                (self.group_names.len() - 1) as u32
            }
        }
    }

    /// Appends `part` into the named group.
    pub fn append(&mut self, group: &str, part: Mesh) {
        let g = self.group_index(group);
        let offset = self.positions.len() as u32;
        self.positions.extend(part.positions);
        for t in part.triangles {
            self.triangles.push([t[0] + offset, t[1] + offset, t[2] + offset]);
            self.triangle_groups.push(g);
        }
    }

    /// Signed enclosed volume; positive for closed meshes with outward winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    /// True when every directed edge is matched by exactly one opposite edge.
    pub fn is_closed(&self) -> bool {
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a, b)).or_default() += 1;
            }
        }
        edges.iter().all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Recenters the bounding box on the origin, scales so the farthest
    /// vertex sits at `radius`, then applies a yaw rotation.
    pub fn normalized(&self, radius: f64, yaw: f64) -> Mesh {
        let center = self.bounds().center();
        let reach = self
            .positions
            .iter()
            .map(|&p| (p - center).length())
            .fold(0.0, f64::max);
        let scale = if reach > 0.0 { radius / reach } else { 1.0 };
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = ((*p - center) * scale).rotate_y(yaw);
        }
        out
    }
}

// ---------------------------------------------------------------- primitives

pub fn cuboid(center: Vec3, half: Vec3) -> Mesh {
    let mut positions = Vec::with_capacity(8);
    for i in 0..8 {
        let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
        positions.push(center + Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
    }
    // corner index = x | y<<1 | z<<2
    let quads: [[u32; 4]; 6] = [
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    single_group(positions, triangles)
}

pub fn uv_sphere(center: Vec3, radius: f64, stacks: u32, slices: u32) -> Mesh {
    let mut positions = vec![center + Vec3::new(0.0, radius, 0.0)];
    for i in 1..stacks {
        let phi = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let theta = 2.0 * PI * j as f64 / slices as f64;
            positions.push(
                center + Vec3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin()) * radius,
            );
        }
    }
    let south = positions.len() as u32;
    positions.push(center - Vec3::new(0.0, radius, 0.0));
    let ring = |i: u32, j: u32| 1 + (i - 1) * slices + (j % slices);
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j + 1), ring(1, j)]);
        triangles.push([south, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    single_group(positions, triangles)
}

/// Solid of revolution about +Y through `base`: a closed frustum with
/// bottom radius `r0` and top radius `r1` (a zero radius gives an apex).
pub fn frustum(base: Vec3, r0: f64, r1: f64, height: f64, slices: u32) -> Mesh {
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    let bottom_center = 0u32;
    positions.push(base);
    let top_center = 1u32;
    positions.push(base + Vec3::new(0.0, height, 0.0));
    let ring = |r: f64, y: f64, positions: &mut Vec<Vec3>| -> Option<u32> {
        if r == 0.0 {
            return None;
        }
        let start = positions.len() as u32;
        for j in 0..slices {
            let theta = 2.0 * PI * j as f64 / slices as f64;
            positions.push(base + Vec3::new(r * theta.cos(), y, r * theta.sin()));
        }
        Some(start)
    };
    let lower = ring(r0, 0.0, &mut positions);
    let upper = ring(r1, height, &mut positions);
    for j in 0..slices {
        let k = (j + 1) % slices;
        match (lower, upper) {
            (Some(lo), Some(up)) => {
                triangles.push([bottom_center, lo + j, lo + k]);
                triangles.push([top_center, up + k, up + j]);
                triangles.push([lo + j, up + j, up + k]);
                triangles.push([lo + j, up + k, lo + k]);
            }
            (Some(lo), None) => {
                triangles.push([bottom_center, lo + j, lo + k]);
                triangles.push([lo + j, top_center, lo + k]);
            }
            (None, Some(up)) => {
                triangles.push([top_center, up + k, up + j]);
                triangles.push([bottom_center, up + j, up + k]);
            }
            (None, None) => {}
        }
    }
    // drop unused cap centers so the mesh stays manifold
    let mut mesh = single_group(positions, triangles);
    compact(&mut mesh);
    mesh
}

/// Torus around +Y.
pub fn torus(center: Vec3, major: f64, minor: f64, rings: u32, sides: u32) -> Mesh {
    let mut positions = Vec::new();
    for i in 0..rings {
        let u = 2.0 * PI * i as f64 / rings as f64;
        for j in 0..sides {
            let v = 2.0 * PI * j as f64 / sides as f64;
            let r = major + minor * v.cos();
            positions.push(center + Vec3::new(r * u.cos(), minor * v.sin(), r * u.sin()));
        }
    }
    let idx = |i: u32, j: u32| (i % rings) * sides + (j % sides);
    let mut triangles = Vec::new();
    for i in 0..rings {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    single_group(positions, triangles)
}

fn single_group(positions: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Mesh {
    let n = triangles.len();
    Mesh {
        positions,
        triangles,
        triangle_groups: vec![0; n],
        group_names: vec!["default".into()],
    }
}

fn compact(mesh: &mut Mesh) {
    let mut remap = vec![u32::MAX; mesh.positions.len()];
    let mut positions = Vec::new();
    for t in &mut mesh.triangles {
        for v in t.iter_mut() {
            let old = *v as usize;
            if remap[old] == u32::MAX {
                remap[old] = positions.len() as u32;
                positions.push(mesh.positions[old]);
            }
            *v = remap[old];
        }
    }
    mesh.positions = positions;
}

// ---------------------------------------------------------------- builtins

/// Identifiers of the bundled multi-group objects.
pub const BUILTIN_OBJECTS: &[&str] = &[
    "sphere_on_box",
    "torus_with_core",
    "chair",
    "table",
    "snowman",
    "mushroom",
    "lamp",
    "dumbbell",
];

pub fn builtin_mesh(name: &str) -> Result<Mesh, MeshError> {
    let v = Vec3::new;
    let mut m = Mesh::default();
    match name {
        "sphere_on_box" => {
            m.append("base", cuboid(v(0.0, -0.4, 0.0), v(0.6, 0.4, 0.6)));
            m.append("ball", uv_sphere(v(0.0, 0.45, 0.0), 0.45, 16, 24));
        }
        "torus_with_core" => {
            m.append("ring", torus(Vec3::ZERO, 0.7, 0.25, 32, 16));
            m.append("core", uv_sphere(Vec3::ZERO, 0.35, 12, 16));
        }
        "chair" => {
            m.append("seat", cuboid(v(0.0, 0.0, 0.0), v(0.5, 0.06, 0.5)));
            for (x, z) in [(-0.42, -0.42), (0.42, -0.42), (-0.42, 0.42), (0.42, 0.42)] {
                m.append("legs", cuboid(v(x, -0.5, z), v(0.05, 0.44, 0.05)));
            }
            m.append("back", cuboid(v(0.0, 0.55, -0.45), v(0.5, 0.5, 0.05)));
        }
        "table" => {
            m.append("top", cuboid(v(0.0, 0.3, 0.0), v(0.9, 0.05, 0.6)));
            for (x, z) in [(-0.8, -0.5), (0.8, -0.5), (-0.8, 0.5), (0.8, 0.5)] {
                m.append("legs", frustum(v(x, -0.45, z), 0.05, 0.04, 0.7, 12));
            }
        }
        "snowman" => {
            m.append("body", uv_sphere(v(0.0, -0.45, 0.0), 0.5, 16, 24));
            m.append("body", uv_sphere(v(0.0, 0.2, 0.0), 0.35, 14, 20));
            m.append("head", uv_sphere(v(0.0, 0.7, 0.0), 0.22, 12, 16));
            m.append("hat", frustum(v(0.0, 0.85, 0.0), 0.15, 0.15, 0.25, 16));
        }
        "mushroom" => {
            m.append("stem", frustum(v(0.0, -0.6, 0.0), 0.22, 0.16, 0.7, 20));
            m.append("cap", frustum(v(0.0, 0.05, 0.0), 0.75, 0.0, 0.5, 28));
        }
        "lamp" => {
            m.append("base", frustum(v(0.0, -0.8, 0.0), 0.4, 0.35, 0.1, 24));
            m.append("pole", frustum(v(0.0, -0.7, 0.0), 0.04, 0.04, 1.0, 12));
            m.append("shade", frustum(v(0.0, 0.2, 0.0), 0.5, 0.25, 0.5, 24));
        }
        "dumbbell" => {
            m.append("weights", uv_sphere(v(-0.7, 0.0, 0.0), 0.3, 14, 20));
            m.append("weights", uv_sphere(v(0.7, 0.0, 0.0), 0.3, 14, 20));
            let mut bar = frustum(v(0.0, -0.8, 0.0), 0.07, 0.07, 1.6, 12);
            // lay the bar along X
            for p in &mut bar.positions {
                *p = Vec3::new(-p.y, p.x, p.z);
            }
            m.append("bar", bar);
        }
        other => return Err(MeshError::UnknownBuiltin(other.to_string())),
    }
    Ok(m)
}

// ---------------------------------------------------------------- OBJ import

/// Loads the triangulated subset of OBJ: `v`, `vn`, `vt` (ignored), `f`
/// with any index form, and `g`/`o` groups. Polygons are fan-triangulated.
pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut mesh = Mesh::default();
    let mut group: Option<u32> = None;
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let err = |message: String| MeshError::Parse {
            line: line_no + 1,
            message,
        };
        match tag {
            "v" => {
                let c: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad coordinate {s:?}"))))
                    .collect::<Result<_, _>>()?;
                if c.len() != 3 || c.iter().any(|v| !v.is_finite()) {
                    return Err(err("vertex needs three finite coordinates".into()));
                }
                mesh.positions.push(Vec3::new(c[0], c[1], c[2]));
            }
            "g" | "o" => {
                let name = parts.collect::<Vec<_>>().join(" ");
                let name = if name.is_empty() { "default".to_string() } else { name };
                group = Some(mesh.group_index(&name));
            }
            "f" => {
                let n = mesh.positions.len() as i64;
                let idx: Vec<u32> = parts
                    .map(|p| {
                        let first = p.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| err(format!("bad face index {p:?}")))?;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(err(format!("face index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least three vertices".into()));
                }
                let g = match group {
                    Some(g) => g,
                    None => {
                        let g = mesh.group_index("default");
                        group = Some(g);
                        g
                    }
                };
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                    mesh.triangle_groups.push(g);
                }
            }
            _ => {}
        }
    }
    if mesh.triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    // groups declared without faces carry no material slot
    let used: Vec<bool> = (0..mesh.group_names.len())
        .map(|g| mesh.triangle_groups.contains(&(g as u32)))
        .collect();
    if used.iter().any(|u| !u) {
        let mut remap = vec![0u32; used.len()];
        let mut names = Vec::new();
        for (g, name) in mesh.group_names.iter().enumerate() {
            if used[g] {
                remap[g] = names.len() as u32;
                names.push(name.clone());
            }
        }
        for g in &mut mesh.triangle_groups {
            *g = remap[*g as usize];
        }
        mesh.group_names = names;
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT_CUBE: &str = "\
# unit cube
o cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
vn 0 0 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2/1/1 3/1/1 7/1/1 6/1/1
f 3 4 8 7
f -4 -1 -5 -8
";

    #[test]
    fn obj_unit_cube() {
        let mesh = parse_obj(UNIT_CUBE).unwrap();
        assert_eq!(mesh.triangles.len(), 12);
        let b = mesh.bounds();
        assert_eq!(b.min, Vec3::ZERO);
        assert_eq!(b.max, Vec3::splat(1.0));
        assert!(mesh.is_closed());
        assert!((mesh.signed_volume() - 1.0).abs() < 1e-12);
        assert_eq!(mesh.group_names, vec!["cube".to_string()]);
    }

    #[test]
    fn obj_errors() {
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 3\n"), Err(MeshError::Parse { line: 2, .. })));
        assert!(matches!(parse_obj("v 0 0\n"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("v 0 0 0\n"), Err(MeshError::Empty)));
    }

    #[test]
    fn primitives_are_closed_and_outward() {
        let parts = [
            cuboid(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0)),
            uv_sphere(Vec3::ZERO, 1.0, 8, 12),
            frustum(Vec3::ZERO, 1.0, 0.5, 2.0, 10),
            frustum(Vec3::ZERO, 1.0, 0.0, 2.0, 10),
            frustum(Vec3::ZERO, 0.0, 1.0, 2.0, 10),
            torus(Vec3::ZERO, 1.0, 0.3, 12, 8),
        ];
        for (i, m) in parts.iter().enumerate() {
            assert!(m.is_closed(), "primitive {i} is open");
            assert!(m.signed_volume() > 0.0, "primitive {i} is inward");
        }
        let b = cuboid(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0));
        assert!((b.signed_volume() - 48.0).abs() < 1e-12);
    }

    #[test]
    fn builtins_have_groups_and_are_closed() {
        assert!(BUILTIN_OBJECTS.len() >= 6);
        for name in BUILTIN_OBJECTS {
            let m = builtin_mesh(name).unwrap();
            assert!(m.group_count() >= 2, "{name}");
            assert!(m.is_closed(), "{name} not closed");
            for g in 0..m.group_count() as u32 {
                let part = Mesh {
                    positions: m.positions.clone(),
                    triangles: m
                        .triangles
                        .iter()
                        .zip(&m.triangle_groups)
                        .filter(|(_, &tg)| tg == g)
                        .map(|(t, _)| *t)
                        .collect(),
                    ..Default::default()
                };
                assert!(part.signed_volume() > 0.0, "{name} group {g} not outward");
            }
        }
        assert!(builtin_mesh("teapot").is_err());
    }

    #[test]
    fn normalization_fits_radius() {
        let m = builtin_mesh("chair").unwrap().normalized(1.0, 0.7);
        let reach = m.positions.iter().map(|p| p.length()).fold(0.0, f64::max);
        assert!((reach - 1.0).abs() < 1e-9 || reach < 1.0);
        let c = builtin_mesh("chair").unwrap().normalized(1.0, 0.0).bounds().center();
        assert!(c.length() < 1e-12);
    }
}
