//! Seeded procedural scenes: an object floating at the center of a 4 to 6
//! sided room, lit by four white point lights at fixed slots, seen by two
//! cameras half a turn apart.

mod material;

pub use material::{material_catalog, MaterialKind, MaterialSpec, Pattern, TextureParams, ALBEDO_MAX, ALBEDO_MIN};

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{self, Mesh, MeshError};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("material catalog is empty")]
    EmptyCatalog,
    #[error("object list is empty")]
    NoObjects,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectSource {
    Builtin { name: String },
    Obj { path: PathBuf },
}

impl ObjectSource {
    pub fn load(&self) -> Result<Mesh, MeshError> {
        match self {
            ObjectSource::Builtin { name } => mesh::builtin_mesh(name),
            ObjectSource::Obj { path } => mesh::load_obj(path),
        }
    }
}

/// Generation ranges. Lengths are in units of the object radius unless noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Object bounding-sphere radius in meters.
    pub object_radius: f64,
    /// Wall plane distance from the center.
    pub wall_distance: [f64; 2],
    /// Floor and ceiling distance from the center.
    pub room_half_height: [f64; 2],
    pub wall_count: [u32; 2],
    pub low_intensity: [f64; 2],
    pub high_intensity: [f64; 2],
    /// Fixed light slots; the first two get low intensities.
    pub light_positions: [[f64; 3]; 4],
    pub camera_distance: f64,
    pub camera_elevation_deg: [f64; 2],
    pub vertical_fov_deg: f64,
    pub image_width: usize,
    pub image_height: usize,
    /// Uniform achromatic fill added to every shading value.
    pub ambient: f64,
    pub homogeneous_materials: usize,
    pub textured_materials: usize,
    pub catalog_seed: u64,
    pub objects: Vec<ObjectSource>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            object_radius: 1.0,
            wall_distance: [2.5, 4.0],
            room_half_height: [2.5, 4.0],
            wall_count: [4, 6],
            low_intensity: [0.2, 0.6],
            high_intensity: [0.6, 1.5],
            light_positions: [[1.6, 1.9, 0.7], [-0.7, 1.9, 1.6], [-1.6, 1.2, -0.7], [0.7, 1.2, -1.6]],
            camera_distance: 2.2,
            camera_elevation_deg: [10.0, 60.0],
            vertical_fov_deg: 70.0,
            image_width: 256,
            image_height: 256,
            ambient: 0.15,
            homogeneous_materials: 50,
            textured_materials: 200,
            catalog_seed: 0x5EED_CA7A_1060,
            objects: mesh::BUILTIN_OBJECTS
                .iter()
                .map(|n| ObjectSource::Builtin { name: n.to_string() })
                .collect(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)?;
        let config: GeneratorConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::Config(m.to_string()));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.homogeneous_materials + self.textured_materials == 0 {
            return Err(SceneError::EmptyCatalog);
        }
        if self.objects.is_empty() {
            return Err(SceneError::NoObjects);
        }
        if !(self.object_radius > 0.0) {
            return bad("object_radius must be positive");
        }
        for (name, r) in [
            ("wall_distance", self.wall_distance),
            ("room_half_height", self.room_half_height),
            ("low_intensity", self.low_intensity),
            ("high_intensity", self.high_intensity),
            ("camera_elevation_deg", self.camera_elevation_deg),
        ] {
            if !ordered(r) {
                return Err(SceneError::Config(format!("{name} must be an ordered finite range")));
            }
        }
        if self.wall_count[0] < 3 || self.wall_count[0] > self.wall_count[1] {
            return bad("wall_count range must start at 3 or more");
        }
        if self.low_intensity[0] <= 0.0 || self.high_intensity[0] <= 0.0 {
            return bad("light intensities must be positive");
        }
        // the tightest room is the polygon's inscribed circle
        let min_room = self.wall_distance[0].min(self.room_half_height[0]);
        if min_room <= 1.0 {
            return bad("object larger than the minimum room");
        }
        if self.camera_distance <= 1.0 || self.camera_distance >= min_room {
            return bad("camera must sit between the object and the nearest wall");
        }
        for p in &self.light_positions {
            let v = Vec3::new(p[0], p[1], p[2]);
            let horizontal = (v.x * v.x + v.z * v.z).sqrt();
            if v.length() <= 1.0 || horizontal >= self.wall_distance[0] || v.y.abs() >= self.room_half_height[0] {
                return bad("light slots must lie between the object and the minimum room");
            }
        }
        if self.camera_elevation_deg[0] < 0.0 || self.camera_elevation_deg[1] >= 90.0 {
            return bad("camera elevation must be within [0, 90)");
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return bad("vertical_fov_deg must be in (0, 180)");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.ambient >= 0.0) {
            return bad("ambient must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub wall_count: u32,
    /// Distance from the center to every wall plane, meters.
    pub wall_distance: f64,
    pub half_height: f64,
    /// Rotation of the wall polygon about +Y, radians.
    pub rotation: f64,
    /// One planar quad per wall: bottom-left, bottom-right, top-right, top-left as seen from inside.
    pub wall_polygons: Vec<[Vec3; 4]>,
    pub wall_material_index: usize,
    pub wall_material: MaterialSpec,
    pub floor: Vec<Vec3>,
    pub ceiling: Vec<Vec3>,
    pub floor_material: MaterialSpec,
    pub ceiling_material: MaterialSpec,
}

impl RoomSpec {
    /// Inward unit normals and plane offsets (`n·p + d >= 0` inside) of every boundary plane.
    pub fn planes(&self) -> Vec<(Vec3, f64)> {
        let mut planes: Vec<(Vec3, f64)> = (0..self.wall_count)
            .map(|k| {
                let a = self.rotation + 2.0 * PI * k as f64 / self.wall_count as f64;
                (Vec3::new(-a.cos(), 0.0, -a.sin()), self.wall_distance)
            })
            .collect();
        planes.push((Vec3::Y, self.half_height));
        planes.push((-Vec3::Y, self.half_height));
        planes
    }

    /// True when the sphere lies strictly inside every boundary plane.
    pub fn contains_sphere(&self, center: Vec3, radius: f64) -> bool {
        self.planes().iter().all(|&(n, d)| n.dot(center) + d > radius)
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        self.contains_sphere(p, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub source: ObjectSource,
    pub group_materials: Vec<MaterialSpec>,
    /// Bounding-sphere radius after normalization, meters.
    pub radius: f64,
    pub yaw: f64,
}

impl ObjectSpec {
    /// Loads and normalizes the mesh: centered at the origin, scaled, yawed.
    pub fn placed_mesh(&self) -> Result<Mesh, SceneError> {
        let mesh = self.source.load()?;
        if mesh.group_count() != self.group_materials.len() {
            return Err(SceneError::Config(format!(
                "object has {} groups but {} materials",
                mesh.group_count(),
                self.group_materials.len()
            )));
        }
        Ok(mesh.normalized(self.radius, self.yaw))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    pub position: Vec3,
    /// Radiant intensity, relative units.
    pub intensity: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub position: Vec3,
    pub look_at: Vec3,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub master_seed: u64,
    pub scene_index: u64,
    pub seed: u64,
    pub ambient: f64,
    pub room: RoomSpec,
    pub object: ObjectSpec,
    pub lights: Vec<LightSpec>,
    pub cameras: Vec<CameraSpec>,
}

impl SceneSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn scene_id(index: u64) -> String {
    format!("scene_{index:06}")
}

/// Holds the validated config with its material catalog and the group count
/// of every candidate object, so repeated generation does no I/O.
#[derive(Clone, Debug)]
pub struct SceneGenerator {
    config: GeneratorConfig,
    catalog: Vec<MaterialSpec>,
    object_groups: Vec<usize>,
}

impl SceneGenerator {
    pub fn new(config: GeneratorConfig) -> Result<Self, SceneError> {
        config.validate()?;
        let catalog = material_catalog(config.catalog_seed, config.homogeneous_materials, config.textured_materials);
        let object_groups = config
            .objects
            .iter()
            .map(|o| o.load().map(|m| m.group_count()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config,
            catalog,
            object_groups,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn catalog(&self) -> &[MaterialSpec] {
        &self.catalog
    }

    pub fn generate(&self, master_seed: u64, scene_index: u64) -> SceneSpec {
        let cfg = &self.config;
        let r = cfg.object_radius;
        let mut rng = StreamRng::new(master_seed, scene_index, stream::SCENE);
        let seed = rng.next_u64();

        let span = (cfg.wall_count[1] - cfg.wall_count[0] + 1) as u64;
        let wall_count = cfg.wall_count[0] + rng.below(span) as u32;
        let wall_distance = rng.uniform(cfg.wall_distance[0], cfg.wall_distance[1]) * r;
        let half_height = rng.uniform(cfg.room_half_height[0], cfg.room_half_height[1]) * r;
        let rotation = rng.uniform(0.0, 2.0 * PI / wall_count as f64);
        let wall_material_index = rng.below(self.catalog.len() as u64) as usize;
        let wall_material = self.catalog[wall_material_index].clone();
        let room = build_room(wall_count, wall_distance, half_height, rotation, wall_material_index, wall_material);

        let object_index = rng.below(cfg.objects.len() as u64) as usize;
        let yaw = rng.uniform(0.0, 2.0 * PI);
        let group_materials = (0..self.object_groups[object_index])
            .map(|_| {
                let rgb = material::random_albedo(&mut rng);
                MaterialSpec::homogeneous(rgb, rng.unit())
            })
            .collect();
        let object = ObjectSpec {
            source: cfg.objects[object_index].clone(),
            group_materials,
            radius: r,
            yaw,
        };

        let lights = cfg
            .light_positions
            .iter()
            .enumerate()
            .map(|(slot, p)| {
                let range = if slot < 2 { cfg.low_intensity } else { cfg.high_intensity };
                LightSpec {
                    position: Vec3::new(p[0], p[1], p[2]) * r,
                    intensity: rng.uniform(range[0], range[1]) * r * r,
                    color: [1.0, 1.0, 1.0],
                }
            })
            .collect();

        let azimuth = rng.uniform(0.0, 360.0);
        let elevation = rng.uniform(cfg.camera_elevation_deg[0], cfg.camera_elevation_deg[1]);
        let cameras = [azimuth, (azimuth + 180.0) % 360.0]
            .into_iter()
            .map(|az| {
                let (a, e) = (az.to_radians(), elevation.to_radians());
                let d = cfg.camera_distance * r;
                CameraSpec {
                    position: Vec3::new(d * e.cos() * a.cos(), d * e.sin(), d * e.cos() * a.sin()),
                    look_at: Vec3::ZERO,
                    azimuth_deg: az,
                    elevation_deg: elevation,
                    vertical_fov_deg: cfg.vertical_fov_deg,
                    width: cfg.image_width,
                    height: cfg.image_height,
                }
            })
            .collect();

        SceneSpec {
            scene_id: scene_id(scene_index),
            master_seed,
            scene_index,
            seed,
            ambient: cfg.ambient,
            room,
            object,
            lights,
            cameras,
        }
    }
}

/// Convenience wrapper that builds a [`SceneGenerator`] for a single scene.
pub fn generate_scene(master_seed: u64, scene_index: u64, config: &GeneratorConfig) -> Result<SceneSpec, SceneError> {
    Ok(SceneGenerator::new(config.clone())?.generate(master_seed, scene_index))
}

fn build_room(
    wall_count: u32,
    wall_distance: f64,
    half_height: f64,
    rotation: f64,
    wall_material_index: usize,
    wall_material: MaterialSpec,
) -> RoomSpec {
    let n = wall_count as f64;
    let circumradius = wall_distance / (PI / n).cos();
    // corner k sits between wall k and wall k+1
    let corners: Vec<Vec3> = (0..wall_count)
        .map(|k| {
            let a = rotation + 2.0 * PI * (k as f64 + 0.5) / n;
            Vec3::new(circumradius * a.cos(), 0.0, circumradius * a.sin())
        })
        .collect();
    let lift = |p: Vec3, y: f64| Vec3::new(p.x, y, p.z);
    let wall_polygons = (0..wall_count as usize)
        .map(|k| {
            let a = corners[(k + wall_count as usize - 1) % wall_count as usize];
            let b = corners[k];
            [lift(a, -half_height), lift(b, -half_height), lift(b, half_height), lift(a, half_height)]
        })
        .collect();
    RoomSpec {
        wall_count,
        wall_distance,
        half_height,
        rotation,
        wall_polygons,
        wall_material_index,
        floor: corners.iter().map(|&c| lift(c, -half_height)).collect(),
        ceiling: corners.iter().map(|&c| lift(c, half_height)).collect(),
        floor_material: wall_material.clone(),
        ceiling_material: wall_material.clone(),
        wall_material,
    }
}
