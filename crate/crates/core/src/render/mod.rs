//! Direct-illumination ray renderer producing exact intrinsic triples.
//!
//! Every sample stores the surface albedo and an albedo-free shading value
//! `ambient + sum(visibility * intensity * max(0, n.l) / d^2)`. Reflectance
//! and shading are box-filtered separately and the image is their product,
//! so the product model holds to float round-off by construction.

mod bvh;

pub use bvh::{brute_force_intersect, intersect_triangle, Bvh, Hit, MAX_LEAF, T_MIN};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Ray, Vec3};
use crate::image::{ImageBuffer, ImageError, IntrinsicTriple, Mask};
use crate::rng::derive_seed;
use crate::scene::{CameraSpec, MaterialSpec, SceneError, SceneSpec};

/// Offset applied along the normal before casting shadow rays, meters.
const SHADOW_BIAS: f64 = 1e-7;
/// Triangles with a smaller area are skipped.
const DEGENERATE_AREA: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("ray escaped the scene at pixel ({x}, {y}); room is not watertight")]
    EscapedRay { x: usize, y: usize },
    #[error("view index {0} out of range")]
    BadView(usize),
    #[error("quality must be at least one sample per pixel")]
    BadQuality,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Planar texture frame: `uv = ((p - origin)·u_axis, (p - origin)·v_axis)`.
#[derive(Clone, Debug)]
pub struct Surface {
    pub material: MaterialSpec,
    pub origin: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub is_object: bool,
}

impl Surface {
    pub fn flat(material: MaterialSpec, is_object: bool) -> Self {
        Self {
            material,
            origin: Vec3::ZERO,
            u_axis: Vec3::new(1.0, 0.0, 0.0),
            v_axis: Vec3::new(0.0, 0.0, 1.0),
            is_object,
        }
    }

    fn albedo(&self, p: Vec3) -> [f64; 3] {
        let d = p - self.origin;
        self.material.albedo(d.dot(self.u_axis), d.dot(self.v_axis))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub intensity: f64,
}

/// Result of tracing one ray into the scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSample {
    pub point: Vec3,
    /// Geometric normal flipped towards the ray origin.
    pub normal: Vec3,
    pub albedo: [f64; 3],
    pub shading: f64,
    pub is_object: bool,
}

/// Immutable render-ready scene: triangles in a BVH with per-triangle surfaces.
pub struct PreparedScene {
    bvh: Bvh,
    /// Surface index per BVH triangle.
    triangle_surface: Vec<u32>,
    surfaces: Vec<Surface>,
    lights: Vec<PointLight>,
    ambient: f64,
    degenerate: usize,
}

impl PreparedScene {
    /// Degenerate triangles are dropped and counted.
    pub fn new(triangles: Vec<([Vec3; 3], u32)>, surfaces: Vec<Surface>, lights: Vec<PointLight>, ambient: f64) -> Self {
        let mut kept = Vec::with_capacity(triangles.len());
        let mut triangle_surface = Vec::with_capacity(triangles.len());
        let mut degenerate = 0;
        for (tri, surface) in triangles {
            assert!((surface as usize) < surfaces.len(), "surface index out of range");
            let area = 0.5 * (tri[1] - tri[0]).cross(tri[2] - tri[0]).length();
            if !(area > DEGENERATE_AREA) {
                degenerate += 1;
                continue;
            }
            kept.push(tri);
            triangle_surface.push(surface);
        }
        if degenerate > 0 {
            tracing::warn!(degenerate, "skipped degenerate triangles");
        }
        Self {
            bvh: Bvh::build(kept),
            triangle_surface,
            surfaces,
            lights,
            ambient,
            degenerate,
        }
    }

    /// Assembles room walls, floor, ceiling and the placed object.
    pub fn from_spec(spec: &SceneSpec) -> Result<Self, RenderError> {
        let mut surfaces = Vec::new();
        let mut triangles = Vec::new();
        let room = &spec.room;

        for quad in &room.wall_polygons {
            let s = surfaces.len() as u32;
            surfaces.push(Surface {
                material: room.wall_material.clone(),
                origin: quad[0],
                u_axis: (quad[1] - quad[0]).normalized(),
                v_axis: Vec3::Y,
                is_object: false,
            });
            triangles.push(([quad[0], quad[1], quad[2]], s));
            triangles.push(([quad[0], quad[2], quad[3]], s));
        }
        for (polygon, material) in [(&room.floor, &room.floor_material), (&room.ceiling, &room.ceiling_material)] {
            let s = surfaces.len() as u32;
            surfaces.push(Surface::flat(material.clone(), false));
            for k in 1..polygon.len() - 1 {
                triangles.push(([polygon[0], polygon[k], polygon[k + 1]], s));
            }
        }

        let mesh = spec.object.placed_mesh()?;
        let first_object_surface = surfaces.len() as u32;
        for material in &spec.object.group_materials {
            surfaces.push(Surface::flat(material.clone(), true));
        }
        for (i, &group) in mesh.triangle_groups.iter().enumerate() {
            triangles.push((mesh.triangle(i), first_object_surface + group));
        }

        let lights = spec
            .lights
            .iter()
            .map(|l| PointLight {
                position: l.position,
                intensity: l.intensity,
            })
            .collect();
        Ok(Self::new(triangles, surfaces, lights, spec.ambient))
    }

    pub fn degenerate_triangles(&self) -> usize {
        self.degenerate
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    /// Albedo-free irradiance term at `point` with facing normal `normal`.
    pub fn shade_point(&self, point: Vec3, normal: Vec3, with_shadows: bool) -> f64 {
        let mut shading = self.ambient;
        let origin = point + normal * SHADOW_BIAS;
        for light in &self.lights {
            let to_light = light.position - point;
            let dist2 = to_light.length_squared();
            let dist = dist2.sqrt();
            let dir = to_light / dist;
            let cos = normal.dot(dir);
            if cos <= 0.0 {
                continue;
            }
            if with_shadows {
                let shadow = Ray { origin, direction: dir };
                if self.bvh.occluded(&shadow, (light.position - origin).length() - SHADOW_BIAS) {
                    continue;
                }
            }
            shading += light.intensity * cos / dist2;
        }
        shading
    }

    /// Traces `ray` and evaluates albedo and shading at the nearest hit.
    pub fn probe(&self, ray: &Ray, with_shadows: bool) -> Option<ProbeSample> {
        let hit = self.bvh.intersect(ray)?;
        let tri = self.bvh.triangles()[hit.triangle as usize];
        let mut normal = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalized();
        if normal.dot(ray.direction) > 0.0 {
            normal = -normal;
        }
        let point = ray.at(hit.t);
        let surface = &self.surfaces[self.triangle_surface[hit.triangle as usize] as usize];
        Some(ProbeSample {
            point,
            normal,
            albedo: surface.albedo(point),
            shading: self.shade_point(point, normal, with_shadows),
            is_object: surface.is_object,
        })
    }

    /// Renders reflectance, shading and the object mask through `camera`.
    pub fn render(&self, camera: &Camera, quality: u32, with_shadows: bool, seed: u64) -> Result<RenderedView, RenderError> {
        if quality == 0 {
            return Err(RenderError::BadQuality);
        }
        let (w, h) = (camera.width, camera.height);
        let grid = (quality as f64).sqrt().ceil() as u32;
        let rows: Vec<Result<Row, RenderError>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = Row {
                    reflectance: Vec::with_capacity(3 * w),
                    shading: Vec::with_capacity(w),
                    object: Vec::with_capacity(w),
                };
                for x in 0..w {
                    let pixel_seed = derive_seed(seed, (y * w + x) as u64, crate::rng::stream::PIXEL);
                    let mut albedo = [0.0f64; 3];
                    let mut shading = 0.0f64;
                    let mut object_hits = 0u32;
                    for k in 0..quality {
                        let (jx, jy) = jitter(pixel_seed, k);
                        let sx = ((k % grid) as f64 + jx) / grid as f64;
                        let sy = ((k / grid) as f64 + jy) / grid as f64;
                        let ray = camera.ray(x as f64 + sx, y as f64 + sy);
                        let sample = self.probe(&ray, with_shadows).ok_or(RenderError::EscapedRay { x, y })?;
                        for (acc, a) in albedo.iter_mut().zip(sample.albedo) {
                            *acc += a;
                        }
                        shading += sample.shading;
                        object_hits += sample.is_object as u32;
                    }
                    let n = quality as f64;
                    row.reflectance.extend(albedo.map(|a| (a / n) as f32));
                    row.shading.push((shading / n) as f32);
                    row.object.push(2 * object_hits >= quality);
                }
                Ok(row)
            })
            .collect();

        let mut reflectance = Vec::with_capacity(3 * w * h);
        let mut shading = Vec::with_capacity(w * h);
        let mut object = Vec::with_capacity(w * h);
        for row in rows {
            let row = row?;
            reflectance.extend(row.reflectance);
            shading.extend(row.shading);
            object.extend(row.object);
        }
        Ok(RenderedView {
            reflectance: ImageBuffer::new(w, h, 3, reflectance)?,
            shading: ImageBuffer::new(w, h, 1, shading)?,
            foreground: Mask::new(w, h, object)?,
        })
    }
}

struct Row {
    reflectance: Vec<f32>,
    shading: Vec<f32>,
    object: Vec<bool>,
}

fn jitter(pixel_seed: u64, k: u32) -> (f64, f64) {
    let bits = derive_seed(pixel_seed, k as u64, 0);
    let to_unit = |b: u64| (b >> 11) as f64 / (1u64 << 53) as f64;
    (to_unit(bits), to_unit(derive_seed(bits, 1, 1)))
}

/// Pinhole camera looking at a target with +Y up.
#[derive(Clone, Debug)]
pub struct Camera {
    pub position: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half_fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, vertical_fov_deg: f64, width: usize, height: usize) -> Self {
        let forward = (target - position).normalized();
        let right = forward.cross(Vec3::Y).normalized();
        let up = right.cross(forward);
        Self {
            position,
            forward,
            right,
            up,
            tan_half_fov: (vertical_fov_deg.to_radians() * 0.5).tan(),
            width,
            height,
        }
    }

    pub fn from_spec(spec: &CameraSpec) -> Self {
        Self::look_at(spec.position, spec.look_at, spec.vertical_fov_deg, spec.width, spec.height)
    }

    pub fn forward(&self) -> Vec3 {
        self.forward
    }

    /// Ray through continuous image coordinates, `(0,0)` at the top-left corner.
    pub fn ray(&self, px: f64, py: f64) -> Ray {
        let aspect = self.width as f64 / self.height as f64;
        let sx = (2.0 * px / self.width as f64 - 1.0) * self.tan_half_fov * aspect;
        let sy = (1.0 - 2.0 * py / self.height as f64) * self.tan_half_fov;
        Ray::new(self.position, self.forward + self.right * sx + self.up * sy)
    }
}

/// Raw render output for one view.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub reflectance: ImageBuffer,
    pub shading: ImageBuffer,
    /// Pixels where at least half of the samples hit the object.
    pub foreground: Mask,
}

/// A rendered triple together with its object mask.
#[derive(Clone, Debug)]
pub struct RenderedTriple {
    pub triple: IntrinsicTriple,
    pub foreground: Mask,
    pub degenerate_triangles: usize,
}

fn camera_for(spec: &SceneSpec, view_index: usize) -> Result<Camera, RenderError> {
    spec.cameras
        .get(view_index)
        .map(Camera::from_spec)
        .ok_or(RenderError::BadView(view_index))
}

fn view_seed(spec: &SceneSpec, view_index: usize) -> u64 {
    derive_seed(spec.seed, view_index as u64, crate::rng::stream::PIXEL)
}

impl PreparedScene {
    /// Renders one view of `spec` into a triple whose image is exactly `R*S`.
    pub fn render_triple(&self, spec: &SceneSpec, view_index: usize, quality: u32) -> Result<RenderedTriple, RenderError> {
        let camera = camera_for(spec, view_index)?;
        let view = self.render(&camera, quality, true, view_seed(spec, view_index))?;
        let triple = IntrinsicTriple::compose(view.reflectance, view.shading, spec.scene_id.clone(), view_index as u8)?;
        Ok(RenderedTriple {
            triple,
            foreground: view.foreground,
            degenerate_triangles: self.degenerate,
        })
    }

    pub fn render_shading_pass(&self, spec: &SceneSpec, view_index: usize, quality: u32, with_shadows: bool) -> Result<ImageBuffer, RenderError> {
        let camera = camera_for(spec, view_index)?;
        Ok(self.render(&camera, quality, with_shadows, view_seed(spec, view_index))?.shading)
    }
}

pub fn render_triple(spec: &SceneSpec, view_index: usize, quality: u32) -> Result<RenderedTriple, RenderError> {
    PreparedScene::from_spec(spec)?.render_triple(spec, view_index, quality)
}

/// Shading only, optionally ignoring occlusion (for shadow-removal targets).
pub fn render_shading_pass(spec: &SceneSpec, view_index: usize, quality: u32, with_shadows: bool) -> Result<ImageBuffer, RenderError> {
    PreparedScene::from_spec(spec)?.render_shading_pass(spec, view_index, quality, with_shadows)
}
