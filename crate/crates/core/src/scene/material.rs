//! Diffuse materials: flat colors and shading-free procedural patterns.

use serde::{Deserialize, Serialize};

use crate::rng::{stream, StreamRng};

/// Albedo bounds for every generated palette entry.
pub const ALBEDO_MIN: f64 = 0.05;
pub const ALBEDO_MAX: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    Homogeneous,
    ProceduralTexture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Checker,
    Stripes,
    QuantizedNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub pattern: Pattern,
    /// Cycles per meter along the rotated u and v axes.
    pub frequency: [f64; 2],
    pub phase: [f64; 2],
    /// In-plane rotation of the pattern, radians.
    pub angle: f64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub kind: MaterialKind,
    pub albedo_palette: Vec<[f64; 3]>,
    pub texture: Option<TextureParams>,
    /// Recorded for forward compatibility; shading is Lambertian.
    pub roughness: f64,
}

impl MaterialSpec {
    pub fn homogeneous(rgb: [f64; 3], roughness: f64) -> Self {
        Self {
            kind: MaterialKind::Homogeneous,
            albedo_palette: vec![rgb],
            texture: None,
            roughness,
        }
    }

    /// Albedo at surface coordinates `(u, v)` in meters. Pure in `(u, v)`.
    pub fn albedo(&self, u: f64, v: f64) -> [f64; 3] {
        let palette = &self.albedo_palette;
        let Some(tex) = &self.texture else {
            return palette[0];
        };
        let (s, c) = tex.angle.sin_cos();
        let ru = (c * u - s * v) * tex.frequency[0] + tex.phase[0];
        let rv = (s * u + c * v) * tex.frequency[1] + tex.phase[1];
        let n = palette.len() as i64;
        let index = match tex.pattern {
            Pattern::Checker => (ru.floor() as i64 + rv.floor() as i64).rem_euclid(n),
            Pattern::Stripes => (ru.floor() as i64).rem_euclid(n),
            Pattern::QuantizedNoise => {
                let value = 0.65 * value_noise(ru, rv, tex.noise_seed) + 0.35 * value_noise(2.0 * ru, 2.0 * rv, tex.noise_seed ^ 0x5bd1);
                ((value * n as f64) as i64).clamp(0, n - 1)
            }
        };
        palette[index as usize]
    }

    pub fn is_valid(&self) -> bool {
        !self.albedo_palette.is_empty()
            && self
                .albedo_palette
                .iter()
                .flatten()
                .all(|&a| a > 0.0 && a < 1.0)
            && (0.0..=1.0).contains(&self.roughness)
    }
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth lattice value noise in `[0, 1)`.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

pub(crate) fn random_albedo(rng: &mut StreamRng) -> [f64; 3] {
    [
        rng.uniform(ALBEDO_MIN, ALBEDO_MAX),
        rng.uniform(ALBEDO_MIN, ALBEDO_MAX),
        rng.uniform(ALBEDO_MIN, ALBEDO_MAX),
    ]
}

/// The wall material catalog: `homogeneous` flat colors followed by
/// `textured` procedural patterns. Entry `i` depends only on `(seed, i)`.
pub fn material_catalog(seed: u64, homogeneous: usize, textured: usize) -> Vec<MaterialSpec> {
    let mut out = Vec::with_capacity(homogeneous + textured);
    for i in 0..homogeneous {
        let mut rng = StreamRng::new(seed, i as u64, stream::CATALOG);
        let rgb = random_albedo(&mut rng);
        out.push(MaterialSpec::homogeneous(rgb, rng.unit()));
    }
    for i in homogeneous..homogeneous + textured {
        let mut rng = StreamRng::new(seed, i as u64, stream::CATALOG);
        let pattern = match (i - homogeneous) % 3 {
            0 => Pattern::Checker,
            1 => Pattern::Stripes,
            _ => Pattern::QuantizedNoise,
        };
        let colors = match pattern {
            Pattern::Checker => 2,
            Pattern::Stripes => 2 + rng.below(3) as usize,
            Pattern::QuantizedNoise => 3 + rng.below(3) as usize,
        };
        let albedo_palette = (0..colors).map(|_| random_albedo(&mut rng)).collect();
        let base = rng.uniform(0.6, 3.0);
        let frequency = match pattern {
            Pattern::Checker => [base, base],
            Pattern::Stripes => [base, base],
            Pattern::QuantizedNoise => {
                let f = rng.uniform(0.5, 2.0);
                [f, f]
            }
        };
        out.push(MaterialSpec {
            kind: MaterialKind::ProceduralTexture,
            albedo_palette,
            texture: Some(TextureParams {
                pattern,
                frequency,
                phase: [rng.unit(), rng.unit()],
                angle: rng.uniform(0.0, std::f64::consts::PI),
                noise_seed: rng.next_u64(),
            }),
            roughness: rng.unit(),
        });
    }
    out
}
