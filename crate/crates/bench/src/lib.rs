//! Fixtures shared by the kernel benchmarks.

use sid_core::image::ImageBuffer;
use sid_core::scene::{GeneratorConfig, SceneGenerator, SceneSpec};

/// A deterministic scene at the default configuration.
pub fn fixture_scene(index: u64) -> SceneSpec {
    let generator = SceneGenerator::new(GeneratorConfig::default()).expect("default config is valid");
    generator.generate(42, index)
}

/// Smooth-times-blocky test image with values in (0, 1].
pub fn fixture_image(width: usize, height: usize, channels: usize) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, channels, |x, y, c| {
        let block = if (x / 16 + y / 16) % 2 == 0 { 0.8 } else { 0.3 };
        let smooth = 0.5 + 0.4 * ((x as f32 * 0.05).sin() * (y as f32 * 0.03).cos());
        (block * smooth * (1.0 - 0.1 * c as f32)).max(1e-3)
    })
}
