use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ImageBuffer, ImageError};

/// Encodes an 8-bit preview: clamp to `[0,1]`, apply `v^(1/gamma)`, quantize.
/// Previews are for inspection only, ground truth stays in PFM.
pub fn write_png_preview(path: impl AsRef<Path>, image: &ImageBuffer, gamma: f32) -> Result<(), ImageError> {
    let mut file = BufWriter::new(File::create(path)?);
    write_png_preview_to(&mut file, image, gamma)?;
    file.flush()?;
    Ok(())
}

pub fn write_png_preview_to<W: Write>(out: W, image: &ImageBuffer, gamma: f32) -> Result<(), ImageError> {
    let bytes = preview_bytes(image, gamma)?;
    let mut encoder = png::Encoder::new(out, image.width() as u32, image.height() as u32);
    encoder.set_color(if image.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| ImageError::Png(e.to_string()))?;
    writer.write_image_data(&bytes).map_err(|e| ImageError::Png(e.to_string()))?;
    writer.finish().map_err(|e| ImageError::Png(e.to_string()))?;
    Ok(())
}

pub(crate) fn preview_bytes(image: &ImageBuffer, gamma: f32) -> Result<Vec<u8>, ImageError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ImageError::Invalid(format!("gamma must be positive, got {gamma}")));
    }
    let inv = 1.0 / gamma;
    Ok(image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0).powf(inv) * 255.0).round() as u8)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization() {
        let ones = ImageBuffer::filled(2, 2, 3, 1.0);
        assert!(preview_bytes(&ones, 2.2).unwrap().iter().all(|&b| b == 255));
        let zeros = ImageBuffer::filled(2, 2, 1, 0.0);
        assert!(preview_bytes(&zeros, 2.2).unwrap().iter().all(|&b| b == 0));
        let quarter = ImageBuffer::filled(2, 2, 1, 0.25);
        assert!(preview_bytes(&quarter, 1.0).unwrap().iter().all(|&b| b == 64));
        let hot = ImageBuffer::filled(1, 1, 1, 7.0);
        assert_eq!(preview_bytes(&hot, 1.0).unwrap(), vec![255]);
    }

    #[test]
    fn rejects_bad_gamma() {
        let img = ImageBuffer::filled(1, 1, 1, 0.5);
        assert!(preview_bytes(&img, 0.0).is_err());
        assert!(preview_bytes(&img, -1.0).is_err());
    }

    #[test]
    fn writes_decodable_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        write_png_preview(&path, &ImageBuffer::filled(4, 3, 3, 0.25), 1.0).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(&path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (4, 3));
        assert!(buf[..info.buffer_size()].iter().all(|&b| b == 64));
    }
}
