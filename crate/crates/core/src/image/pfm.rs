use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{element_count, ImageBuffer, ImageError};

/// Reads a Portable FloatMap. Both byte orders are accepted; scanlines are
/// stored bottom-to-top on disk and returned top-to-bottom.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_pfm_from(&bytes)
}

pub fn read_pfm_from(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(ImageError::Header(format!("bad magic {other:?}"))),
    };
    let width = parse_dim(next_token(bytes, &mut pos)?)?;
    let height = parse_dim(next_token(bytes, &mut pos)?)?;
    let scale: f32 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| ImageError::Header("bad scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(ImageError::Header(format!("invalid scale {scale}")));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::Header("missing separator after scale".into()));
    }
    pos += 1;

    let count = element_count(width, height, channels)?;
    let byte_len = count.checked_mul(4).ok_or(ImageError::DimensionOverflow {
        width,
        height,
        channels,
    })?;
    let payload = &bytes[pos..];
    if payload.len() < byte_len {
        return Err(ImageError::Header(format!(
            "payload has {} bytes, expected {byte_len}",
            payload.len()
        )));
    }

    let little_endian = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0f32; count];
    for (i, chunk) in payload[..byte_len].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() {
            return Err(ImageError::NonFinite(i));
        }
        let file_row = i / row_len;
        let col = i % row_len;
        data[(height - 1 - file_row) * row_len + col] = v;
    }
    ImageBuffer::new(width, height, channels, data)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, ImageError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
        if *pos - start > 32 {
            return Err(ImageError::Header("header token too long".into()));
        }
    }
    if start == *pos {
        return Err(ImageError::Header("truncated header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| ImageError::Header("header is not ASCII".into()))
}

fn parse_dim(token: &str) -> Result<usize, ImageError> {
    match token.parse::<usize>() {
        Ok(0) => Err(ImageError::Header("zero dimension".into())),
        Ok(v) => Ok(v),
        Err(_) => Err(ImageError::Header(format!("bad dimension {token:?}"))),
    }
}

/// Writes a little-endian PFM (`scale = -1.0`).
pub fn write_pfm(path: impl AsRef<Path>, image: &ImageBuffer) -> Result<(), ImageError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_pfm_to(&mut out, image)?;
    out.flush()?;
    Ok(())
}

pub fn write_pfm_to(out: &mut impl Write, image: &ImageBuffer) -> Result<(), ImageError> {
    let magic = if image.channels() == 3 { "PF" } else { "Pf" };
    write!(out, "{magic}\n{} {}\n-1.0\n", image.width(), image.height())?;
    let row_len = image.width() * image.channels();
    let mut row_bytes = Vec::with_capacity(row_len * 4);
    for row in image.data().chunks_exact(row_len).rev() {
        row_bytes.clear();
        for v in row {
            row_bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&row_bytes)?;
    }
    Ok(())
}
