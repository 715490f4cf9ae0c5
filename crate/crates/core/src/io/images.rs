//! Images as 8-bit PNG (lossy, for viewing) or `GFI1` float files (exact).
//!
//! `GFI1` layout: magic, u32 width, u32 height, then width·height·3 f64
//! values, row-major RGB, little endian.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::imaging::Image;

pub const FLOAT_MAGIC: &[u8; 4] = b"GFI1";

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::Image("pixel buffer does not match the image size".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::Image(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Image::from_data(w as usize, h as usize, img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect())
}

pub fn encode_float_image(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + img.data.len() * 8);
    out.extend_from_slice(FLOAT_MAGIC);
    out.extend_from_slice(&(img.width as u32).to_le_bytes());
    out.extend_from_slice(&(img.height as u32).to_le_bytes());
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_float_image(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 12 || &bytes[..4] != FLOAT_MAGIC {
        return Err(Error::Parse { offset: 0, message: "not a GFI1 float image".into() });
    }
    let w = LittleEndian::read_u32(&bytes[4..8]) as usize;
    let h = LittleEndian::read_u32(&bytes[8..12]) as usize;
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(24)).ok_or_else(|| Error::Parse {
        offset: 4,
        message: "image size overflows".into(),
    })?;
    if bytes.len() - 12 != need {
        return Err(Error::Parse {
            offset: bytes.len().min(12 + need) as u64,
            message: format!("payload is {} bytes, expected {need}", bytes.len() - 12),
        });
    }
    let data = bytes[12..].chunks_exact(8).map(LittleEndian::read_f64).collect();
    Image::from_data(w, h, data)
}

/// Reads by extension: `.png` or `.gfi`.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => decode_png(&bytes),
        Some("gfi") => decode_float_image(&bytes),
        _ => Err(Error::invalid(format!("{}: unknown image extension", path.display()))),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => encode_png(img)?,
        Some("gfi") => encode_float_image(img),
        _ => return Err(Error::invalid(format!("{}: unknown image extension", path.display()))),
    };
    super::write_atomic(path, &bytes)
}
