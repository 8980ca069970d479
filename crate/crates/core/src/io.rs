//! Image and raw-array file IO: sRGB PNG round-trips for RGB data and a raw
//! 32-bit float dump with a {H, W, K} header for attribute maps.

use ndarray::{Array2, Array3};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("raw dump: {0}")]
    Format(String),
}

pub fn linear_to_srgb(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x <= 0.0031308 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(cs: f64) -> f64 {
    if cs <= 0.04045 {
        cs / 12.92
    } else {
        ((cs + 0.055) / 1.055).powf(2.4)
    }
}

/// Write a linear-light H x W x 3 image as an 8-bit sRGB PNG.
pub fn save_rgb_png(img: &Array3<f64>, path: &Path) -> Result<(), IoError> {
    let (h, w, k) = img.dim();
    if k != 3 {
        return Err(IoError::Format(format!("expected 3 channels, got {k}")));
    }
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let px = [
                (linear_to_srgb(img[(r, c, 0)]) * 255.0).round() as u8,
                (linear_to_srgb(img[(r, c, 1)]) * 255.0).round() as u8,
                (linear_to_srgb(img[(r, c, 2)]) * 255.0).round() as u8,
            ];
            buf.put_pixel(c as u32, r as u32, image::Rgb(px));
        }
    }
    buf.save(path)?;
    Ok(())
}

/// Load an 8-bit sRGB PNG into a linear-light H x W x 3 array.
pub fn load_rgb_png(path: &Path) -> Result<Array3<f64>, IoError> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Array3::<f64>::zeros((h as usize, w as usize, 3));
    for (x, y, px) in img.enumerate_pixels() {
        for k in 0..3 {
            out[(y as usize, x as usize, k)] = srgb_to_linear(px[k] as f64 / 255.0);
        }
    }
    Ok(out)
}

/// Write a boolean mask as an 8-bit grayscale PNG (255 inside, 0 outside).
pub fn save_mask_png(mask: &Array2<bool>, path: &Path) -> Result<(), IoError> {
    let (h, w) = mask.dim();
    let mut buf = image::GrayImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            buf.put_pixel(c as u32, r as u32, image::Luma([if mask[(r, c)] { 255 } else { 0 }]));
        }
    }
    buf.save(path)?;
    Ok(())
}

pub fn load_mask_png(path: &Path) -> Result<Array2<bool>, IoError> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let mut out = Array2::<bool>::from_elem((h as usize, w as usize), false);
    for (x, y, px) in img.enumerate_pixels() {
        out[(y as usize, x as usize)] = px[0] >= 128;
    }
    Ok(out)
}

/// Raw float dump: 12-byte header of three little-endian u32 {H, W, K},
/// then H*W*K f32 values row-major.
pub fn save_raw_f32(values: &Array3<f64>, path: &Path) -> Result<(), IoError> {
    let (h, w, k) = values.dim();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for dim in [h, w, k] {
        file.write_all(&(dim as u32).to_le_bytes())?;
    }
    for v in values.iter() {
        file.write_all(&(*v as f32).to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

pub fn load_raw_f32(path: &Path) -> Result<Array3<f64>, IoError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 12];
    file.read_exact(&mut header)?;
    let h = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut data = vec![0u8; h * w * k * 4];
    file.read_exact(&mut data)?;
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(IoError::Format("trailing bytes after raw dump".into()));
    }
    let values: Vec<f64> = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Array3::from_shape_vec((h, w, k), values)
        .map_err(|e| IoError::Format(e.to_string()))
}
