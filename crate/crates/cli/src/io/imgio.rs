//! Gray-image ingestion (PGM/PNG) and PGM output. Color inputs are reduced
//! with ITU-R 601 luma weights, then scaled into [0, 1].

use std::path::Path;

use geocloud_core::image::GrayImage;

use super::IoError;

pub fn load_gray(path: &Path) -> Result<GrayImage<f64>, IoError> {
    let img = image::open(path).map_err(|e| IoError::ParseError(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut data = Vec::with_capacity((w * h) as usize);
    for px in rgb.pixels() {
        let [r, g, b] = px.0;
        let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
        data.push(luma / 255.0);
    }
    GrayImage::new(h as usize, w as usize, data)
        .map_err(|e| IoError::ParseError(format!("{}: {e}", path.display())))
}

pub fn save_pgm(path: &Path, img: &GrayImage<f64>) -> Result<(), IoError> {
    let mut bytes = Vec::with_capacity(img.height() * img.width());
    for row in 0..img.height() {
        for col in 0..img.width() {
            bytes.push((img.get(row, col).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&bytes);
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads every image file referenced by a correspondence header, in order.
pub fn load_image_set(dir: &Path, names: &[String]) -> Result<Vec<GrayImage<f64>>, IoError> {
    names.iter().map(|n| load_gray(&dir.join(n))).collect()
}
