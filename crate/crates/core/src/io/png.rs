//! 8-bit PNG images.

use std::path::Path;

use super::IoError;
use crate::grid::Grid;
use crate::image::Image;

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB or grayscale image with values in `[0, 1]`.
pub fn write_png(path: &Path, img: &Image) -> Result<(), IoError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.as_slice().iter().map(|v| quantize(*v)).collect();
    let color = if img.channels() == 3 {
        image::ExtendedColorType::Rgb8
    } else {
        image::ExtendedColorType::L8
    };
    image::save_buffer_with_format(path, &bytes, w, h, color, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_png_gray(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    write_png(path, &Image::from_gray(grid))
}

/// Reads a PNG as RGB, or as one channel when the file is grayscale.
pub fn read_png(path: &Path) -> Result<Image, IoError> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        Ok(Image::new(w, h, 3, rgb.as_raw().iter().map(|v| *v as f64 / 255.0).collect()))
    } else {
        let g = img.to_luma8();
        Ok(Image::new(w, h, 1, g.as_raw().iter().map(|v| *v as f64 / 255.0).collect()))
    }
}
