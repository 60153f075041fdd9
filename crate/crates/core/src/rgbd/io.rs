//! PNG and JSON encodings: 8-bit RGB, 16-bit depth in millimeters, 8-bit
//! mask (0/255), intrinsics as JSON.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, ImageReader};

use super::{Intrinsics, RgbdError};

fn encode(width: usize, height: usize, bytes: &[u8], color: ExtendedColorType) -> Result<Vec<u8>, RgbdError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| RgbdError::Image(e.to_string()))?;
    Ok(out)
}

pub fn encode_rgb_png(width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<Vec<u8>, RgbdError> {
    let bytes: Vec<u8> = rgb.iter().flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)).collect();
    encode(width, height, &bytes, ExtendedColorType::Rgb8)
}

/// Depth in meters to 16-bit millimeters.
pub fn encode_depth_png(width: usize, height: usize, depth: &[f64]) -> Result<Vec<u8>, RgbdError> {
    let mut bytes = Vec::with_capacity(depth.len() * 2);
    for d in depth {
        let mm = (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        bytes.extend_from_slice(&mm.to_ne_bytes());
    }
    encode(width, height, &bytes, ExtendedColorType::L16)
}

pub fn encode_mask_png(width: usize, height: usize, mask: &[bool]) -> Result<Vec<u8>, RgbdError> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode(width, height, &bytes, ExtendedColorType::L8)
}

fn open(path: &Path) -> Result<image::DynamicImage, RgbdError> {
    let bytes = fs::read(path).map_err(|_| RgbdError::MissingFile(path.display().to_string()))?;
    ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| RgbdError::Image(format!("{}: {e}", path.display())))?
        .decode()
        .map_err(|e| RgbdError::Image(format!("{}: {e}", path.display())))
}

pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<[f64; 3]>), RgbdError> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let rgb = img.pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect();
    Ok((w as usize, h as usize, rgb))
}

pub fn read_depth_png(path: &Path) -> Result<(usize, usize, Vec<f64>), RgbdError> {
    let img = open(path)?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(RgbdError::Image(format!(
                "{}: depth must be 16-bit grayscale, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.pixels().map(|p| p.0[0] as f64 / 1000.0).collect()))
}

pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>), RgbdError> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.pixels().map(|p| p.0[0] >= 128).collect()))
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics, RgbdError> {
    let text = fs::read_to_string(path).map_err(|_| RgbdError::MissingFile(path.display().to_string()))?;
    let k: Intrinsics =
        serde_json::from_str(&text).map_err(|e| RgbdError::Image(format!("{}: {e}", path.display())))?;
    k.validate()?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_round_trip_in_millimeters() {
        let dir = tempfile::tempdir().unwrap();
        let depth = vec![0.0, 0.5, 1.2345, 2.0];
        let path = dir.path().join("depth.png");
        fs::write(&path, encode_depth_png(2, 2, &depth).unwrap()).unwrap();
        let (w, h, back) = read_depth_png(&path).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(back, vec![0.0, 0.5, 1.235, 2.0]);
    }

    #[test]
    fn rgb_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = vec![[0.0, 1.0, 0.2], [1.0, 0.0, 0.6]];
        fs::write(dir.path().join("rgb.png"), encode_rgb_png(2, 1, &rgb).unwrap()).unwrap();
        let (_, _, back) = read_rgb_png(&dir.path().join("rgb.png")).unwrap();
        for (a, b) in back.iter().zip(&rgb) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
        fs::write(dir.path().join("m.png"), encode_mask_png(2, 1, &[true, false]).unwrap()).unwrap();
        assert_eq!(read_mask_png(&dir.path().join("m.png")).unwrap().2, vec![true, false]);
    }

    #[test]
    fn missing_file_is_named() {
        let err = read_depth_png(Path::new("/nonexistent/depth.png")).unwrap_err();
        assert_eq!(err, RgbdError::MissingFile("/nonexistent/depth.png".into()));
    }
}
