use nalgebra::Vector3;

use super::{Intrinsics, RgbdError};
use crate::geom::{PointCloud, Pose};

/// Color, metric depth and object mask sharing one `height × width` grid,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdPatch {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    /// Meters, `0` = no measurement.
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    pub intrinsics: Intrinsics,
    /// Object-to-camera ground truth, when known.
    pub pose: Option<Pose>,
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

impl RgbdPatch {
    pub fn blank(intrinsics: Intrinsics) -> Self {
        let n = intrinsics.width * intrinsics.height;
        RgbdPatch {
            width: intrinsics.width,
            height: intrinsics.height,
            rgb: vec![[0.0; 3]; n],
            depth: vec![0.0; n],
            mask: vec![false; n],
            intrinsics,
            pose: None,
        }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Checks buffer sizes and depth sign, then clears mask pixels without depth.
    pub fn validate(&mut self) -> Result<(), RgbdError> {
        let n = self.width * self.height;
        if self.rgb.len() != n || self.depth.len() != n || self.mask.len() != n {
            return Err(RgbdError::ShapeMismatch(format!(
                "{}x{} patch with rgb {}, depth {}, mask {}",
                self.width,
                self.height,
                self.rgb.len(),
                self.depth.len(),
                self.mask.len()
            )));
        }
        if self.intrinsics.width != self.width || self.intrinsics.height != self.height {
            return Err(RgbdError::ShapeMismatch("intrinsics size differs from image size".into()));
        }
        self.intrinsics.validate()?;
        if self.depth.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(RgbdError::InvalidDepth);
        }
        for (m, d) in self.mask.iter_mut().zip(&self.depth) {
            if *d <= 0.0 {
                *m = false;
            }
        }
        Ok(())
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Back-projects every masked pixel with positive depth. Returns the
    /// colored cloud and the `(row, col)` each point came from.
    pub fn backproject(&self) -> (PointCloud, Vec<(usize, usize)>) {
        let mut points = Vec::new();
        let mut colors = Vec::new();
        let mut pixels = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                let i = self.index(row, col);
                let z = self.depth[i];
                if self.mask[i] && z > 0.0 {
                    points.push(self.intrinsics.backproject_pixel(col as f64, row as f64, z));
                    colors.push(self.rgb[i]);
                    pixels.push((row, col));
                }
            }
        }
        (PointCloud { points, colors: Some(colors) }, pixels)
    }

    /// Camera-frame point of one pixel, if it has depth.
    pub fn point_at(&self, row: usize, col: usize) -> Option<Vector3<f64>> {
        let z = self.depth[self.index(row, col)];
        (z > 0.0).then(|| self.intrinsics.backproject_pixel(col as f64, row as f64, z))
    }

    /// Bounding box of the mask grown by `padding` × its size on each side,
    /// clipped to the image.
    pub fn mask_bbox(&self, padding: f64) -> Option<PixelBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for row in 0..self.height {
            for col in 0..self.width {
                if self.mask[self.index(row, col)] {
                    x0 = x0.min(col);
                    y0 = y0.min(row);
                    x1 = x1.max(col + 1);
                    y1 = y1.max(row + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return None;
        }
        let px = ((x1 - x0) as f64 * padding).round() as usize;
        let py = ((y1 - y0) as f64 * padding).round() as usize;
        Some(PixelBox {
            x0: x0.saturating_sub(px),
            y0: y0.saturating_sub(py),
            x1: (x1 + px).min(self.width),
            y1: (y1 + py).min(self.height),
        })
    }

    /// Crops `bbox` and resamples it to `out_w × out_h` with nearest-neighbour
    /// lookup. Depth keeps its metric values; intrinsics follow the crop.
    pub fn crop_resize(&self, bbox: PixelBox, out_w: usize, out_h: usize) -> Result<RgbdPatch, RgbdError> {
        if bbox.x1 <= bbox.x0 || bbox.y1 <= bbox.y0 || bbox.x1 > self.width || bbox.y1 > self.height {
            return Err(RgbdError::ShapeMismatch(format!("crop box {bbox:?} outside {}x{}", self.width, self.height)));
        }
        if out_w == 0 || out_h == 0 {
            return Err(RgbdError::ShapeMismatch("zero output size".into()));
        }
        let sx = bbox.width() as f64 / out_w as f64;
        let sy = bbox.height() as f64 / out_h as f64;
        let k = &self.intrinsics;
        let intrinsics = Intrinsics {
            fx: k.fx / sx,
            fy: k.fy / sy,
            cx: (k.cx - bbox.x0 as f64 + 0.5) / sx - 0.5,
            cy: (k.cy - bbox.y0 as f64 + 0.5) / sy - 0.5,
            width: out_w,
            height: out_h,
        };
        let mut out = RgbdPatch::blank(intrinsics);
        out.pose = self.pose;
        for row in 0..out_h {
            let src_row = bbox.y0 + (((row as f64 + 0.5) * sy).floor() as usize).min(bbox.height() - 1);
            for col in 0..out_w {
                let src_col = bbox.x0 + (((col as f64 + 0.5) * sx).floor() as usize).min(bbox.width() - 1);
                let s = self.index(src_row, src_col);
                let d = out.index(row, col);
                out.rgb[d] = self.rgb[s];
                out.depth[d] = self.depth[s];
                out.mask[d] = self.mask[s];
            }
        }
        Ok(out)
    }
}
