use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SynthError;
use crate::rgbd::io::read_rgb_png;

/// RGB image in `[0, 1]`, row-major; `v = 0` is the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl Texture {
    pub fn constant(color: [f64; 3]) -> Self {
        Texture { width: 1, height: 1, data: vec![color] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Texture { width, height, data }
    }

    pub fn checker(size: usize, cells: usize, a: [f64; 3], b: [f64; 3]) -> Self {
        let cell = (size / cells.max(1)).max(1);
        Texture::from_fn(size, size, |r, c| if (r / cell + c / cell).is_multiple_of(2) { a } else { b })
    }

    pub fn gradient(size: usize) -> Self {
        let s = (size.max(2) - 1) as f64;
        Texture::from_fn(size, size, |r, c| [c as f64 / s, r as f64 / s, 1.0 - 0.5 * (r + c) as f64 / s])
    }

    /// Smooth random color field: a sum of randomly oriented sinusoids per
    /// channel. Colors vary everywhere, so local color identifies position.
    pub fn noise(size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<[(f64, f64, f64, f64); 4]> = (0..3)
            .map(|_| {
                std::array::from_fn(|_| {
                    let freq = rng.random_range(2.0..9.0) * std::f64::consts::TAU;
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let amp = rng.random_range(0.5..1.0);
                    (freq * angle.cos(), freq * angle.sin(), phase, amp)
                })
            })
            .collect();
        let s = size as f64;
        Texture::from_fn(size, size, |r, c| {
            let (x, y) = ((c as f64 + 0.5) / s, (r as f64 + 0.5) / s);
            std::array::from_fn(|ch| {
                let (sum, norm) = waves[ch]
                    .iter()
                    .fold((0.0, 0.0), |(acc, n), &(kx, ky, ph, a)| (acc + a * (kx * x + ky * y + ph).sin(), n + a));
                0.5 + 0.5 * sum / norm
            })
        })
    }

    pub fn load_png(path: &Path) -> Result<Self, SynthError> {
        let (width, height, data) = read_rgb_png(path).map_err(|e| SynthError::Io(e.to_string()))?;
        Ok(Texture { width, height, data })
    }

    fn texel(&self, row: isize, col: isize) -> [f64; 3] {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    /// Bilinear lookup with clamp-to-edge; texel centers sit at `(i + 0.5) / size`.
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let x = u * self.width as f64 - 0.5;
        let y = v * self.height as f64 - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let tx = x - x0;
        let ty = y - y0;
        let (c0, r0) = (x0 as isize, y0 as isize);
        let a = self.texel(r0, c0);
        let b = self.texel(r0, c0 + 1);
        let c = self.texel(r0 + 1, c0);
        let d = self.texel(r0 + 1, c0 + 1);
        // lerp form keeps equal texels exact
        std::array::from_fn(|k| {
            let top = a[k] + tx * (b[k] - a[k]);
            let bottom = c[k] + tx * (d[k] - c[k]);
            top + ty * (bottom - top)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hand_computed() {
        // 2x2: texel centers at 0.25 and 0.75
        let t = Texture { width: 2, height: 2, data: vec![[0.0; 3], [1.0; 3], [0.0; 3], [1.0; 3]] };
        assert_eq!(t.sample(0.25, 0.25), [0.0; 3]);
        assert_eq!(t.sample(0.75, 0.25), [1.0; 3]);
        assert_eq!(t.sample(0.5, 0.5), [0.5; 3]);
        // clamp to edge outside the outer texel centers
        assert_eq!(t.sample(0.0, 0.0), [0.0; 3]);
        assert_eq!(t.sample(1.0, 1.0), [1.0; 3]);
    }

    #[test]
    fn noise_is_seeded() {
        assert_eq!(Texture::noise(32, 4), Texture::noise(32, 4));
        assert_ne!(Texture::noise(32, 4), Texture::noise(32, 5));
        assert!(Texture::noise(32, 4).data.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
