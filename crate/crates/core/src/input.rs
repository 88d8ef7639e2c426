use crate::error::{Error, Result};

/// Grayscale network input, values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InputImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl InputImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadDimensions(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::BadDimensions("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Quantizes to 8-bit levels, as stored in PGM files.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| f32::from(b) / 255.0).collect())
    }

    /// Bilinear resampling with pixel centers aligned.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadDimensions(format!("cannot resize to {width}x{height}")));
        }
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let sample = |pos: f64, len: usize| -> (usize, usize, f64) {
            let p = pos.clamp(0.0, (len - 1) as f64);
            let i0 = p.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, p - i0 as f64)
        };
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, fy) = sample((y as f64 + 0.5) * sy - 0.5, self.height);
            for x in 0..width {
                let (x0, x1, fx) = sample((x as f64 + 0.5) * sx - 0.5, self.width);
                let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
                let bottom = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
                pixels.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0) as f32);
            }
        }
        Self::new(width, height, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_range_and_size() {
        assert!(InputImage::new(2, 2, vec![0.0, 0.5, 1.0, 1.5]).is_err());
        assert!(InputImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(InputImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn byte_round_trip() {
        let bytes: Vec<u8> = (0..=255).collect();
        let img = InputImage::from_u8(16, 16, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }

    #[test]
    fn halving_averages_blocks() {
        // With centers aligned, a 2x downscale samples the middle of each 2x2 block.
        let img = InputImage::from_fn(6, 4, |x, y| ((x * 7 + y * 13) % 17) as f32 / 16.0).unwrap();
        let small = img.resize(3, 2).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let block = (img.get(2 * x, 2 * y) + img.get(2 * x + 1, 2 * y) + img.get(2 * x, 2 * y + 1)
                    + img.get(2 * x + 1, 2 * y + 1))
                    / 4.0;
                assert!((small.get(x, y) - block).abs() < 1e-6);
            }
        }
    }
}
