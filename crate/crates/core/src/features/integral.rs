//! Summed-area tables.

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle, image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

/// `(width + 1) x (height + 1)` cumulative sums for each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    tables: Vec<Vec<f64>>,
}

impl IntegralImage {
    /// Channels are row-major maps of `width * height` values.
    pub fn build(width: usize, height: usize, channels: &[Vec<f64>]) -> Result<Self> {
        let stride = width + 1;
        let mut tables = Vec::with_capacity(channels.len());
        for c in channels {
            if c.len() != width * height {
                return Err(Error::Dimension { expected: width * height, got: c.len() });
            }
            let mut t = vec![0.0; stride * (height + 1)];
            for y in 0..height {
                let mut row = 0.0;
                for x in 0..width {
                    row += c[y * width + x];
                    t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
                }
            }
            tables.push(t);
        }
        Ok(IntegralImage { width, height, tables })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.tables.len()
    }

    /// Sum of channel `c` over `r`; the rectangle must fit.
    #[inline]
    pub fn sum(&self, c: usize, r: Rect) -> f64 {
        let s = self.width + 1;
        let t = &self.tables[c];
        let (x0, y0, x1, y1) = (r.x, r.y, r.x + r.w, r.y + r.h);
        t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0]
    }

    pub fn checked_sum(&self, c: usize, r: Rect) -> Result<f64> {
        if !r.fits(self.width, self.height) || c >= self.tables.len() {
            return Err(Error::WindowOutOfBounds([r.x, r.y, r.w, r.h]));
        }
        Ok(self.sum(c, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn all_ones() {
        let ii = IntegralImage::build(4, 4, &[vec![1.0; 16]]).unwrap();
        assert_eq!(ii.sum(0, Rect::new(0, 0, 4, 4)), 16.0);
    }

    #[test]
    fn single_pixel() {
        let ii = IntegralImage::build(1, 1, &[vec![2.5]]).unwrap();
        assert_eq!(ii.sum(0, Rect::new(0, 0, 1, 1)), 2.5);
    }

    #[test]
    fn every_subrectangle_matches_direct_sum() {
        let mut rng = rand_pcg::Pcg32::seed_from_u64(1);
        let c: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ii = IntegralImage::build(8, 8, &[c.clone()]).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                for h in 0..=8 - y {
                    for w in 0..=8 - x {
                        let mut direct = 0.0;
                        for yy in y..y + h {
                            for xx in x..x + w {
                                direct += c[yy * 8 + xx];
                            }
                        }
                        let got = ii.sum(0, Rect::new(x, y, w, h));
                        assert!((got - direct).abs() < 1e-12, "{x} {y} {w} {h}");
                    }
                }
            }
        }
    }

    #[test]
    fn bounds_and_dims() {
        let ii = IntegralImage::build(3, 2, &[vec![0.0; 6]]).unwrap();
        assert!(ii.checked_sum(0, Rect::new(1, 0, 3, 1)).is_err());
        assert!(IntegralImage::build(3, 2, &[vec![0.0; 5]]).is_err());
    }
}
