//! Separable texture filter bank applied to intensity.

use crate::image::GrayImage;
use crate::scalar::Real;

/// Filter families and scales. Each derivative scale contributes one
/// response per orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub gaussian_sigmas: Vec<f64>,
    pub derivative_sigmas: Vec<f64>,
    /// Orientations of the first derivatives, degrees.
    pub orientations: Vec<f64>,
    pub log_sigmas: Vec<f64>,
}

impl Default for FilterBank {
    /// 17 filters: Gaussians at 1, 2, 4; first derivatives at 0, 45, 90
    /// and 135 degrees at 1, 2, 4; Laplacians of Gaussian at 1, 2.
    fn default() -> Self {
        FilterBank {
            gaussian_sigmas: vec![1.0, 2.0, 4.0],
            derivative_sigmas: vec![1.0, 2.0, 4.0],
            orientations: vec![0.0, 45.0, 90.0, 135.0],
            log_sigmas: vec![1.0, 2.0],
        }
    }
}

fn radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

fn gauss(sigma: f64) -> Vec<f64> {
    let r = radius(sigma) as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Derivative-of-Gaussian correlation kernel, antisymmetric, scaled so a
/// unit ramp responds with exactly 1.
fn gauss_d1(sigma: f64) -> Vec<f64> {
    let r = radius(sigma) as isize;
    let g = gauss(sigma);
    let k: Vec<f64> = (-r..=r).zip(&g).map(|(i, w)| i as f64 / (sigma * sigma) * w).collect();
    let m: f64 = (-r..=r).zip(&k).map(|(i, w)| i as f64 * w).sum();
    k.into_iter().map(|v| v / m).collect()
}

/// Second derivative of the sampled Gaussian with its mean removed.
fn gauss_d2(sigma: f64) -> Vec<f64> {
    let r = radius(sigma) as isize;
    let g = gauss(sigma);
    let s2 = sigma * sigma;
    let k: Vec<f64> = (-r..=r).zip(&g).map(|(i, w)| ((i * i) as f64 / s2 - 1.0) / s2 * w).collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.into_iter().map(|v| v - mean).collect()
}

/// `kx` along rows then `ky` along columns, replicated border.
fn separable<T: Real>(img: &GrayImage<T>, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, k) in kx.iter().enumerate() {
                s += k * img.get_clamped(x as isize + j as isize - rx, y as isize).as_f64();
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, k) in ky.iter().enumerate() {
                let yy = (y as isize + j as isize - ry).clamp(0, h as isize - 1) as usize;
                s += k * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.gaussian_sigmas.len() + self.derivative_sigmas.len() * self.orientations.len() + self.log_sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest kernel half-width: responses at a pixel depend on pixels at
    /// most this far away.
    pub fn radius(&self) -> usize {
        self.gaussian_sigmas
            .iter()
            .chain(&self.derivative_sigmas)
            .chain(&self.log_sigmas)
            .map(|&s| radius(s))
            .max()
            .unwrap_or(0)
    }

    /// Per-pixel responses, one row-major map per filter, in the order
    /// Gaussians, derivatives (scale-major), Laplacians.
    pub fn apply<T: Real>(&self, img: &GrayImage<T>) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for &s in &self.gaussian_sigmas {
            let g = gauss(s);
            out.push(separable(img, &g, &g));
        }
        for &s in &self.derivative_sigmas {
            let (g, d) = (gauss(s), gauss_d1(s));
            let gx = separable(img, &d, &g);
            let gy = separable(img, &g, &d);
            for &deg in &self.orientations {
                let (sn, cs) = deg.to_radians().sin_cos();
                out.push(gx.iter().zip(&gy).map(|(a, b)| cs * a + sn * b).collect());
            }
        }
        for &s in &self.log_sigmas {
            let (g, d2) = (gauss(s), gauss_d2(s));
            let xx = separable(img, &d2, &g);
            let yy = separable(img, &g, &d2);
            out.push(xx.iter().zip(&yy).map(|(a, b)| a + b).collect());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_has_17_filters() {
        let b = FilterBank::default();
        assert_eq!(b.len(), 17);
        assert_eq!(b.radius(), 12);
        let img = GrayImage::<f64>::filled(20, 10, 0.5);
        assert_eq!(b.apply(&img).len(), 17);
    }

    #[test]
    fn kernels_have_expected_moments() {
        for s in [1.0, 2.0, 4.0] {
            assert!((gauss(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(gauss_d1(s).iter().sum::<f64>().abs() < 1e-12);
            assert!(gauss_d2(s).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn horizontal_ramp_derivative() {
        let img = GrayImage::<f64>::from_fn(40, 40, |x, _| x as f64);
        let maps = FilterBank::default().apply(&img);
        // 0 degree derivative at scale 1 is index 3; 90 degree is index 5
        let (x, y) = (20, 20);
        assert!((maps[3][y * 40 + x] - 1.0).abs() < 1e-9);
        assert!(maps[5][y * 40 + x].abs() < 1e-9);
        // 45 degrees picks up cos(45)
        assert!((maps[4][y * 40 + x] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }
}
