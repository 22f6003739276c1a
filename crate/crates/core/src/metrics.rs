//! PSNR and SSIM between two images of the same shape.

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "mse")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10·log10(peak² / MSE)` with the MSE pooled over all channels.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Mean local SSIM over all fully-contained 11×11 Gaussian windows
/// (σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1), averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let window = ssim_window();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for c in 0..a.channels() {
        let x = a.plane(c);
        let y = b.plane(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let mu_x = filter_valid(x, w, h, &window);
        let mu_y = filter_valid(y, w, h, &window);
        let e_xx = filter_valid(&xx, w, h, &window);
        let e_yy = filter_valid(&yy, w, h, &window);
        let e_xy = filter_valid(&xy, w, h, &window);
        let mut sum = 0.0;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        total += sum / mu_x.len() as f64;
    }
    Ok(total / a.channels() as f64)
}

pub fn quality(a: &Image, b: &Image) -> Result<QualityScore> {
    Ok(QualityScore {
        psnr: psnr(a, b, 1.0)?,
        ssim: ssim(a, b)?,
    })
}

fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|x| (-((x * x) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable correlation keeping only windows that fit inside the plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = row[x..x + n].iter().zip(taps).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        let o = &mut out[y * ow..(y + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            let r = &rows[(y + k) * ow..(y + k + 1) * ow];
            for (a, b) in o.iter_mut().zip(r) {
                *a += t * b;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn pattern(w: usize, h: usize, c: usize) -> Image {
        Image::from_fn(w, h, c, |c, y, x| {
            0.5 + 0.3 * ((x as f64 * 0.4 + c as f64).sin() * (y as f64 * 0.23).cos())
        })
        .unwrap()
    }

    fn with_noise(img: &Image, std: f64, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, std).unwrap();
        img.map(|v| v + n.sample(&mut rng))
    }

    #[test]
    fn psnr_analytic_values() {
        let a = pattern(16, 16, 3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
        let b = a.map(|v| v + 30.0 / 255.0);
        let expect = 20.0 * (255.0f64 / 30.0).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 18.588).abs() < 1e-3);
        let c = a.map(|v| v - 1.0 / 255.0);
        assert!((psnr(&a, &c, 1.0).unwrap() - 48.131).abs() < 1e-3);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn psnr_shape_mismatch() {
        let a = pattern(16, 16, 3);
        let b = pattern(16, 16, 1);
        assert!(matches!(psnr(&a, &b, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = pattern(32, 24, 3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let b = with_noise(&a, 0.05, 1);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_negative_for_inverted_structure() {
        let a = pattern(32, 32, 1);
        let neg = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &neg).unwrap() < 0.0);
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let a = pattern(48, 48, 3);
        let scores: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&s| ssim(&a, &with_noise(&a, s, 3)).unwrap())
            .collect();
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
        assert!(scores[0] > scores[1] && scores[1] > scores[2]);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = pattern(10, 20, 1);
        assert!(matches!(ssim(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = pattern(32, 32, 3);
        for seed in 0..10 {
            let p: Vec<f64> = [0.02, 0.05, 0.1]
                .iter()
                .map(|&s| psnr(&a, &with_noise(&a, s, seed), 1.0).unwrap())
                .collect();
            assert!(p[0] > p[1] && p[1] > p[2]);
        }
    }
}
