//! Gaussian low-pass filtering and the iterative multi-frequency
//! decomposition of an image into one low band and three high bands.
//!
//! A cutoff frequency `f_c` (cycles/pixel) maps to a Gaussian of standard
//! deviation `1 / (2π f_c)`. Kernels span the smallest odd width covering
//! ±3σ and are renormalized after truncation so the DC gain is exactly one.
//! All filtering uses reflect-101 borders (`dcb|abcd|cba`).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{image_sub, Image};

/// Smallest image side accepted by [`blur`].
pub const MIN_BLUR_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn size(&self) -> usize {
        self.taps.len()
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Standard deviation of the Gaussian whose cutoff is `f_c` cycles/pixel.
pub fn gaussian_sigma(f_c: f64) -> Result<f64> {
    if !(f_c > 0.0 && f_c < 0.5) {
        return Err(Error::Parameter(format!(
            "cutoff frequency {f_c} outside (0, 0.5)"
        )));
    }
    Ok(1.0 / (2.0 * PI * f_c))
}

/// Smallest odd integer ≥ 6σ, never below 3.
pub fn kernel_size(sigma: f64) -> usize {
    // tolerate float noise when 6σ lands on an integer
    let mut n = (6.0 * sigma - 1e-9).ceil().max(3.0) as usize;
    if n % 2 == 0 {
        n += 1;
    }
    n
}

/// Samples `exp(-x²/2σ²)` at integer offsets and normalizes to unit sum.
pub fn build_kernel(sigma: f64) -> GaussianKernel {
    debug_assert!(sigma > 0.0);
    let size = kernel_size(sigma);
    let r = (size / 2) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-r..=r).map(|x| (-((x * x) as f64) / denom).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    // exact mirror symmetry regardless of rounding in the division
    for i in 0..size / 2 {
        taps[size - 1 - i] = taps[i];
    }
    GaussianKernel { sigma, taps }
}

/// Maps any integer index into `0..n` by reflect-101 mirroring, repeating
/// the reflection as often as needed for kernels wider than the signal.
#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Gaussian blur at cutoff `f_c`.
pub fn blur(img: &Image, f_c: f64) -> Result<Image> {
    let sigma = gaussian_sigma(f_c)?;
    blur_sigma(img, sigma)
}

/// Separable Gaussian blur with an explicit standard deviation:
/// horizontal pass then vertical pass, each plane independently.
pub fn blur_sigma(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if img.width() < MIN_BLUR_SIDE || img.height() < MIN_BLUR_SIDE {
        return Err(Error::Dimension(format!(
            "blur needs at least {MIN_BLUR_SIDE}x{MIN_BLUR_SIDE}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let kernel = build_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(img.len());
    let mut tmp = vec![0.0; w * h];
    for c in 0..img.channels() {
        horizontal_pass(img.plane(c), &mut tmp, w, h, kernel.taps());
        let start = out.len();
        out.resize(start + w * h, 0.0);
        vertical_pass(&tmp, &mut out[start..], w, h, kernel.taps());
    }
    Ok(Image::from_parts(w, h, img.channels(), out))
}

fn horizontal_pass(src: &[f64], dst: &mut [f64], w: usize, h: usize, taps: &[f64]) {
    let r = taps.len() / 2;
    let mut padded = vec![0.0; w + 2 * r];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[reflect101(i as isize - r as isize, w)];
        }
        let out = &mut dst[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let window = &padded[x..x + taps.len()];
            *o = window.iter().zip(taps).map(|(a, b)| a * b).sum();
        }
    }
}

fn vertical_pass(src: &[f64], dst: &mut [f64], w: usize, h: usize, taps: &[f64]) {
    let r = taps.len() as isize / 2;
    for y in 0..h {
        let out = &mut dst[y * w..(y + 1) * w];
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &t) in taps.iter().enumerate() {
            let sy = reflect101(y as isize + k as isize - r, h);
            let row = &src[sy * w..(sy + 1) * w];
            for (o, &s) in out.iter_mut().zip(row) {
                *o += t * s;
            }
        }
    }
}

/// The four output bands of the decomposition plus its two intermediate
/// low-pass images. `lfs1 + hfs1 + hfs2 + hfs3` reconstructs the input.
#[derive(Debug, Clone)]
pub struct FrequencyDecomposition {
    pub lfs1: Image,
    pub lfs2: Image,
    pub lfs3: Image,
    pub hfs1: Image,
    pub hfs2: Image,
    pub hfs3: Image,
    pub cutoffs: (f64, f64, f64),
}

impl FrequencyDecomposition {
    /// Sum of the four bands.
    pub fn reconstruct(&self) -> Image {
        let mut out = self.lfs1.clone();
        for band in [&self.hfs1, &self.hfs2, &self.hfs3] {
            for (o, b) in out.data_mut().iter_mut().zip(band.data()) {
                *o += b;
            }
        }
        out
    }
}

/// Iteratively splits `img` at `f_c3`, then `f_c2`, then `f_c1`.
pub fn decompose(img: &Image, f_c1: f64, f_c2: f64, f_c3: f64) -> Result<FrequencyDecomposition> {
    if !(f_c1 < f_c2 && f_c2 < f_c3) {
        return Err(Error::Parameter(format!(
            "cutoffs must satisfy f_c1 < f_c2 < f_c3, got {f_c1}, {f_c2}, {f_c3}"
        )));
    }
    let lfs3 = blur(img, f_c3)?;
    let hfs3 = image_sub(img, &lfs3)?;
    let lfs2 = blur(&lfs3, f_c2)?;
    let hfs2 = image_sub(&lfs3, &lfs2)?;
    let lfs1 = blur(&lfs2, f_c1)?;
    let hfs1 = image_sub(&lfs2, &lfs1)?;
    Ok(FrequencyDecomposition {
        lfs1,
        lfs2,
        lfs3,
        hfs1,
        hfs2,
        hfs3,
        cutoffs: (f_c1, f_c2, f_c3),
    })
}

/// Mid-band image `blur(img, f_ref2) - blur(img, f_ref1)`.
pub fn band_pass_ref(img: &Image, f_ref1: f64, f_ref2: f64) -> Result<Image> {
    if f_ref1 >= f_ref2 {
        return Err(Error::Parameter(format!(
            "reference band needs f_ref1 < f_ref2, got {f_ref1}, {f_ref2}"
        )));
    }
    let wide = blur(img, f_ref1)?;
    let narrow = blur(img, f_ref2)?;
    image_sub(&narrow, &wide)
}
