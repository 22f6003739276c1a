//! Synthetic noise, noise-level measurement and empirical checks of how
//! noise and texture correlate across disjoint frequency bands.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freq::{blur, blur_sigma};
use crate::image::Image;
use crate::spectral::radial_filter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    Correlated,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "correlated" => Ok(NoiseKind::Correlated),
            other => Err(Error::Parameter(format!(
                "unknown noise kind {other:?} (expected white, pink or correlated)"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Correlated => "correlated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation on the `[0, 1]` intensity scale.
    pub std: f64,
    /// Correlation length in pixels; only shapes `Correlated` noise.
    pub corr_length: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, std: f64, seed: u64) -> Self {
        Self {
            kind,
            std,
            corr_length: 1.0,
            seed,
        }
    }

    pub fn with_corr_length(mut self, corr_length: f64) -> Self {
        self.corr_length = corr_length;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::Parameter(format!("noise std must be positive, got {}", self.std)));
        }
        if !(self.corr_length >= 1.0 && self.corr_length.is_finite()) {
            return Err(Error::Parameter(format!(
                "correlation length must be at least 1 px, got {}",
                self.corr_length
            )));
        }
        Ok(())
    }
}

/// A zero-signal noise field of the given shape.
///
/// White noise is i.i.d. Gaussian. Pink noise shapes white Gaussian noise by
/// `1 / max(f, 1/max(W, H))` in the frequency domain with the DC bin
/// removed; correlated noise blurs white noise with a Gaussian of standard
/// deviation `L_c / 2`. Both shaped kinds are then set to zero mean and the
/// exact target standard deviation, plane by plane.
pub fn noise_field(width: usize, height: usize, channels: usize, spec: &NoiseSpec) -> Result<Image> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plane = width * height;
    let mut data: Vec<f64> = (0..plane * channels)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    match spec.kind {
        NoiseKind::White => data.iter_mut().for_each(|v| *v *= spec.std),
        NoiseKind::Pink => {
            let floor = 1.0 / width.max(height) as f64;
            for chunk in data.chunks_exact_mut(plane) {
                let shaped = radial_filter(chunk, width, height, |f| {
                    if f == 0.0 {
                        0.0
                    } else {
                        1.0 / f.max(floor)
                    }
                });
                chunk.copy_from_slice(&shaped);
                standardize(chunk, spec.std);
            }
        }
        NoiseKind::Correlated => {
            let white = Image::new(width, height, channels, data)?;
            data = blur_sigma(&white, spec.corr_length / 2.0)?.into_data();
            for chunk in data.chunks_exact_mut(plane) {
                standardize(chunk, spec.std);
            }
        }
    }
    Image::new(width, height, channels, data)
}

fn standardize(values: &mut [f64], std: f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let k = if sd > 0.0 { std / sd } else { 0.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) * k);
}

/// `clean + noise`; the result is not clamped.
pub fn add_noise(clean: &Image, spec: &NoiseSpec) -> Result<Image> {
    let field = noise_field(clean.width(), clean.height(), clean.channels(), spec)?;
    crate::image::image_add(clean, &field)
}

/// Population standard deviation of `noisy - clean`, all channels pooled.
pub fn measure_noise_std(noisy: &Image, clean: &Image) -> Result<f64> {
    Ok(crate::image::image_sub(noisy, clean)?.std())
}

/// A radial frequency band `[lo, hi)` in cycles/pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::Parameter(format!("band needs 0 <= lo < hi, got [{lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }
}

/// Content of `img` inside the ideal radial band, one plane at a time.
pub fn band_component(img: &Image, band: Band) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(img.len());
    for c in 0..img.channels() {
        data.extend(radial_filter(img.plane(c), w, h, |f| {
            if f >= band.lo && f < band.hi {
                1.0
            } else {
                0.0
            }
        }));
    }
    Image::from_parts(w, h, img.channels(), data)
}

/// Pearson correlation between the amplitude envelopes `|x|` of two
/// band-limited versions of `img`, envelopes mean-removed per channel.
///
/// Bands must be disjoint with `band_a` below `band_b`.
pub fn cross_band_correlation(img: &Image, band_a: Band, band_b: Band) -> Result<f64> {
    if band_a.hi > band_b.lo {
        return Err(Error::Parameter(format!(
            "bands overlap: [{}, {}) and [{}, {})",
            band_a.lo, band_a.hi, band_b.lo, band_b.hi
        )));
    }
    Ok(envelope_correlation(img, band_a, band_b))
}

pub(crate) fn envelope_correlation(img: &Image, band_a: Band, band_b: Band) -> f64 {
    let a = band_component(img, band_a);
    let b = band_component(img, band_b);
    let n = img.plane_len() as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for c in 0..img.channels() {
        let ea: Vec<f64> = a.plane(c).iter().map(|v| v.abs()).collect();
        let eb: Vec<f64> = b.plane(c).iter().map(|v| v.abs()).collect();
        let ma = ea.iter().sum::<f64>() / n;
        let mb = eb.iter().sum::<f64>() / n;
        for (x, y) in ea.iter().zip(&eb) {
            let (dx, dy) = (x - ma, y - mb);
            sab += dx * dy;
            saa += dx * dx;
            sbb += dy * dy;
        }
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Upper estimate `π L_c² / (M N)` for the cross-band correlation of noise
/// with correlation length `L_c` on an `M×N` image.
pub fn noise_correlation_bound(corr_length: f64, height: usize, width: usize) -> f64 {
    PI * corr_length * corr_length / (height * width) as f64
}

/// Relative gap between the frequency rings used by the analytic texture
/// bound; echoed in reports only.
pub const RING_GAP: f64 = 0.02;

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub width: usize,
    pub height: usize,
    pub noise_kind: NoiseKind,
    pub noise_std: f64,
    pub corr_length: f64,
    pub seed: u64,
    pub band_a: Band,
    pub band_b: Band,
    pub rho_noise_empirical: f64,
    pub rho_noise_bound: f64,
    pub rho_tex_empirical: f64,
    pub delta_gap: f64,
    pub f_c_max: f64,
    pub ring_gap: f64,
}

impl TheoryReport {
    pub const CSV_HEADER: &'static str = "width,height,noise_kind,noise_std,corr_length,seed,\
band_a_lo,band_a_hi,band_b_lo,band_b_hi,rho_noise_empirical,rho_noise_bound,\
rho_tex_empirical,delta_gap,f_c_max,ring_gap";

    pub fn csv_row(&self) -> String {
        use crate::fmt_sig as f;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.width,
            self.height,
            self.noise_kind,
            f(self.noise_std),
            f(self.corr_length),
            self.seed,
            f(self.band_a.lo),
            f(self.band_a.hi),
            f(self.band_b.lo),
            f(self.band_b.hi),
            f(self.rho_noise_empirical),
            f(self.rho_noise_bound),
            f(self.rho_tex_empirical),
            f(self.delta_gap),
            f(self.f_c_max),
            f(self.ring_gap)
        )
    }
}

/// Bands between the default decomposition cutoffs.
pub fn default_theory_bands() -> (Band, Band) {
    (Band { lo: 0.05, hi: 0.07 }, Band { lo: 0.07, hi: 0.1 })
}

/// Measures texture and noise cross-band correlations for `clean` and a
/// noise field drawn from `spec`, alongside the analytic noise bound.
pub fn theory_report(clean: &Image, spec: &NoiseSpec, bands: (Band, Band)) -> Result<TheoryReport> {
    let (band_a, band_b) = bands;
    let noise = noise_field(clean.width(), clean.height(), clean.channels(), spec)?;
    let rho_noise = cross_band_correlation(&noise, band_a, band_b)?;
    let rho_tex = cross_band_correlation(clean, band_a, band_b)?;
    Ok(TheoryReport {
        width: clean.width(),
        height: clean.height(),
        noise_kind: spec.kind,
        noise_std: spec.std,
        corr_length: spec.corr_length,
        seed: spec.seed,
        band_a,
        band_b,
        rho_noise_empirical: rho_noise,
        rho_noise_bound: noise_correlation_bound(spec.corr_length, clean.height(), clean.width()),
        rho_tex_empirical: rho_tex,
        delta_gap: rho_tex / rho_noise.abs().max(1e-9),
        f_c_max: band_b.hi,
        ring_gap: RING_GAP,
    })
}

/// Residual noise left in the low band at each cutoff:
/// `std(blur(noisy, f) - blur(clean, f))`.
pub fn lfs_residual_curve(clean: &Image, noisy: &Image, cutoffs: &[f64]) -> Result<Vec<(f64, f64)>> {
    clean.ensure_same_shape(noisy, "lfs_residual_curve")?;
    cutoffs
        .iter()
        .map(|&f| Ok((f, measure_noise_std(&blur(noisy, f)?, &blur(clean, f)?)?)))
        .collect()
}
