//! Zero-shot single-image denoising by cross-frequency consistency.
//!
//! A noisy image is split into a low band and three high bands with
//! Gaussian filters. A ~1.5k-parameter convolutional extractor is trained
//! on that one image so that its outputs on the high bands agree with each
//! other and with a mid-frequency reference, under a total variation
//! penalty; the denoised image is the low band plus the three extracted
//! texture layers.

pub mod cli;
pub mod denoiser;
pub mod error;
pub mod freq;
pub mod image;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod objective;
pub mod spectral;

pub use denoiser::{ablate, denoise, DenoiseResult, LossTerm, TrainConfig};
pub use error::{Error, Result};
pub use freq::{band_pass_ref, blur, build_kernel, decompose, gaussian_sigma, FrequencyDecomposition, GaussianKernel};
pub use image::{image_add, image_sub, load_image, save_image, Image};
pub use metrics::{psnr, ssim, QualityScore};
pub use net::{NetworkParams, OptimizerState};
pub use noise::{add_noise, measure_noise_std, NoiseKind, NoiseSpec, TheoryReport};
pub use objective::{LossBreakdown, LossWeights};

/// Formats a number with 9 significant digits, switching to scientific
/// notation for very large or very small magnitudes.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..=8).contains(&exp) {
        format!("{:.*}", (8 - exp).max(0) as usize, v)
    } else {
        format!("{v:.8e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(20.172003435238352), "20.1720034");
        assert_eq!(fmt_sig(0.000431013850), "0.000431013850");
        assert_eq!(fmt_sig(1488.0), "1488.00000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-3.0e-9), "-3.00000000e-9");
    }
}
