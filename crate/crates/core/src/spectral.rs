//! 2-D FFT helpers over single image planes.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Signed frequency (cycles/sample) of FFT bin `k` for a length-`n` axis.
#[inline]
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Radial frequency of bin `(ky, kx)`.
#[inline]
pub fn radial_frequency(ky: usize, kx: usize, h: usize, w: usize) -> f64 {
    bin_frequency(ky, h).hypot(bin_frequency(kx, w))
}

fn transform(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

/// Forward 2-D FFT of a real row-major plane.
pub fn fft2(plane: &[f64], w: usize, h: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, w, h, false);
    data
}

/// Inverse 2-D FFT, normalized, keeping the real part.
pub fn ifft2_real(mut spectrum: Vec<Complex64>, w: usize, h: usize) -> Vec<f64> {
    transform(&mut spectrum, w, h, true);
    let n = (w * h) as f64;
    spectrum.into_iter().map(|c| c.re / n).collect()
}

/// Multiplies the spectrum of `plane` by `gain(f_radial)` and transforms back.
pub fn radial_filter(plane: &[f64], w: usize, h: usize, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut spec = fft2(plane, w, h);
    for ky in 0..h {
        for kx in 0..w {
            spec[ky * w + kx] *= gain(radial_frequency(ky, kx, h, w));
        }
    }
    ifft2_real(spec, w, h)
}

/// Mean FFT magnitude in `bins` equal-width rings over `(0, 0.5]`, returned
/// as `(ring centre frequency, mean amplitude)`. Empty rings are skipped.
pub fn radial_amplitude_spectrum(plane: &[f64], w: usize, h: usize, bins: usize) -> Vec<(f64, f64)> {
    let spec = fft2(plane, w, h);
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for ky in 0..h {
        for kx in 0..w {
            let f = radial_frequency(ky, kx, h, w);
            if f == 0.0 || f > 0.5 {
                continue;
            }
            let b = (((f / 0.5) * bins as f64).ceil() as usize).clamp(1, bins) - 1;
            sum[b] += spec[ky * w + kx].norm();
            count[b] += 1;
        }
    }
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| ((b as f64 + 0.5) * 0.5 / bins as f64, sum[b] / count[b] as f64))
        .collect()
}
