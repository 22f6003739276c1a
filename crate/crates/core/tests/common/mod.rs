//! Synthetic images shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zscfc::Image;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Uniform noise in `[0, 1)`.
pub fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, c, |_, _, _| rng.random::<f64>()).unwrap()
}

fn in_disk(x: f64, y: f64, cx: f64, cy: f64, r: f64) -> bool {
    (x - cx).powi(2) + (y - cy).powi(2) < r * r
}

/// Piecewise-smooth RGB scene: colour ramps, three disks and a rectangle.
/// Coordinates are laid out for 128 pixels and scaled to `size`.
pub fn cartoon(size: usize) -> Image {
    let s = size as f64 / 128.0;
    let disks = [
        (40.0, 40.0, 22.0, [0.9, 0.2, 0.2]),
        (92.0, 98.0, 18.0, [0.95, 0.9, 0.3]),
        (36.0, 98.0, 20.0, [0.2, 0.8, 0.3]),
    ];
    Image::from_fn(size, size, 3, |c, y, x| {
        let (xf, yf) = (x as f64, y as f64);
        let n = size as f64;
        let mut v = match c {
            0 => 0.25 + 0.5 * xf / n,
            1 => 0.3 + 0.4 * yf / n,
            _ => 0.5 + 0.2 * (2.0 * std::f64::consts::PI * xf / n).sin(),
        };
        for (cx, cy, r, col) in disks {
            if in_disk(xf, yf, cx * s, cy * s, r * s) {
                v = col[c];
            }
        }
        if xf > 75.0 * s && xf < 115.0 * s && yf > 20.0 * s && yf < 60.0 * s {
            v = [0.1, 0.6, 0.9][c];
        }
        v.clamp(0.0, 1.0)
    })
    .unwrap()
}

/// Grayscale chart of isolated broadband edges: a vertical ramp with two
/// squares and two disks. Laid out for 256 pixels and scaled to `size`.
pub fn edge_chart(size: usize) -> Image {
    let s = size as f64 / 256.0;
    Image::from_fn(size, size, 1, |_, y, x| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = 0.2 + 0.3 * yf / size as f64;
        if (30.0 * s..90.0 * s).contains(&yf) && (30.0 * s..90.0 * s).contains(&xf) {
            v = 0.9;
        }
        if (150.0 * s..220.0 * s).contains(&yf) && (40.0 * s..110.0 * s).contains(&xf) {
            v = 0.05;
        }
        if in_disk(xf, yf, 180.0 * s, 70.0 * s, 35.0 * s) {
            v = 0.8;
        }
        if in_disk(xf, yf, 180.0 * s, 185.0 * s, 40.0 * s) {
            v = 0.15;
        }
        v
    })
    .unwrap()
}
