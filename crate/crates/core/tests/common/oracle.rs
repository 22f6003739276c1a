//! Direct-loop reference implementations, written without sharing code
//! with the optimized paths they are compared against.

use zscfc::net::NetworkParams;
use zscfc::objective::Objective;
use zscfc::Image;

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Copy of a plane with a one-pixel mirrored border.
fn pad(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let pw = w + 2;
    let mut out = vec![0.0; pw * (h + 2)];
    for y in 0..h + 2 {
        for x in 0..pw {
            let sy = mirror(y as isize - 1, h);
            let sx = mirror(x as isize - 1, w);
            out[y * pw + x] = plane[sy * w + sx];
        }
    }
    out
}

/// Network output plus the sign of every hidden pre-activation.
pub fn conv_net(p: &NetworkParams, x: &Image) -> (Image, Vec<i8>) {
    let (w, h) = (x.width(), x.height());
    let pw = w + 2;
    let mut act: Vec<Vec<f64>> = (0..x.channels()).map(|c| x.plane(c).to_vec()).collect();
    let mut signs = Vec::new();
    let n_layers = p.layers().len();
    for (li, layer) in p.layers().iter().enumerate() {
        let padded: Vec<Vec<f64>> = act.iter().map(|a| pad(a, w, h)).collect();
        let mut out = vec![vec![0.0; w * h]; layer.out_ch];
        for (o, plane) in out.iter_mut().enumerate() {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = layer.bias[o];
                    for (i, src) in padded.iter().enumerate() {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let wi = ((o * layer.in_ch + i) * 3 + ky) * 3 + kx;
                                acc += layer.weight[wi] * src[(y + ky) * pw + xx + kx];
                            }
                        }
                    }
                    plane[y * w + xx] = acc;
                }
            }
        }
        if li + 1 < n_layers {
            for v in out.iter_mut().flatten() {
                signs.push(sgn(*v));
                *v = v.max(0.0);
            }
        }
        act = out;
    }
    let data: Vec<f64> = act.into_iter().flatten().collect();
    (Image::new(w, h, x.channels(), data).unwrap(), signs)
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Total training loss evaluated from scratch, plus a signature of every
/// sign that selects a piece of the piecewise-smooth objective (ReLU
/// activity, L1 residual signs, TV difference signs).
pub fn total_objective(obj: &Objective, p: &NetworkParams, bands: &[Image; 3]) -> (f64, Vec<i8>) {
    let mut signature = Vec::new();
    let g: Vec<Vec<f64>> = bands
        .iter()
        .map(|b| {
            let (y, s) = conv_net(p, b);
            signature.extend(s);
            y.into_data()
        })
        .collect();
    let lfs1 = obj.lfs1.data();
    let lfs3 = obj.lfs3.data();
    let r = obj.reference.data();
    let n = lfs1.len() as f64;

    let mut cons1 = 0.0;
    for i in 0..lfs1.len() {
        let d = (lfs1[i] + g[0][i]) - (lfs3[i] - g[1][i]);
        signature.push(sgn(d));
        cons1 += d.abs();
    }
    cons1 /= n;

    let mut cons2 = 0.0;
    for gi in &g {
        let s: f64 = gi.iter().zip(r).map(|(a, b)| (b - a) * (b - a)).sum();
        cons2 += s / n;
    }

    let (w, h, c) = (obj.lfs1.width(), obj.lfs1.height(), obj.lfs1.channels());
    let est: Vec<f64> = (0..lfs1.len()).map(|i| lfs1[i] + g[0][i] + g[1][i] + g[2][i]).collect();
    let mut tv = 0.0;
    for ch in 0..c {
        let plane = &est[ch * w * h..(ch + 1) * w * h];
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                if y + 1 < h {
                    let d = plane[(y + 1) * w + x] - plane[y * w + x];
                    signature.push(sgn(d));
                    s += d.abs();
                }
                if x + 1 < w {
                    let d = plane[y * w + x + 1] - plane[y * w + x];
                    signature.push(sgn(d));
                    s += d.abs();
                }
            }
        }
        tv += s / (w * h) as f64;
    }
    tv /= c as f64;

    let wt = obj.weights;
    (wt.w1 * cons1 + wt.w2 * cons2 + wt.w3 * tv, signature)
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Relative error with a floor: central differences at `h = 1e-5` carry
/// about 1e-11 of cancellation noise, so gradients below 1e-5 are compared
/// on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Compares the library's analytic parameter gradient of the full training
/// objective on a random 16×16×3 image against central differences of
/// [`total_objective`]. Coordinates where `θ ± h` land on different pieces
/// of the objective are skipped.
pub fn full_objective_gradient_check(seed: u64) -> GradCheck {
    use zscfc::denoiser::build_objective;
    use zscfc::net::{backward_accumulate, forward};
    use zscfc::TrainConfig;

    let noisy = super::random_image(16, 16, 3, 1000 + seed);
    let cfg = TrainConfig::default();
    let (obj, bands) = build_objective(&noisy, &cfg).unwrap();
    let params = NetworkParams::init(3, seed).unwrap();

    let outs: Vec<_> = bands.iter().map(|b| forward(&params, b).unwrap()).collect();
    let eval = obj.evaluate([&outs[0].0, &outs[1].0, &outs[2].0]).unwrap();
    let mut grads = params.zeros_like();
    for ((_, cache), dy) in outs.iter().zip(&eval.grads) {
        backward_accumulate(&params, cache, dy, &mut grads, false).unwrap();
    }
    let analytic = grads.flatten();

    let base = params.flatten();
    let h = 1e-5;
    let mut probe = params.clone();
    let mut eval_at = |theta: &[f64]| {
        probe.set_flat(theta).unwrap();
        total_objective(&obj, &probe, &bands)
    };
    let mut report = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut theta = base.clone();
    for j in 0..base.len() {
        theta[j] = base[j] + h;
        let (fp, sp) = eval_at(&theta);
        theta[j] = base[j] - h;
        let (fm, sm) = eval_at(&theta);
        theta[j] = base[j];
        if sp != sm {
            report.skipped += 1;
            continue;
        }
        let fd = (fp - fm) / (2.0 * h);
        report.checked += 1;
        report.max_rel_err = report.max_rel_err.max(rel_err(analytic[j], fd));
    }
    report
}
