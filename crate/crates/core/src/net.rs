//! The texture extractor: a stack of 3×3 convolutions with ReLU between
//! them, hand-written forward and backward passes, and Adam.
//!
//! The default network is `conv3×3(C→27) → ReLU → conv3×3(27→C)`, which has
//! 1488 parameters for RGB and 514 for grayscale. Deeper variants insert
//! extra 27→27 layers. Convolutions use reflect-101 borders so every layer
//! preserves the spatial shape, and are evaluated as im2col + GEMM.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::freq::reflect101;
use crate::image::Image;

/// Width of every hidden layer.
pub const HIDDEN: usize = 27;
/// Spatial taps per filter (3×3).
const TAPS: usize = 9;

/// One convolution layer. Weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            weight: vec![0.0; out_ch * in_ch * TAPS],
            bias: vec![0.0; out_ch],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    #[inline]
    pub fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * 3 + ky) * 3 + kx
    }
}

/// Weights and biases of the extractor. Also used to hold gradients and
/// optimizer moments, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    channels: usize,
    layers: Vec<ConvLayer>,
}

/// Gradients have exactly the parameter layout.
pub type Gradients = NetworkParams;

/// Network depths accepted by [`NetworkParams::init_with_depth`].
pub const SUPPORTED_DEPTHS: [usize; 3] = [2, 3, 5];

impl NetworkParams {
    /// All-zero parameters for a network of the given depth (number of
    /// convolution layers, at least 2).
    pub fn zeros(channels: usize, depth: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Parameter(format!(
                "network channels must be 1 or 3, got {channels}"
            )));
        }
        if depth < 2 {
            return Err(Error::Parameter(format!("depth must be at least 2, got {depth}")));
        }
        let mut layers = Vec::with_capacity(depth);
        layers.push(ConvLayer::zeros(channels, HIDDEN));
        for _ in 0..depth - 2 {
            layers.push(ConvLayer::zeros(HIDDEN, HIDDEN));
        }
        layers.push(ConvLayer::zeros(HIDDEN, channels));
        Ok(Self { channels, layers })
    }

    /// Default two-layer network with Kaiming-uniform weights.
    pub fn init(channels: usize, seed: u64) -> Result<Self> {
        Self::init_with_depth(channels, 2, seed)
    }

    /// Weights drawn from `U(-b, b)` with `b = sqrt(6 / fan_in)`, biases zero.
    pub fn init_with_depth(channels: usize, depth: usize, seed: u64) -> Result<Self> {
        if !SUPPORTED_DEPTHS.contains(&depth) {
            return Err(Error::Parameter(format!(
                "depth must be one of {SUPPORTED_DEPTHS:?}, got {depth}"
            )));
        }
        let mut p = Self::zeros(channels, depth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut p.layers {
            let bound = (6.0 / (layer.in_ch * TAPS) as f64).sqrt();
            for w in &mut layer.weight {
                *w = rng.random_range(-bound..bound);
            }
        }
        debug_assert!(depth != 2 || p.param_count() == if channels == 3 { 1488 } else { 514 });
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            channels: self.channels,
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.in_ch, l.out_ch))
                .collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn same_layout(&self, other: &NetworkParams) -> bool {
        self.channels == other.channels
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_ch == b.in_ch && a.out_ch == b.out_ch)
    }

    /// Every value in layer order: `w1, b1, w2, b2, ...`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) onto this layout.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut rest = values;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weight.len());
            l.weight.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    fn slices(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }
}

/// Activations kept by [`forward`] for the matching [`backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    width: usize,
    height: usize,
    /// Input to each layer (post-activation of the previous one), planar.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer except the last.
    pre: Vec<Vec<f64>>,
    layout: Vec<(usize, usize)>,
}

impl ForwardCache {
    fn check(&self, p: &NetworkParams, dy: &Image) -> Result<()> {
        let layout: Vec<_> = p.layers.iter().map(|l| (l.in_ch, l.out_ch)).collect();
        if layout != self.layout {
            return Err(Error::Contract(
                "forward cache was produced by a network of a different shape".into(),
            ));
        }
        if dy.width() != self.width || dy.height() != self.height || dy.channels() != p.channels {
            return Err(Error::Contract(format!(
                "output gradient is {}x{}x{}, cache expects {}x{}x{}",
                dy.width(),
                dy.height(),
                dy.channels(),
                self.width,
                self.height,
                p.channels
            )));
        }
        Ok(())
    }
}

/// Rows per im2col tile, sized so one patch tile stays in cache.
fn tile_rows(k: usize, w: usize) -> usize {
    (TILE_SAMPLES / (k * w)).max(1)
}

const TILE_SAMPLES: usize = 1 << 15;

/// Unfolds rows `y0..y1` of a planar `[ch][h][w]` tensor into the
/// `[ch*9][(y1-y0)*w]` patch matrix with reflect-101 borders.
fn im2col(src: &[f64], ch: usize, w: usize, h: usize, (y0, y1): (usize, usize), col: &mut Vec<f64>) {
    let p = w * h;
    let tp = (y1 - y0) * w;
    // Every entry is overwritten below, so only growth needs filling.
    col.resize(ch * TAPS * tp, 0.0);
    for c in 0..ch {
        let plane = &src[c * p..(c + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let dst = &mut col[((c * TAPS) + ky * 3 + kx) * tp..][..tp];
                for y in y0..y1 {
                    let sy = reflect101(y as isize + ky as isize - 1, h);
                    let srow = &plane[sy * w..(sy + 1) * w];
                    let drow = &mut dst[(y - y0) * w..(y - y0 + 1) * w];
                    match kx {
                        0 => {
                            drow[0] = srow[1];
                            drow[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => drow.copy_from_slice(srow),
                        _ => {
                            drow[..w - 1].copy_from_slice(&srow[1..]);
                            drow[w - 1] = srow[w - 2];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a patch tile back onto `out`.
fn col2im(col: &[f64], ch: usize, w: usize, h: usize, (y0, y1): (usize, usize), out: &mut [f64]) {
    let p = w * h;
    let tp = (y1 - y0) * w;
    for c in 0..ch {
        let plane = &mut out[c * p..(c + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let src = &col[((c * TAPS) + ky * 3 + kx) * tp..][..tp];
                for y in y0..y1 {
                    let sy = reflect101(y as isize + ky as isize - 1, h);
                    let srow = &src[(y - y0) * w..(y - y0 + 1) * w];
                    let drow = &mut plane[sy * w..(sy + 1) * w];
                    match kx {
                        0 => {
                            drow[1] += srow[0];
                            for (d, s) in drow[..w - 1].iter_mut().zip(&srow[1..]) {
                                *d += s;
                            }
                        }
                        1 => {
                            for (d, s) in drow.iter_mut().zip(srow) {
                                *d += s;
                            }
                        }
                        _ => {
                            for (d, s) in drow[1..].iter_mut().zip(&srow[..w - 1]) {
                                *d += s;
                            }
                            drow[w - 2] += srow[w - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Row-major view `(data, row stride)` of an operand or destination.
type Mat<'a> = (&'a [f64], (usize, usize));

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit strides; `c` has row
/// stride `ldc` and unit column stride.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, (a, sa): Mat, (b, sb): Mat, beta: f64, c: &mut [f64], ldc: usize) {
    debug_assert!(m == 0 || c.len() >= (m - 1) * ldc + n);
    // SAFETY: the slices cover every index addressed by the given dimensions
    // and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

fn check_input(p: &NetworkParams, x: &Image) -> Result<()> {
    if x.channels() != p.channels {
        return Err(Error::Dimension(format!(
            "network expects {} channels, input has {}",
            p.channels,
            x.channels()
        )));
    }
    if x.width() < 2 || x.height() < 2 {
        return Err(Error::Dimension(format!(
            "3x3 convolution needs at least 2x2, got {}x{}",
            x.width(),
            x.height()
        )));
    }
    Ok(())
}

/// Runs the network on `x`, returning the output (same shape as `x`) and
/// the activations needed for [`backward`].
pub fn forward(p: &NetworkParams, x: &Image) -> Result<(Image, ForwardCache)> {
    check_input(p, x)?;
    let (w, h) = (x.width(), x.height());
    let px = w * h;
    let last = p.layers.len() - 1;
    let mut inputs = Vec::with_capacity(p.layers.len());
    let mut pre = Vec::with_capacity(last);
    let mut act = x.data().to_vec();
    let mut col = Vec::new();
    for (li, layer) in p.layers.iter().enumerate() {
        let mut out = vec![0.0; layer.out_ch * px];
        for (o, row) in out.chunks_exact_mut(px).enumerate() {
            row.iter_mut().for_each(|v| *v = layer.bias[o]);
        }
        let k = layer.in_ch * TAPS;
        let step = tile_rows(k, w);
        for y0 in (0..h).step_by(step) {
            let y1 = (y0 + step).min(h);
            let tp = (y1 - y0) * w;
            im2col(&act, layer.in_ch, w, h, (y0, y1), &mut col);
            let dst = &mut out[y0 * w..];
            gemm(layer.out_ch, k, tp, (&layer.weight, (k, 1)), (&col, (tp, 1)), 1.0, dst, px);
        }
        inputs.push(std::mem::replace(&mut act, Vec::new()));
        if li < last {
            act = out.iter().map(|&v| v.max(0.0)).collect();
            pre.push(out);
        } else {
            act = out;
        }
    }
    let cache = ForwardCache {
        width: w,
        height: h,
        inputs,
        pre,
        layout: p.layers.iter().map(|l| (l.in_ch, l.out_ch)).collect(),
    };
    Ok((Image::from_parts(w, h, p.channels, act), cache))
}

/// Exact gradients of `<dy, forward(p, x)>` with respect to the parameters
/// and the input.
pub fn backward(p: &NetworkParams, cache: &ForwardCache, dy: &Image) -> Result<(Gradients, Image)> {
    let mut grads = p.zeros_like();
    let dx = backward_accumulate(p, cache, dy, &mut grads, true)?.expect("input gradient requested");
    Ok((grads, dx))
}

/// Adds the parameter gradients for `dy` into `grads`, which lets several
/// applications of the same weights share one accumulator. The input
/// gradient is only formed when `want_dx` is set.
pub fn backward_accumulate(
    p: &NetworkParams,
    cache: &ForwardCache,
    dy: &Image,
    grads: &mut Gradients,
    want_dx: bool,
) -> Result<Option<Image>> {
    cache.check(p, dy)?;
    if !grads.same_layout(p) {
        return Err(Error::Contract("gradient buffer has a different layout".into()));
    }
    let (w, h) = (cache.width, cache.height);
    let px = w * h;
    let mut delta = dy.data().to_vec();
    let mut col = Vec::new();
    let mut dcol = Vec::new();
    for li in (0..p.layers.len()).rev() {
        let layer = &p.layers[li];
        let g = &mut grads.layers[li];
        let k = layer.in_ch * TAPS;

        for (o, row) in delta.chunks_exact(px).enumerate() {
            g.bias[o] += row.iter().sum::<f64>();
        }
        let want_input_grad = li > 0 || want_dx;
        let mut dx = if want_input_grad { vec![0.0; layer.in_ch * px] } else { Vec::new() };
        let step = tile_rows(k, w);
        for y0 in (0..h).step_by(step) {
            let y1 = (y0 + step).min(h);
            let tp = (y1 - y0) * w;
            let d_tile = &delta[y0 * w..];
            im2col(&cache.inputs[li], layer.in_ch, w, h, (y0, y1), &mut col);
            // dW[out×k] += delta[out×tp] · colᵀ[tp×k]
            gemm(layer.out_ch, tp, k, (d_tile, (px, 1)), (&col, (1, tp)), 1.0, &mut g.weight, k);
            if want_input_grad {
                // dcol[k×tp] = Wᵀ[k×out] · delta[out×tp]
                dcol.resize(k * tp, 0.0);
                gemm(k, layer.out_ch, tp, (&layer.weight, (1, k)), (d_tile, (px, 1)), 0.0, &mut dcol, tp);
                col2im(&dcol, layer.in_ch, w, h, (y0, y1), &mut dx);
            }
        }
        if !want_input_grad {
            return Ok(None);
        }
        if li > 0 {
            for (d, &z) in dx.iter_mut().zip(&cache.pre[li - 1]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        delta = dx;
    }
    Ok(Some(Image::from_parts(w, h, p.channels, delta)))
}

/// Adam hyper-parameters and moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, lr: f64) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `p` in place.
pub fn adam_step(p: &mut NetworkParams, g: &Gradients, s: &mut OptimizerState) -> Result<()> {
    if !p.same_layout(g) || !p.same_layout(&s.m) || !p.same_layout(&s.v) {
        return Err(Error::Dimension("parameter/gradient/moment layouts differ".into()));
    }
    s.step += 1;
    let t = s.step as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    let (b1, b2, lr, eps) = (s.beta1, s.beta2, s.lr, s.eps);
    for (((pv, gv), mv), vv) in p
        .slices_mut()
        .zip(g.slices())
        .zip(s.m.slices_mut())
        .zip(s.v.slices_mut())
    {
        for i in 0..pv.len() {
            let gi = gv[i];
            mv[i] = b1 * mv[i] + (1.0 - b1) * gi;
            vv[i] = b2 * vv[i] + (1.0 - b2) * gi * gi;
            let m_hat = mv[i] / c1;
            let v_hat = vv[i] / c2;
            pv[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"ZSCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the parameters as a 16-byte header (magic, version, channels,
/// hidden width; little-endian `u32`s after the magic) followed by every
/// value as a little-endian `f64` in `w1, b1, w2, b2, ...` order.
pub fn save_checkpoint(p: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 + p.param_count() * 8);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(p.channels as u32).to_le_bytes());
    bytes.extend_from_slice(&(HIDDEN as u32).to_le_bytes());
    for v in p.flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_checkpoint`]; the depth is
/// recovered from the payload length.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    if word(4) != CHECKPOINT_VERSION as usize {
        return Err(bad("unsupported checkpoint version"));
    }
    let (channels, hidden) = (word(8), word(12));
    if hidden != HIDDEN {
        return Err(bad("unsupported hidden width"));
    }
    let payload = &bytes[16..];
    if payload.len() % 8 != 0 {
        return Err(bad("truncated payload"));
    }
    let count = payload.len() / 8;
    let outer = channels * HIDDEN * TAPS + HIDDEN + HIDDEN * channels * TAPS + channels;
    let inner = HIDDEN * HIDDEN * TAPS + HIDDEN;
    if count < outer || (count - outer) % inner != 0 {
        return Err(bad("payload length matches no supported depth"));
    }
    let depth = 2 + (count - outer) / inner;
    let mut p = NetworkParams::zeros(channels, depth)?;
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    p.set_flat(&values)?;
    if !p.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(p)
}
