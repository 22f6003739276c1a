//! Training objective: two cross-frequency consistency terms and a total
//! variation regularizer, each returning its value together with the
//! gradient with respect to the network outputs.
//!
//! Every term is a per-sample mean so the weights do not depend on image
//! resolution. The L1 subgradient at zero is taken as zero.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 0.5,
            w2: 2.0,
            w3: 0.5,
        }
    }
}

impl LossWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let w = Self { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "loss weights must be finite and nonnegative, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cons1: f64,
    pub cons2: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.cons1, self.cons2, self.reg, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn same_shape(images: &[&Image], what: &str) -> Result<()> {
    for img in &images[1..] {
        images[0].ensure_same_shape(img, what)?;
    }
    Ok(())
}

/// `mean |(lfs1 + g1) - (lfs3 - g2)|` and its gradients for `g1`, `g2`.
pub fn cons1_loss(lfs1: &Image, lfs3: &Image, g1: &Image, g2: &Image) -> Result<(f64, Image, Image)> {
    same_shape(&[lfs1, lfs3, g1, g2], "cons1_loss")?;
    let n = lfs1.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(lfs1.len());
    for i in 0..lfs1.len() {
        let r = (lfs1.data()[i] + g1.data()[i]) - (lfs3.data()[i] - g2.data()[i]);
        sum += r.abs();
        grad.push(sign(r) / n);
    }
    let d = Image::from_parts(lfs1.width(), lfs1.height(), lfs1.channels(), grad);
    Ok((sum / n, d.clone(), d))
}

/// `Σ_i mean((ref - g_i)²)` over the three extractor outputs.
pub fn cons2_loss(reference: &Image, g1: &Image, g2: &Image, g3: &Image) -> Result<(f64, [Image; 3])> {
    same_shape(&[reference, g1, g2, g3], "cons2_loss")?;
    let n = reference.len() as f64;
    let mut value = 0.0;
    let grads = [g1, g2, g3].map(|g| {
        let mut grad = Vec::with_capacity(g.len());
        for (&gi, &ri) in g.data().iter().zip(reference.data()) {
            let d = gi - ri;
            value += d * d;
            grad.push(2.0 * d / n);
        }
        Image::from_parts(g.width(), g.height(), g.channels(), grad)
    });
    Ok((value / n, grads))
}

/// Anisotropic total variation: per channel, the sum of absolute
/// vertical and horizontal neighbour differences divided by `H·W`, then
/// averaged over channels.
pub fn tv_loss(img: &Image) -> Result<(f64, Image)> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(Error::Dimension(format!(
            "total variation needs at least 2x2, got {w}x{h}"
        )));
    }
    let scale = 1.0 / (w * h * img.channels()) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; img.len()];
    for c in 0..img.channels() {
        let plane = img.plane(c);
        let g = &mut grad[c * w * h..(c + 1) * w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if y + 1 < h {
                    let d = plane[i] - plane[i + w];
                    value += d.abs();
                    let s = sign(d) * scale;
                    g[i] += s;
                    g[i + w] -= s;
                }
                if x + 1 < w {
                    let d = plane[i] - plane[i + 1];
                    value += d.abs();
                    let s = sign(d) * scale;
                    g[i] += s;
                    g[i + 1] -= s;
                }
            }
        }
    }
    Ok((
        value * scale,
        Image::from_parts(w, h, img.channels(), grad),
    ))
}

/// Weighted sum of the three terms.
pub fn total_loss(cons1: f64, cons2: f64, reg: f64, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        cons1,
        cons2,
        reg,
        total: weights.w1 * cons1 + weights.w2 * cons2 + weights.w3 * reg,
    }
}

/// Fixed targets of one denoising problem.
#[derive(Debug, Clone)]
pub struct Objective {
    pub lfs1: Image,
    pub lfs3: Image,
    pub reference: Image,
    pub weights: LossWeights,
}

/// Loss values plus weighted gradients for `g(hfs1)`, `g(hfs2)`, `g(hfs3)`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub grads: [Image; 3],
}

impl Objective {
    /// Denoised estimate `lfs1 + g1 + g2 + g3`.
    pub fn assemble(&self, g: [&Image; 3]) -> Result<Image> {
        same_shape(&[&self.lfs1, g[0], g[1], g[2]], "assemble")?;
        let mut out = self.lfs1.clone();
        for gi in g {
            for (o, v) in out.data_mut().iter_mut().zip(gi.data()) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// The regularizer acts on the assembled estimate, so its gradient
    /// reaches all three outputs unchanged.
    pub fn evaluate(&self, g: [&Image; 3]) -> Result<Evaluation> {
        let (c1, d1a, d1b) = cons1_loss(&self.lfs1, &self.lfs3, g[0], g[1])?;
        let (c2, d2) = cons2_loss(&self.reference, g[0], g[1], g[2])?;
        let estimate = self.assemble(g)?;
        let (reg, dreg) = tv_loss(&estimate)?;
        let w = self.weights;
        let breakdown = total_loss(c1, c2, reg, &w);

        let [d2a, d2b, d2c] = d2;
        let combine = |cons1: Option<&Image>, cons2: &Image| {
            let data = (0..cons2.len())
                .map(|i| {
                    let a = cons1.map_or(0.0, |d| d.data()[i]);
                    w.w1 * a + w.w2 * cons2.data()[i] + w.w3 * dreg.data()[i]
                })
                .collect();
            Image::from_parts(cons2.width(), cons2.height(), cons2.channels(), data)
        };
        let grads = [
            combine(Some(&d1a), &d2a),
            combine(Some(&d1b), &d2b),
            combine(None, &d2c),
        ];
        Ok(Evaluation { breakdown, grads })
    }
}
