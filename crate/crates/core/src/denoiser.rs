//! Per-image training of the texture extractor and final assembly
//! `lfs1 + g(hfs1) + g(hfs2) + g(hfs3)`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::freq::{band_pass_ref, decompose};
use crate::image::Image;
use crate::net::{adam_step, backward_accumulate, forward, NetworkParams, OptimizerState};
use crate::objective::{LossBreakdown, LossWeights, Objective};

/// Smallest image side accepted by [`denoise`].
pub const MIN_DENOISE_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub f_c1: f64,
    pub f_c2: f64,
    pub f_c3: f64,
    pub f_ref1: f64,
    pub f_ref2: f64,
    pub weights: LossWeights,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            f_c1: 0.05,
            f_c2: 0.07,
            f_c3: 0.1,
            f_ref1: 0.03,
            f_ref2: 0.12,
            weights: LossWeights::default(),
            iterations: 1000,
            lr: 1e-3,
            seed: 0,
            depth: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_c1 < self.f_c2 && self.f_c2 < self.f_c3) {
            return Err(Error::Parameter(format!(
                "cutoffs must satisfy f_c1 < f_c2 < f_c3, got {}, {}, {}",
                self.f_c1, self.f_c2, self.f_c3
            )));
        }
        if self.f_ref1 >= self.f_ref2 {
            return Err(Error::Parameter(format!(
                "reference band needs f_ref1 < f_ref2, got {}, {}",
                self.f_ref1, self.f_ref2
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Parameter("iterations must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        self.weights.validate()
    }

    /// Copy of this configuration with one loss term switched off.
    pub fn without(&self, term: LossTerm) -> TrainConfig {
        let mut cfg = self.clone();
        match term {
            LossTerm::Cons1 => cfg.weights.w1 = 0.0,
            LossTerm::Cons2 => cfg.weights.w2 = 0.0,
            LossTerm::Reg => cfg.weights.w3 = 0.0,
        }
        cfg
    }

    /// One-line `key=value` rendering used in output headers.
    pub fn describe(&self) -> String {
        format!(
            "fc={},{},{} fref={},{} weights={},{},{} iters={} lr={} seed={} depth={}",
            self.f_c1,
            self.f_c2,
            self.f_c3,
            self.f_ref1,
            self.f_ref2,
            self.weights.w1,
            self.weights.w2,
            self.weights.w3,
            self.iterations,
            self.lr,
            self.seed,
            self.depth
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Cons1,
    Cons2,
    Reg,
}

impl std::str::FromStr for LossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cons1" => Ok(LossTerm::Cons1),
            "cons2" => Ok(LossTerm::Cons2),
            "reg" => Ok(LossTerm::Reg),
            other => Err(Error::Parameter(format!(
                "unknown loss term {other:?} (expected cons1, cons2 or reg)"
            ))),
        }
    }
}

impl std::fmt::Display for LossTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossTerm::Cons1 => "cons1",
            LossTerm::Cons2 => "cons2",
            LossTerm::Reg => "reg",
        })
    }
}

#[derive(Debug, Clone)]
pub struct DenoiseResult {
    /// Unclamped estimate; clamping happens only when saving.
    pub denoised: Image,
    /// Loss evaluated at the start of every iteration.
    pub loss_trace: Vec<LossBreakdown>,
    pub elapsed: Duration,
    pub config: TrainConfig,
    /// Low band of the input, carried into the output unchanged.
    pub lfs1: Image,
    pub params: NetworkParams,
}

/// Decomposes `noisy` into the fixed training targets and the three high
/// bands the extractor is applied to.
pub fn build_objective(noisy: &Image, cfg: &TrainConfig) -> Result<(Objective, [Image; 3])> {
    let bands = decompose(noisy, cfg.f_c1, cfg.f_c2, cfg.f_c3)?;
    let reference = band_pass_ref(noisy, cfg.f_ref1, cfg.f_ref2)?;
    let objective = Objective {
        lfs1: bands.lfs1,
        lfs3: bands.lfs3,
        reference,
        weights: cfg.weights,
    };
    Ok((objective, [bands.hfs1, bands.hfs2, bands.hfs3]))
}

/// Trains the extractor on `noisy` alone and returns the denoised image.
pub fn denoise(noisy: &Image, cfg: &TrainConfig) -> Result<DenoiseResult> {
    let start = Instant::now();
    cfg.validate()?;
    if noisy.width() < MIN_DENOISE_SIDE || noisy.height() < MIN_DENOISE_SIDE {
        return Err(Error::Dimension(format!(
            "denoising needs at least {MIN_DENOISE_SIDE}x{MIN_DENOISE_SIDE}, got {}x{}",
            noisy.width(),
            noisy.height()
        )));
    }
    let (objective, bands) = build_objective(noisy, cfg)?;
    let inputs = [&bands[0], &bands[1], &bands[2]];

    let mut params = NetworkParams::init_with_depth(noisy.channels(), cfg.depth, cfg.seed)?;
    let mut opt = OptimizerState::new(&params, cfg.lr);
    let mut trace = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let (g1, c1) = forward(&params, inputs[0])?;
        let (g2, c2) = forward(&params, inputs[1])?;
        let (g3, c3) = forward(&params, inputs[2])?;
        let eval = objective.evaluate([&g1, &g2, &g3])?;
        if !eval.breakdown.is_finite() {
            return Err(Error::Divergence {
                iteration: it + 1,
                value: eval.breakdown.total,
            });
        }
        trace.push(eval.breakdown);

        let mut grads = params.zeros_like();
        for (cache, dg) in [c1, c2, c3].iter().zip(&eval.grads) {
            backward_accumulate(&params, cache, dg, &mut grads, false)?;
        }
        adam_step(&mut params, &grads, &mut opt)?;
    }

    let outputs: Vec<Image> = inputs
        .iter()
        .map(|x| forward(&params, x).map(|(y, _)| y))
        .collect::<Result<_>>()?;
    let denoised = objective.assemble([&outputs[0], &outputs[1], &outputs[2]])?;
    if denoised.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: cfg.iterations,
            value: f64::NAN,
        });
    }
    Ok(DenoiseResult {
        denoised,
        loss_trace: trace,
        elapsed: start.elapsed(),
        config: cfg.clone(),
        lfs1: objective.lfs1,
        params,
    })
}

/// Same training loop with one loss term's weight forced to zero. The
/// dropped term is still evaluated and reported in the trace.
pub fn ablate(noisy: &Image, cfg: &TrainConfig, drop: LossTerm) -> Result<DenoiseResult> {
    denoise(noisy, &cfg.without(drop))
}
