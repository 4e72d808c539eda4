//! Adam, batch sampling and the training loop.
//!
//! Training pairs a filtered tilt-series with a reference volume: a batch
//! samples random query points, extracts the patch stack at each, and
//! regresses the network output against the reference (a trilinear sample
//! in pixel mode, the 8 subband coefficients of the enclosing block in
//! wavelet mode). Each sample independently drops a random number of
//! tilts so the network learns to cope with variable tilt counts.

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{loss_and_grad, NetConfig, SliceMlpGrads, SliceMlpParams};
use crate::error::NetError;
use crate::geometry::{extract_patch_stack, PatchSpec, PatchStack, TiltSeries, Volume};
use crate::wavelet::SubbandSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second-moment accumulators, laid out like the parameters.
pub struct AdamState {
    pub m: SliceMlpGrads,
    pub v: SliceMlpGrads,
    pub step: usize,
}

impl AdamState {
    pub fn new(params: &SliceMlpParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_step(
    params: &mut SliceMlpParams,
    grads: &SliceMlpGrads,
    state: &mut AdamState,
    hyper: &AdamHyper,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let mut ms = state.m.tensors_mut();
    let mut vs = state.v.tensors_mut();
    for (k, (w, g)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .enumerate()
    {
        let m = &mut ms[k];
        let v = &mut vs[k];
        for ((w, &g), (m, v)) in w
            .iter_mut()
            .zip(g.iter())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to 0 over the run.
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Cosine => {
                let total = total.max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Pixel,
    Wavelet,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    /// Each sample drops a uniform number of tilts in 0..=tilt_drop_max.
    pub tilt_drop_max: usize,
    /// Draw each sample's patch stack from one of the two half-series.
    pub n2n_enabled: bool,
    pub seed: u64,
    pub mode: TrainMode,
    pub patch: PatchSpec,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            steps: 1000,
            lr: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            tilt_drop_max: 30,
            n2n_enabled: false,
            seed: 0,
            mode: TrainMode::Pixel,
            patch: PatchSpec::new(21, 1.0).expect("default patch is valid"),
            adam: AdamHyper::default(),
        }
    }
}

/// One training tomogram: a filtered series (optionally its noise-split
/// twin) and the reference volume to regress against. `subbands` must be
/// the decomposition of `target` when training in wavelet mode.
pub struct TrainingExample {
    pub target: Volume,
    pub series: TiltSeries,
    pub series_pair: Option<TiltSeries>,
    pub subbands: Option<SubbandSet>,
}

impl TrainingExample {
    fn validate(&self, cfg: &TrainConfig) -> Result<(), NetError> {
        if !self.series.filtered
            || self.series_pair.as_ref().is_some_and(|s| !s.filtered)
        {
            return Err(crate::error::GeometryError::UnfilteredInput.into());
        }
        let n = self.series.len();
        if cfg.tilt_drop_max >= n {
            return Err(NetError::DropTooLarge {
                drop: cfg.tilt_drop_max,
                n,
            });
        }
        if cfg.mode == TrainMode::Wavelet && self.subbands.is_none() {
            return Err(NetError::MissingSubbands);
        }
        Ok(())
    }
}

/// Remove `drop` random tilts from a stack (patch rows and angles drop
/// together, preserving order).
fn drop_tilts(stack: PatchStack, drop: usize, rng: &mut ChaCha8Rng) -> PatchStack {
    if drop == 0 {
        return stack;
    }
    let n = stack.n_tilts();
    let mut keep: Vec<usize> = (0..n).collect();
    for _ in 0..drop {
        let victim = rng.gen_range(0..keep.len());
        keep.remove(victim);
    }
    let p = stack.patch_size();
    let data = ndarray::Array3::from_shape_fn((keep.len(), p, p), |(k, j, i)| {
        stack.data[[keep[k], j, i]]
    });
    PatchStack {
        data,
        angles: keep.iter().map(|&k| stack.angles[k]).collect(),
    }
}

/// Draw one batch of (patch stack, target) pairs from an example.
pub fn sample_training_batch(
    example: &TrainingExample,
    net: &NetConfig,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(PatchStack, Array1<f64>)>, NetError> {
    example.validate(cfg)?;
    let (nx, ny, nz) = example.target.dims();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let series = match (&example.series_pair, cfg.n2n_enabled) {
            (Some(pair), true) if rng.gen_bool(0.5) => pair,
            _ => &example.series,
        };
        let (r0, target) = match cfg.mode {
            TrainMode::Pixel => {
                // uniform continuous query point, centered coordinates
                let x = rng.gen_range(0.0..nx as f64 - 1.0) - 0.5 * (nx as f64 - 1.0);
                let y = rng.gen_range(0.0..ny as f64 - 1.0) - 0.5 * (ny as f64 - 1.0);
                let z = rng.gen_range(0.0..nz as f64 - 1.0) - 0.5 * (nz as f64 - 1.0);
                let t = example.target.sample_trilinear(x, y, z);
                ([x, y, z], Array1::from_elem(1, t))
            }
            TrainMode::Wavelet => {
                let sub = example.subbands.as_ref().ok_or(NetError::MissingSubbands)?;
                let (cx, cy, cz) = sub.coarse_dims();
                let ix = rng.gen_range(0..cx);
                let iy = rng.gen_range(0..cy);
                let iz = rng.gen_range(0..cz);
                // query at the center of the 2x2x2 parent block
                let r0 = [
                    2.0 * ix as f64 + 0.5 - 0.5 * (nx as f64 - 1.0),
                    2.0 * iy as f64 + 0.5 - 0.5 * (ny as f64 - 1.0),
                    2.0 * iz as f64 + 0.5 - 0.5 * (nz as f64 - 1.0),
                ];
                (r0, sub.coefficients_at(ix, iy, iz))
            }
        };
        if target.len() != net.out_dim {
            return Err(NetError::BadOutDim(net.out_dim));
        }
        let stack = extract_patch_stack(series, r0, cfg.patch)?;
        let drop = rng.gen_range(0..=cfg.tilt_drop_max);
        batch.push((drop_tilts(stack, drop, rng), target));
    }
    Ok(batch)
}

/// Run the full loop: fresh parameters, Adam, round-robin over examples.
/// Returns the trained parameters and the per-step loss trace. Every run
/// with the same inputs and seed is bitwise identical.
pub fn train(
    examples: &[TrainingExample],
    net: NetConfig,
    cfg: &TrainConfig,
) -> Result<(SliceMlpParams, Vec<f64>), NetError> {
    if examples.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    for ex in examples {
        ex.validate(cfg)?;
    }
    let expected = match cfg.mode {
        TrainMode::Pixel => 1,
        TrainMode::Wavelet => 8,
    };
    if net.out_dim != expected {
        return Err(NetError::BadOutDim(net.out_dim));
    }
    if net.patch != cfg.patch.size {
        return Err(NetError::PatchSizeMismatch {
            got: cfg.patch.size,
            expected: net.patch,
        });
    }
    let mut params = SliceMlpParams::init(net, cfg.seed)?;
    let mut state = AdamState::new(&params);
    // sampling stream decoupled from the init stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let example = &examples[step % examples.len()];
        let batch = sample_training_batch(example, &net, cfg, &mut rng)?;
        let (loss, grads) = loss_and_grad(&params, &batch).map_err(|e| match e {
            NetError::Diverged { value, .. } => NetError::Diverged { step, value },
            other => other,
        })?;
        let lr = cfg.lr_schedule.lr_at(cfg.lr, step, cfg.steps);
        adam_step(&mut params, &grads, &mut state, &cfg.adam, lr);
        trace.push(loss);
    }
    Ok((params, trace))
}
