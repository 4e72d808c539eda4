//! The per-slice set network: a bias-free ReLU architecture that maps a
//! patch stack to one voxel value (or 8 wavelet coefficients), plus its
//! reverse-mode gradients, Adam, and the training loop.
//!
//! The patch stack is split along the tilt (y) axis into P slices; each
//! slice is embedded per tilt, gated by a positional encoding of the tilt
//! angle, pooled over tilts, and run through a per-slice MLP. The P
//! feature vectors are concatenated and combined by a final MLP. All
//! linear layers are bias-free, which makes the whole network positively
//! 1-homogeneous in its input.

mod grad;
mod train;

pub use grad::{batch_loss, finite_difference_check, loss_and_grad, SliceMlpGrads};
pub use train::{
    adam_step, sample_training_batch, train, AdamHyper, AdamState, LrSchedule, TrainConfig,
    TrainMode, TrainingExample,
};

use ndarray::{Array1, Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::NetError;
use crate::geometry::PatchStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    Sum,
    Max,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Patch size P (odd).
    pub patch: usize,
    /// Per-slice feature dimension F.
    pub feat: usize,
    /// MLP hidden width.
    pub hidden: usize,
    /// Number of hidden-to-hidden layers H.
    pub depth: usize,
    /// 1 (pixel mode) or 8 (wavelet mode).
    pub out_dim: usize,
    /// Positional-encoding dimension (even).
    pub pe_dim: usize,
    pub pooling: Pooling,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            patch: 21,
            feat: 128,
            hidden: 128,
            depth: 5,
            out_dim: 1,
            pe_dim: 128,
            pooling: Pooling::Mean,
        }
    }
}

/// A bias-free MLP: W_out ReLU(W_H ... ReLU(W_in x)). Each weight matrix
/// has shape (out, in).
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub weights: Vec<Array2<f64>>,
}

impl MlpParams {
    fn init(input: usize, hidden: usize, depth: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![(hidden, input)];
        for _ in 0..depth {
            dims.push((hidden, hidden));
        }
        dims.push((output, hidden));
        let weights = dims
            .into_iter()
            .map(|(o, i)| kaiming(o, i, rng))
            .collect();
        Self { weights }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
        }
    }

    /// Forward pass; ReLU after every layer except the last.
    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        let last = self.weights.len() - 1;
        let mut a = x.clone();
        for (l, w) in self.weights.iter().enumerate() {
            a = w.dot(&a);
            if l != last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    /// Forward keeping the input of every layer (for backprop).
    pub(crate) fn forward_cached(&self, x: &Array1<f64>) -> (Array1<f64>, Vec<Array1<f64>>) {
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut a = x.clone();
        for (l, w) in self.weights.iter().enumerate() {
            inputs.push(a.clone());
            a = w.dot(&a);
            if l != last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        (a, inputs)
    }
}

fn kaiming(out: usize, input: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let std = (2.0 / input as f64).sqrt();
    Array2::from_shape_fn((out, input), |_| {
        // Box-Muller standard normal
        let u1: f64 = rng.gen_range(1e-12..1.0f64);
        let u2: f64 = rng.gen_range(0.0..1.0f64);
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// One per-slice block: a bias-free linear embedding of the P pixel values
/// of a slice, gated elementwise by the angle encoding, pooled over tilts
/// and processed by an MLP to F features.
#[derive(Debug, Clone)]
pub struct SetMlpParams {
    /// (pe_dim, P), applied per tilt.
    pub embed: Array2<f64>,
    /// MLP from pe_dim to F.
    pub trunk: MlpParams,
}

/// All learnable weights: P per-slice blocks plus the combiner MLP.
#[derive(Debug, Clone)]
pub struct SliceMlpParams {
    pub slices: Vec<SetMlpParams>,
    pub combiner: MlpParams,
    pub config: NetConfig,
}

impl SliceMlpParams {
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        if config.pe_dim % 2 != 0 {
            return Err(NetError::OddEncodingDim(config.pe_dim));
        }
        if config.out_dim != 1 && config.out_dim != 8 {
            return Err(NetError::BadOutDim(config.out_dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slices = (0..config.patch)
            .map(|_| SetMlpParams {
                embed: kaiming(config.pe_dim, config.patch, &mut rng),
                trunk: MlpParams::init(
                    config.pe_dim,
                    config.hidden,
                    config.depth,
                    config.feat,
                    &mut rng,
                ),
            })
            .collect();
        let combiner = MlpParams::init(
            config.patch * config.feat,
            config.hidden,
            config.depth,
            config.out_dim,
            &mut rng,
        );
        Ok(Self {
            slices,
            combiner,
            config,
        })
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All weight tensors in a fixed declared order: per slice the embed
    /// then the trunk layers, then the combiner layers. This order is the
    /// checkpoint serialization order.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for s in &self.slices {
            out.push(&s.embed);
            out.extend(s.trunk.weights.iter());
        }
        out.extend(self.combiner.weights.iter());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        for s in &mut self.slices {
            out.push(&mut s.embed);
            out.extend(s.trunk.weights.iter_mut());
        }
        out.extend(self.combiner.weights.iter_mut());
        out
    }
}

/// Sinusoidal encoding of tilt angles: row k holds interleaved
/// sin/cos(theta_k * scale * omega_j) with omega_j = 10000^(-2j/dim).
/// Angles are pre-scaled by dim/pi so the slowest frequencies still
/// discriminate neighboring tilts over (-pi/2, pi/2).
pub fn positional_encoding(angles: &[f64], dim: usize) -> Result<Array2<f64>, NetError> {
    if dim % 2 != 0 {
        return Err(NetError::OddEncodingDim(dim));
    }
    let scale = dim as f64 / std::f64::consts::PI;
    let mut out = Array2::zeros((angles.len(), dim));
    for (k, &theta) in angles.iter().enumerate() {
        let t = theta * scale;
        for j in 0..dim / 2 {
            let omega = 10000f64.powf(-2.0 * j as f64 / dim as f64);
            out[[k, 2 * j]] = (t * omega).sin();
            out[[k, 2 * j + 1]] = (t * omega).cos();
        }
    }
    Ok(out)
}

pub(crate) struct SetCache {
    /// Slice input (P, N).
    pub slice: Array2<f64>,
    /// Gated embedding (pe_dim, N), kept for max-pool routing.
    pub gated: Array2<f64>,
    /// Layer inputs of the trunk; `trunk_inputs[0]` is the pooled feature.
    pub trunk_inputs: Vec<Array1<f64>>,
}

pub(crate) fn set_forward_cached(
    params: &SetMlpParams,
    slice: ArrayView2<f64>,
    pe: &Array2<f64>,
    pooling: Pooling,
) -> (Array1<f64>, SetCache) {
    let n = slice.ncols();
    // (pe_dim, N) = embed . slice, then gate by the encoding per tilt
    let mut gated = params.embed.dot(&slice);
    for k in 0..n {
        let row = pe.row(k);
        for (i, v) in gated.column_mut(k).iter_mut().enumerate() {
            *v *= row[i];
        }
    }
    let pooled = pool(&gated, pooling);
    let (out, trunk_inputs) = params.trunk.forward_cached(&pooled);
    (
        out,
        SetCache {
            slice: slice.to_owned(),
            gated,
            trunk_inputs,
        },
    )
}

fn pool(gated: &Array2<f64>, pooling: Pooling) -> Array1<f64> {
    let n = gated.ncols() as f64;
    // summation over tilts runs in sorted value order so a permutation of
    // the tilt set yields bit-identical results, not merely close ones
    let ordered_sum = |row: ndarray::ArrayView1<f64>| -> f64 {
        let mut vals: Vec<f64> = row.to_vec();
        vals.sort_unstable_by(f64::total_cmp);
        vals.into_iter().sum()
    };
    match pooling {
        Pooling::Mean => gated.map_axis(ndarray::Axis(1), |row| ordered_sum(row) / n),
        Pooling::Sum => gated.map_axis(ndarray::Axis(1), ordered_sum),
        Pooling::Max => gated.map_axis(ndarray::Axis(1), |row| {
            row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }),
    }
}

/// One per-slice block applied to a (P, N) slice with its N tilt angles.
pub fn set_mlp_forward(
    params: &SetMlpParams,
    slice: ArrayView2<f64>,
    angles: &[f64],
    pe_dim: usize,
    pooling: Pooling,
) -> Result<Array1<f64>, NetError> {
    if angles.is_empty() || slice.ncols() != angles.len() {
        return Err(NetError::EmptyStack);
    }
    let pe = positional_encoding(angles, pe_dim)?;
    Ok(set_forward_cached(params, slice, &pe, pooling).0)
}

pub(crate) struct ForwardCache {
    pub pe: Array2<f64>,
    pub sets: Vec<SetCache>,
    /// Layer inputs of the combiner; `combiner_inputs[0]` is the concat.
    pub combiner_inputs: Vec<Array1<f64>>,
}

pub(crate) fn forward_cached(
    params: &SliceMlpParams,
    stack: &PatchStack,
) -> Result<(Array1<f64>, ForwardCache), NetError> {
    let cfg = &params.config;
    let n = stack.n_tilts();
    if n == 0 {
        return Err(NetError::EmptyStack);
    }
    if stack.patch_size() != cfg.patch {
        return Err(NetError::PatchSizeMismatch {
            got: stack.patch_size(),
            expected: cfg.patch,
        });
    }
    let pe = positional_encoding(&stack.angles, cfg.pe_dim)?;
    let p = cfg.patch;
    let mut concat = Array1::zeros(p * cfg.feat);
    let mut sets = Vec::with_capacity(p);
    for s in 0..p {
        // slice s along the rotation axis: (P, N) with rows = x offsets
        let slice = Array2::from_shape_fn((p, n), |(i, k)| stack.data[[k, s, i]]);
        let (feat, cache) = set_forward_cached(&params.slices[s], slice.view(), &pe, cfg.pooling);
        concat
            .slice_mut(ndarray::s![s * cfg.feat..(s + 1) * cfg.feat])
            .assign(&feat);
        sets.push(cache);
    }
    let (out, combiner_inputs) = params.combiner.forward_cached(&concat);
    Ok((
        out,
        ForwardCache {
            pe,
            sets,
            combiner_inputs,
        },
    ))
}

/// Full network: patch stack in, out_dim values out.
pub fn slice_mlp_forward(
    params: &SliceMlpParams,
    stack: &PatchStack,
) -> Result<Array1<f64>, NetError> {
    forward_cached(params, stack).map(|(out, _)| out)
}

/// Hand-constructed parameters whose output equals pi times the mean of
/// the patch centers across tilts — exactly the integrand of the filtered
/// backprojection, so this network reproduces `backproject()` pointwise.
///
/// The constant gate is synthesized from the two slowest cosine channels
/// of the positional encoding; the residual is O(1e-10) over the tilt
/// range. Requires mean pooling.
pub fn fbp_equivalence_witness(config: NetConfig) -> Result<SliceMlpParams, NetError> {
    if config.pe_dim % 2 != 0 || config.pe_dim < 8 {
        return Err(NetError::OddEncodingDim(config.pe_dim));
    }
    if config.out_dim != 1 {
        return Err(NetError::BadOutDim(config.out_dim));
    }
    let dim = config.pe_dim;
    let j1 = dim / 2 - 1;
    let j2 = dim / 2 - 2;
    let w1 = 10000f64.powf(-2.0 * j1 as f64 / dim as f64);
    let w2 = 10000f64.powf(-2.0 * j2 as f64 / dim as f64);
    // a + b = 1 and a w1^2 + b w2^2 = 0: kills the quadratic term of the
    // cosine expansions, leaving a ~1e-10 quartic residue
    let a = w2 * w2 / (w2 * w2 - w1 * w1);
    let b = -w1 * w1 / (w2 * w2 - w1 * w1);
    let ch1 = 2 * j1 + 1;
    let ch2 = 2 * j2 + 1;
    let p = config.patch;
    let center = p / 2;
    let n_layers = config.depth + 2;

    let zero_mlp = |input: usize, output: usize| -> MlpParams {
        let mut weights = vec![Array2::zeros((config.hidden, input))];
        for _ in 0..config.depth {
            weights.push(Array2::zeros((config.hidden, config.hidden)));
        }
        weights.push(Array2::zeros((output, config.hidden)));
        MlpParams { weights }
    };

    // a value u is carried through the ReLU stack as the pair
    // (relu(u), relu(-u)) in lanes 0 and 1
    let passthrough = |mlp: &mut MlpParams, in_combo: Vec<(usize, f64)>, out_scale: f64| {
        for (idx, coeff) in &in_combo {
            mlp.weights[0][[0, *idx]] = *coeff;
            mlp.weights[0][[1, *idx]] = -*coeff;
        }
        for l in 1..n_layers - 1 {
            mlp.weights[l][[0, 0]] = 1.0;
            mlp.weights[l][[0, 1]] = -1.0;
            mlp.weights[l][[1, 0]] = -1.0;
            mlp.weights[l][[1, 1]] = 1.0;
        }
        mlp.weights[n_layers - 1][[0, 0]] = out_scale;
        mlp.weights[n_layers - 1][[0, 1]] = -out_scale;
    };

    let mut slices = Vec::with_capacity(p);
    for s in 0..p {
        let mut embed = Array2::zeros((dim, p));
        let mut trunk = zero_mlp(dim, config.feat);
        if s == center {
            embed[[ch1, center]] = 1.0;
            embed[[ch2, center]] = 1.0;
            passthrough(&mut trunk, vec![(ch1, a), (ch2, b)], 1.0);
        }
        slices.push(SetMlpParams { embed, trunk });
    }
    let mut combiner = zero_mlp(p * config.feat, 1);
    passthrough(
        &mut combiner,
        vec![(center * config.feat, std::f64::consts::PI)],
        1.0,
    );
    Ok(SliceMlpParams {
        slices,
        combiner,
        config: NetConfig {
            pooling: Pooling::Mean,
            ..config
        },
    })
}
