//! Reverse-mode gradients through the combiner, concat, per-slice trunks,
//! pooling, the encoding gate and the embeddings. The encoding itself is
//! data, not a parameter, and is treated as constant.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::{forward_cached, MlpParams, Pooling, SetCache, SliceMlpParams};
use crate::error::NetError;
use crate::geometry::PatchStack;

/// Gradients share the parameter layout exactly.
pub type SliceMlpGrads = SliceMlpParams;

impl SliceMlpParams {
    pub fn zeros_like(&self) -> SliceMlpGrads {
        SliceMlpParams {
            slices: self
                .slices
                .iter()
                .map(|s| super::SetMlpParams {
                    embed: Array2::zeros(s.embed.raw_dim()),
                    trunk: s.trunk.zeros_like(),
                })
                .collect(),
            combiner: self.combiner.zeros_like(),
            config: self.config,
        }
    }

    pub(crate) fn add_assign(&mut self, other: &SliceMlpGrads) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *dst += src;
        }
    }
}

/// Backprop through a bias-free MLP. `inputs[l]` is the input to layer l
/// (post-ReLU output of layer l-1 for l > 0). Returns layer gradients and
/// the gradient with respect to the MLP input.
fn mlp_backward(
    params: &MlpParams,
    inputs: &[Array1<f64>],
    dout: &Array1<f64>,
) -> (Vec<Array2<f64>>, Array1<f64>) {
    let n_layers = params.weights.len();
    let mut grads: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    for w in &params.weights {
        grads.push(Array2::zeros(w.raw_dim()));
    }
    let mut delta = dout.clone();
    for l in (0..n_layers).rev() {
        // dW_l = delta (outer) input_l
        let input = &inputs[l];
        for (i, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let mut row = grads[l].row_mut(i);
            for (j, &x) in input.iter().enumerate() {
                row[j] += d * x;
            }
        }
        let mut dinput = params.weights[l].t().dot(&delta);
        if l > 0 {
            // inputs[l] is the ReLU output feeding this layer; its sign
            // is the ReLU mask
            for (d, &a) in dinput.iter_mut().zip(inputs[l].iter()) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        delta = dinput;
    }
    (grads, delta)
}

fn set_backward(
    params: &super::SetMlpParams,
    cache: &SetCache,
    pe: &Array2<f64>,
    pooling: Pooling,
    dfeat: &Array1<f64>,
) -> super::SetMlpParams {
    let (trunk_grads, dpooled) = mlp_backward(&params.trunk, &cache.trunk_inputs, dfeat);
    let n = cache.gated.ncols();
    // pooled -> gated
    let mut dgated = Array2::zeros(cache.gated.raw_dim());
    match pooling {
        Pooling::Mean => {
            let inv = 1.0 / n as f64;
            for k in 0..n {
                for (i, v) in dgated.column_mut(k).iter_mut().enumerate() {
                    *v = dpooled[i] * inv;
                }
            }
        }
        Pooling::Sum => {
            for k in 0..n {
                for (i, v) in dgated.column_mut(k).iter_mut().enumerate() {
                    *v = dpooled[i];
                }
            }
        }
        Pooling::Max => {
            for i in 0..cache.gated.nrows() {
                let mut best = 0usize;
                let mut best_val = f64::NEG_INFINITY;
                for k in 0..n {
                    if cache.gated[[i, k]] > best_val {
                        best_val = cache.gated[[i, k]];
                        best = k;
                    }
                }
                dgated[[i, best]] = dpooled[i];
            }
        }
    }
    // gate: gated = embedded * pe^T elementwise, encoding constant
    let mut dembedded = dgated;
    for k in 0..n {
        let row = pe.row(k);
        for (i, v) in dembedded.column_mut(k).iter_mut().enumerate() {
            *v *= row[i];
        }
    }
    let dembed = dembedded.dot(&cache.slice.t());
    super::SetMlpParams {
        embed: dembed,
        trunk: MlpParams {
            weights: trunk_grads,
        },
    }
}

fn sample_grad(
    params: &SliceMlpParams,
    stack: &PatchStack,
    target: &Array1<f64>,
    inv_denominator: f64,
) -> Result<(f64, SliceMlpGrads), NetError> {
    let (out, cache) = forward_cached(params, stack)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(NetError::Diverged {
            step: 0,
            value: f64::NAN,
        });
    }
    let residual = &out - target;
    let loss: f64 = residual.iter().map(|r| r * r).sum::<f64>() * inv_denominator;
    let dout = &residual * (2.0 * inv_denominator);
    let (combiner_grads, dconcat) = mlp_backward(&params.combiner, &cache.combiner_inputs, &dout);
    let feat = params.config.feat;
    let slices = params
        .slices
        .iter()
        .enumerate()
        .map(|(s, sp)| {
            let dfeat = dconcat.slice(ndarray::s![s * feat..(s + 1) * feat]).to_owned();
            set_backward(sp, &cache.sets[s], &cache.pe, params.config.pooling, &dfeat)
        })
        .collect();
    Ok((
        loss,
        SliceMlpParams {
            slices,
            combiner: MlpParams {
                weights: combiner_grads,
            },
            config: params.config,
        },
    ))
}

/// Mean-squared-error loss over the batch and its parameter gradients.
///
/// Samples are reduced in a fixed chunk order so the result is identical
/// for any worker count.
pub fn loss_and_grad(
    params: &SliceMlpParams,
    batch: &[(PatchStack, Array1<f64>)],
) -> Result<(f64, SliceMlpGrads), NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let inv = 1.0 / (batch.len() * params.config.out_dim) as f64;
    // fixed chunking, independent of the rayon pool size
    let chunk = batch.len().div_ceil(16).max(1);
    let partials: Vec<Result<(f64, SliceMlpGrads), NetError>> = batch
        .par_chunks(chunk)
        .map(|samples| {
            let mut loss = 0.0;
            let mut grads = params.zeros_like();
            for (stack, target) in samples {
                let (l, g) = sample_grad(params, stack, target, inv)?;
                loss += l;
                grads.add_assign(&g);
            }
            Ok((loss, grads))
        })
        .collect();
    let mut loss = 0.0;
    let mut grads = params.zeros_like();
    for partial in partials {
        let (l, g) = partial?;
        loss += l;
        grads.add_assign(&g);
    }
    if !loss.is_finite() {
        return Err(NetError::Diverged {
            step: 0,
            value: loss,
        });
    }
    Ok((loss, grads))
}

/// Loss only (no gradients); used by evaluation paths.
pub fn batch_loss(
    params: &SliceMlpParams,
    batch: &[(PatchStack, Array1<f64>)],
) -> Result<f64, NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let inv = 1.0 / (batch.len() * params.config.out_dim) as f64;
    let mut loss = 0.0;
    for (stack, target) in batch {
        let out = super::slice_mlp_forward(params, stack)?;
        loss += out
            .iter()
            .zip(target.iter())
            .map(|(o, t)| (o - t).powi(2))
            .sum::<f64>()
            * inv;
    }
    Ok(loss)
}

/// Maximum per-tensor relative disagreement between reverse-mode gradients
/// and central finite differences of the batch loss. Verification oracle;
/// the finite-difference side never touches the backprop path.
pub fn finite_difference_check(
    params: &SliceMlpParams,
    batch: &[(PatchStack, Array1<f64>)],
    step: f64,
) -> Result<f64, NetError> {
    let (_, grads) = loss_and_grad(params, batch)?;
    let n_tensors = params.tensors().len();
    let mut worst = 0.0f64;
    for t in 0..n_tensors {
        let dim = params.tensors()[t].raw_dim();
        let mut max_abs_diff = 0.0f64;
        let mut max_mag = 0.0f64;
        for i in 0..dim[0] {
            for j in 0..dim[1] {
                let mut probe = params.clone();
                probe.tensors_mut()[t][[i, j]] += step;
                let up = batch_loss(&probe, batch)?;
                probe.tensors_mut()[t][[i, j]] -= 2.0 * step;
                let down = batch_loss(&probe, batch)?;
                let fd = (up - down) / (2.0 * step);
                let ad = grads.tensors()[t][[i, j]];
                max_abs_diff = max_abs_diff.max((ad - fd).abs());
                max_mag = max_mag.max(ad.abs().max(fd.abs()));
            }
        }
        if max_mag > 0.0 {
            worst = worst.max(max_abs_diff / max_mag);
        }
    }
    Ok(worst)
}
