//! Single-level separable 3-D biorthogonal wavelet analysis/synthesis and
//! the two inference drivers: per-voxel and 8-coefficient wavelet mode.
//!
//! The transforms are computed by lifting, which makes the analysis and
//! synthesis passes exact inverses of each other including the symmetric
//! boundary handling. The equivalent filter taps are carried for
//! metadata and for the patch-support containment check.

use ndarray::{Array1, Array3, Axis};
use rayon::prelude::*;

use crate::error::WaveletError;
use crate::geometry::{extract_patch_stack, PatchSpec, TiltSeries, Volume};
use crate::net::{slice_mlp_forward, SliceMlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    /// CDF biorthogonal 2.2 (the 5/3 bank); short support, fits inside
    /// the default 21-pixel patch.
    Cdf22,
    Haar,
}

impl WaveletFamily {
    pub fn parse(name: &str) -> Result<Self, WaveletError> {
        match name {
            "cdf22" | "bior2.2" | "5/3" => Ok(Self::Cdf22),
            "haar" => Ok(Self::Haar),
            other => Err(WaveletError::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cdf22 => "cdf22",
            Self::Haar => "haar",
        }
    }
}

/// A perfect-reconstruction biorthogonal filter bank.
#[derive(Debug, Clone)]
pub struct WaveletBank {
    pub family: WaveletFamily,
    pub analysis_lo: Vec<f64>,
    pub analysis_hi: Vec<f64>,
    pub synthesis_lo: Vec<f64>,
    pub synthesis_hi: Vec<f64>,
}

impl WaveletBank {
    /// Build a bank and verify perfect reconstruction numerically on
    /// random signals (round-trip residual must stay below 1e-10).
    pub fn new(family: WaveletFamily) -> Result<Self, WaveletError> {
        let bank = match family {
            WaveletFamily::Cdf22 => Self {
                family,
                analysis_lo: vec![-0.125, 0.25, 0.75, 0.25, -0.125],
                analysis_hi: vec![-0.5, 1.0, -0.5],
                synthesis_lo: vec![0.5, 1.0, 0.5],
                synthesis_hi: vec![-0.125, -0.25, 0.75, -0.25, -0.125],
            },
            WaveletFamily::Haar => Self {
                family,
                analysis_lo: vec![0.5, 0.5],
                analysis_hi: vec![-1.0, 1.0],
                synthesis_lo: vec![1.0, 1.0],
                synthesis_hi: vec![-0.5, 0.5],
            },
        };
        let err = bank.round_trip_residual();
        if err > 1e-10 {
            return Err(WaveletError::NotPerfectReconstruction(err));
        }
        Ok(bank)
    }

    pub fn cdf_2_2() -> Self {
        Self::new(WaveletFamily::Cdf22).expect("built-in bank is PR")
    }

    /// Longest analysis filter, in samples.
    pub fn max_analysis_support(&self) -> usize {
        self.analysis_lo.len().max(self.analysis_hi.len())
    }

    /// The analysis support mapped back to detector pixels must fit
    /// inside the P x P network input.
    pub fn check_patch_support(&self, patch: usize) -> Result<(), WaveletError> {
        let support = self.max_analysis_support();
        if support > patch {
            return Err(WaveletError::SupportExceedsPatch { support, patch });
        }
        Ok(())
    }

    fn round_trip_residual(&self) -> f64 {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xb10c);
        let mut worst = 0.0f64;
        for len in [8usize, 16, 32] {
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (lo, hi) = self.dwt1(&x);
            let back = self.idwt1(&lo, &hi);
            for (a, b) in x.iter().zip(back.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// One forward lifting pass on an even-length signal.
    fn dwt1(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        debug_assert!(n % 2 == 0 && n >= 2);
        let half = n / 2;
        match self.family {
            WaveletFamily::Cdf22 => {
                // predict: d[k] = x[2k+1] - (x[2k] + x[2k+2]) / 2
                // update:  s[k] = x[2k] + (d[k-1] + d[k]) / 4
                // whole-sample symmetric extension at both ends
                let mut d = vec![0.0; half];
                for k in 0..half {
                    let right = if 2 * k + 2 < n { x[2 * k + 2] } else { x[n - 2] };
                    d[k] = x[2 * k + 1] - 0.5 * (x[2 * k] + right);
                }
                let mut s = vec![0.0; half];
                for k in 0..half {
                    let left = if k > 0 { d[k - 1] } else { d[0] };
                    s[k] = x[2 * k] + 0.25 * (left + d[k]);
                }
                (s, d)
            }
            WaveletFamily::Haar => {
                let mut s = vec![0.0; half];
                let mut d = vec![0.0; half];
                for k in 0..half {
                    d[k] = x[2 * k + 1] - x[2 * k];
                    s[k] = x[2 * k] + 0.5 * d[k];
                }
                (s, d)
            }
        }
    }

    /// Exact inverse of `dwt1`.
    fn idwt1(&self, s: &[f64], d: &[f64]) -> Vec<f64> {
        let half = s.len();
        let n = 2 * half;
        let mut x = vec![0.0; n];
        match self.family {
            WaveletFamily::Cdf22 => {
                for k in 0..half {
                    let left = if k > 0 { d[k - 1] } else { d[0] };
                    x[2 * k] = s[k] - 0.25 * (left + d[k]);
                }
                for k in 0..half {
                    let right = if 2 * k + 2 < n { x[2 * k + 2] } else { x[n - 2] };
                    x[2 * k + 1] = d[k] + 0.5 * (x[2 * k] + right);
                }
                // the odd-sample pass above reads x[2k+2] which is already
                // reconstructed: even samples were filled first
            }
            WaveletFamily::Haar => {
                for k in 0..half {
                    x[2 * k] = s[k] - 0.5 * d[k];
                    x[2 * k + 1] = x[2 * k] + d[k];
                }
            }
        }
        x
    }
}

/// Subband labels in storage order: bit 0 = x high-pass, bit 1 = y,
/// bit 2 = z.
pub const SUBBAND_LABELS: [&str; 8] = ["LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"];

/// The 8 half-resolution subbands of one decomposition level.
#[derive(Debug, Clone)]
pub struct SubbandSet {
    /// Index bit 0 selects x high-pass, bit 1 y, bit 2 z; bands[0] = LLL.
    pub bands: Vec<Array3<f64>>,
    /// Dimensions of the (possibly padded) transform grid.
    pub padded_dims: (usize, usize, usize),
    /// Original volume dimensions before padding.
    pub parent_dims: (usize, usize, usize),
    pub voxel_size: f64,
}

impl SubbandSet {
    pub fn coarse_dims(&self) -> (usize, usize, usize) {
        let (nx, ny, nz) = self.padded_dims;
        (nx / 2, ny / 2, nz / 2)
    }

    /// The 8 coefficients attached to coarse site (cx, cy, cz).
    pub fn coefficients_at(&self, cx: usize, cy: usize, cz: usize) -> Array1<f64> {
        Array1::from_iter((0..8).map(|b| self.bands[b][[cz, cy, cx]]))
    }
}

fn pad_even(data: &Array3<f64>) -> Array3<f64> {
    let s = data.shape();
    let (nz, ny, nx) = (s[0], s[1], s[2]);
    let (pz, py, px) = (nz + nz % 2, ny + ny % 2, nx + nx % 2);
    if (pz, py, px) == (nz, ny, nx) {
        return data.clone();
    }
    // symmetric (edge-replicating) pad by one sample where needed
    Array3::from_shape_fn((pz, py, px), |(z, y, x)| {
        data[[z.min(nz - 1), y.min(ny - 1), x.min(nx - 1)]]
    })
}

/// Apply `dwt1` along one axis of a 3-D array, writing low-pass results
/// into the first half of that axis and high-pass into the second half.
fn transform_axis(data: &mut Array3<f64>, axis: Axis, bank: &WaveletBank) {
    let len = data.shape()[axis.0];
    data.lanes_mut(axis)
        .into_iter()
        .par_bridge()
        .for_each(|mut lane| {
            let x: Vec<f64> = lane.iter().cloned().collect();
            let (s, d) = bank.dwt1(&x);
            for k in 0..len / 2 {
                lane[k] = s[k];
                lane[k + len / 2] = d[k];
            }
        });
}

fn inverse_axis(data: &mut Array3<f64>, axis: Axis, bank: &WaveletBank) {
    let len = data.shape()[axis.0];
    data.lanes_mut(axis)
        .into_iter()
        .par_bridge()
        .for_each(|mut lane| {
            let s: Vec<f64> = (0..len / 2).map(|k| lane[k]).collect();
            let d: Vec<f64> = (0..len / 2).map(|k| lane[k + len / 2]).collect();
            let x = bank.idwt1(&s, &d);
            for (k, v) in x.into_iter().enumerate() {
                lane[k] = v;
            }
        });
}

/// One level of separable analysis with symmetric boundary extension.
/// Odd dimensions are padded by edge replication and recorded.
pub fn dwt3(volume: &Volume, bank: &WaveletBank) -> SubbandSet {
    let (nx, ny, nz) = volume.dims();
    let mut work = pad_even(&volume.data);
    let s = work.shape();
    let (pz, py, px) = (s[0], s[1], s[2]);
    transform_axis(&mut work, Axis(2), bank); // x
    transform_axis(&mut work, Axis(1), bank); // y
    transform_axis(&mut work, Axis(0), bank); // z
    let (hx, hy, hz) = (px / 2, py / 2, pz / 2);
    let bands = (0..8usize)
        .map(|b| {
            let ox = if b & 1 != 0 { hx } else { 0 };
            let oy = if b & 2 != 0 { hy } else { 0 };
            let oz = if b & 4 != 0 { hz } else { 0 };
            Array3::from_shape_fn((hz, hy, hx), |(z, y, x)| work[[z + oz, y + oy, x + ox]])
        })
        .collect();
    SubbandSet {
        bands,
        padded_dims: (px, py, pz),
        parent_dims: (nx, ny, nz),
        voxel_size: volume.voxel_size,
    }
}

/// Perfect-reconstruction synthesis; un-pads to the parent dimensions.
pub fn idwt3(subbands: &SubbandSet, bank: &WaveletBank) -> Result<Volume, WaveletError> {
    let (hz, hy, hx) = {
        let s = subbands.bands[0].shape();
        (s[0], s[1], s[2])
    };
    if subbands.bands.len() != 8
        || subbands
            .bands
            .iter()
            .any(|b| b.shape() != [hz, hy, hx])
    {
        return Err(WaveletError::ShapeMismatch);
    }
    let (px, py, pz) = subbands.padded_dims;
    if (px, py, pz) != (2 * hx, 2 * hy, 2 * hz) {
        return Err(WaveletError::ShapeMismatch);
    }
    let mut work = Array3::zeros((pz, py, px));
    for (b, band) in subbands.bands.iter().enumerate() {
        let ox = if b & 1 != 0 { hx } else { 0 };
        let oy = if b & 2 != 0 { hy } else { 0 };
        let oz = if b & 4 != 0 { hz } else { 0 };
        for ((z, y, x), &v) in band.indexed_iter() {
            work[[z + oz, y + oy, x + ox]] = v;
        }
    }
    inverse_axis(&mut work, Axis(0), bank);
    inverse_axis(&mut work, Axis(1), bank);
    inverse_axis(&mut work, Axis(2), bank);
    let (nx, ny, nz) = subbands.parent_dims;
    let data = Array3::from_shape_fn((nz, ny, nx), |(z, y, x)| work[[z, y, x]]);
    Ok(Volume {
        data,
        voxel_size: subbands.voxel_size,
    })
}

/// Training targets for wavelet mode: the decomposition of the training
/// volume, read 8 coefficients at a time at coarse sites.
pub fn wavelet_targets(volume: &Volume, bank: &WaveletBank) -> SubbandSet {
    dwt3(volume, bank)
}

/// A reconstruction plus bookkeeping for the run report.
#[derive(Debug, Clone)]
pub struct ReconOutput {
    pub volume: Volume,
    pub network_evals: usize,
}

fn centered(idx: f64, n: usize) -> f64 {
    idx - 0.5 * (n as f64 - 1.0)
}

/// Surface the errors that would otherwise panic inside the parallel
/// evaluation loops.
fn validate_query(
    params: &SliceMlpParams,
    series: &TiltSeries,
    patch: PatchSpec,
) -> Result<(), WaveletError> {
    if !series.filtered {
        return Err(crate::error::GeometryError::UnfilteredInput.into());
    }
    if patch.size != params.config.patch {
        return Err(crate::error::NetError::PatchSizeMismatch {
            got: patch.size,
            expected: params.config.patch,
        }
        .into());
    }
    Ok(())
}

/// Evaluate the pixel-mode network at every grid voxel, chunked to bound
/// working memory. Output is deterministic regardless of chunking.
pub fn reconstruct_pixel(
    params: &SliceMlpParams,
    series: &TiltSeries,
    dims: (usize, usize, usize),
    voxel_size: f64,
    patch: PatchSpec,
    chunk_size: usize,
) -> Result<ReconOutput, WaveletError> {
    if params.config.out_dim != 1 {
        return Err(WaveletError::WrongMode {
            expected: 1,
            got: params.config.out_dim,
        });
    }
    validate_query(params, series, patch)?;
    let (nx, ny, nz) = dims;
    let total = nx * ny * nz;
    let chunk = chunk_size.max(1);
    let mut values = vec![0.0f64; total];
    values
        .par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(ci, out)| {
            let base = ci * chunk;
            for (off, v) in out.iter_mut().enumerate() {
                let idx = base + off;
                let ix = idx % nx;
                let iy = (idx / nx) % ny;
                let iz = idx / (nx * ny);
                let r0 = [
                    centered(ix as f64, nx),
                    centered(iy as f64, ny),
                    centered(iz as f64, nz),
                ];
                let stack = extract_patch_stack(series, r0, patch)
                    .expect("series verified filtered by caller");
                *v = slice_mlp_forward(params, &stack).expect("geometry checked")[0];
            }
        });
    let data = Array3::from_shape_vec((nz, ny, nx), values).expect("length matches");
    Ok(ReconOutput {
        volume: Volume { data, voxel_size },
        network_evals: total,
    })
}

/// Evaluate the 8-coefficient network on the half-resolution grid (one
/// query per 2x2x2 block, at the block center), scatter into subbands and
/// invert the transform.
pub fn reconstruct_wavelet(
    params: &SliceMlpParams,
    series: &TiltSeries,
    dims: (usize, usize, usize),
    voxel_size: f64,
    patch: PatchSpec,
    bank: &WaveletBank,
    chunk_size: usize,
) -> Result<ReconOutput, WaveletError> {
    if params.config.out_dim != 8 {
        return Err(WaveletError::WrongMode {
            expected: 8,
            got: params.config.out_dim,
        });
    }
    validate_query(params, series, patch)?;
    let (nx, ny, nz) = dims;
    if nx % 2 != 0 || ny % 2 != 0 || nz % 2 != 0 {
        return Err(WaveletError::OddGrid(dims));
    }
    bank.check_patch_support(patch.size)?;
    let (cx, cy, cz) = (nx / 2, ny / 2, nz / 2);
    let total = cx * cy * cz;
    let chunk = chunk_size.max(1);
    let mut coeffs = vec![[0.0f64; 8]; total];
    coeffs
        .par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(ci, out)| {
            let base = ci * chunk;
            for (off, v) in out.iter_mut().enumerate() {
                let idx = base + off;
                let ix = idx % cx;
                let iy = (idx / cx) % cy;
                let iz = idx / (cx * cy);
                // block center of the 2x2x2 parent cell
                let r0 = [
                    centered(2.0 * ix as f64 + 0.5, nx),
                    centered(2.0 * iy as f64 + 0.5, ny),
                    centered(2.0 * iz as f64 + 0.5, nz),
                ];
                let stack = extract_patch_stack(series, r0, patch)
                    .expect("series verified filtered by caller");
                let y = slice_mlp_forward(params, &stack).expect("geometry checked");
                for b in 0..8 {
                    v[b] = y[b];
                }
            }
        });
    let mut bands: Vec<Array3<f64>> = (0..8).map(|_| Array3::zeros((cz, cy, cx))).collect();
    for (idx, v) in coeffs.iter().enumerate() {
        let ix = idx % cx;
        let iy = (idx / cx) % cy;
        let iz = idx / (cx * cy);
        for b in 0..8 {
            bands[b][[iz, iy, ix]] = v[b];
        }
    }
    let subbands = SubbandSet {
        bands,
        padded_dims: dims,
        parent_dims: dims,
        voxel_size,
    };
    let volume = idwt3(&subbands, bank)?;
    Ok(ReconOutput {
        volume,
        network_evals: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_volume(nx: usize, ny: usize, nz: usize, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::new(
            Array3::from_shape_fn((nz, ny, nx), |_| rng.gen_range(-1.0..1.0)),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn banks_pass_pr_check() {
        for family in [WaveletFamily::Cdf22, WaveletFamily::Haar] {
            WaveletBank::new(family).unwrap();
        }
    }

    #[test]
    fn constant_volume_transform() {
        let c = 2.5;
        let vol = Volume::new(Array3::from_elem((8, 8, 8), c), 1.0).unwrap();
        let bank = WaveletBank::cdf_2_2();
        let sub = dwt3(&vol, &bank);
        // expected LLL level: c times the cubed DC gain of the analysis
        // low-pass, which for this lifting normalization is 1
        let dc_gain: f64 = bank.analysis_lo.iter().sum();
        let expect = c * dc_gain.powi(3);
        for &v in sub.bands[0].iter() {
            assert!((v - expect).abs() < 1e-10, "LLL {v} vs {expect}");
        }
        for b in 1..8 {
            for &v in sub.bands[b].iter() {
                assert!(v.abs() < 1e-10, "band {b} not vanishing: {v}");
            }
        }
    }

    #[test]
    fn zero_volume_zero_subbands_and_back() {
        let vol = Volume::zeros(8, 8, 8, 1.0);
        let bank = WaveletBank::cdf_2_2();
        let sub = dwt3(&vol, &bank);
        assert!(sub.bands.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let back = idwt3(&sub, &bank).unwrap();
        assert!(back.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_reconstruction_random_volumes() {
        let bank = WaveletBank::cdf_2_2();
        for seed in 0..20 {
            // include odd-dimension padded cases
            let (nx, ny, nz) = match seed % 4 {
                0 => (16, 16, 16),
                1 => (15, 16, 17),
                2 => (32, 8, 12),
                _ => (9, 9, 9),
            };
            let vol = random_volume(nx, ny, nz, seed);
            let back = idwt3(&dwt3(&vol, &bank), &bank).unwrap();
            assert_eq!(back.dims(), vol.dims());
            let err = vol
                .data
                .iter()
                .zip(back.data.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-6, "seed {seed}: round-trip error {err}");
        }
    }

    #[test]
    fn transform_linearity() {
        let bank = WaveletBank::cdf_2_2();
        let a = random_volume(16, 16, 16, 100);
        let b = random_volume(16, 16, 16, 101);
        let (ca, cb) = (1.3, -0.6);
        let combined = Volume::new(&a.data * ca + &b.data * cb, 1.0).unwrap();
        let sa = dwt3(&a, &bank);
        let sb = dwt3(&b, &bank);
        let sc = dwt3(&combined, &bank);
        for band in 0..8 {
            for ((x, y), z) in sa.bands[band]
                .iter()
                .zip(sb.bands[band].iter())
                .zip(sc.bands[band].iter())
            {
                let expect = ca * x + cb * y;
                assert!((z - expect).abs() < 1e-10 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn lll_only_is_lowpass() {
        let bank = WaveletBank::cdf_2_2();
        let vol = random_volume(32, 32, 32, 200);
        let mut sub = dwt3(&vol, &bank);
        for b in 1..8 {
            sub.bands[b].fill(0.0);
        }
        let smooth = idwt3(&sub, &bank).unwrap();
        // FFT comparison: low frequencies survive, high ones shrink
        let f_orig = metrics::fft3(&vol.data);
        let f_smooth = metrics::fft3(&smooth.data);
        let band_energy = |f: &Array3<num_complex::Complex<f64>>, lo: f64, hi: f64| -> f64 {
            let mut e = 0.0;
            let n = 32usize;
            let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            for ((z, y, x), v) in f.indexed_iter() {
                let r = (signed(x).powi(2) + signed(y).powi(2) + signed(z).powi(2)).sqrt()
                    / n as f64;
                if r >= lo && r < hi {
                    e += v.norm_sqr();
                }
            }
            e
        };
        let low_ratio = band_energy(&f_smooth, 0.0, 0.1) / band_energy(&f_orig, 0.0, 0.1);
        let high_ratio = band_energy(&f_smooth, 0.4, 0.9) / band_energy(&f_orig, 0.4, 0.9);
        assert!(low_ratio > 0.8, "low band ratio {low_ratio}");
        assert!(high_ratio < 0.3, "high band ratio {high_ratio}");
    }

    #[test]
    fn targets_round_trip() {
        let bank = WaveletBank::cdf_2_2();
        let vol = random_volume(16, 16, 16, 300);
        let sub = wavelet_targets(&vol, &bank);
        // assembling every coarse-site 8-vector and inverting recovers V
        let (cx, cy, cz) = sub.coarse_dims();
        let mut bands: Vec<Array3<f64>> = (0..8).map(|_| Array3::zeros((cz, cy, cx))).collect();
        for z in 0..cz {
            for y in 0..cy {
                for x in 0..cx {
                    let c = sub.coefficients_at(x, y, z);
                    for b in 0..8 {
                        bands[b][[z, y, x]] = c[b];
                    }
                }
            }
        }
        let rebuilt = SubbandSet {
            bands,
            padded_dims: sub.padded_dims,
            parent_dims: sub.parent_dims,
            voxel_size: 1.0,
        };
        let back = idwt3(&rebuilt, &bank).unwrap();
        let err = vol
            .data
            .iter()
            .zip(back.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn support_containment() {
        let bank = WaveletBank::cdf_2_2();
        assert!(bank.check_patch_support(21).is_ok());
        assert!(bank.check_patch_support(5).is_ok());
        assert!(bank.check_patch_support(3).is_err());
    }

    #[test]
    fn unknown_family_rejected() {
        assert!(WaveletFamily::parse("db4").is_err());
    }
}
