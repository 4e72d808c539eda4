//! Glue between the run configuration and the library: simulation,
//! filtering, training-set assembly, reconstruction and file helpers.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use tomo_core::filter::{backproject, filter_tilt_series, FilterSpec};
use tomo_core::geometry::{DetectorSpec, PatchSpec, TiltSeries, Volume};
use tomo_core::io::mrc::{read_mrc, write_mrc, MrcData};
use tomo_core::io::RunConfig;
use tomo_core::net::{NetConfig, TrainConfig, TrainMode, TrainingExample};
use tomo_core::sim::{apply_noise_pair, make_phantom, project, NoiseKind, NoiseModel, PhantomSpec};
use tomo_core::wavelet::{dwt3, WaveletBank, WaveletFamily};

/// Cap the global worker pool. A zero leaves the default; calling twice
/// in one process is harmless (the second call is ignored).
pub fn apply_thread_cap(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

pub fn net_config(cfg: &RunConfig) -> NetConfig {
    NetConfig {
        patch: cfg.patch_size,
        feat: cfg.feat,
        hidden: cfg.hidden,
        depth: cfg.depth,
        out_dim: match cfg.mode {
            TrainMode::Pixel => 1,
            TrainMode::Wavelet => 8,
        },
        pe_dim: cfg.pe_dim,
        pooling: cfg.pooling,
    }
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        batch_size: cfg.batch_size,
        steps: cfg.steps,
        lr: cfg.lr,
        lr_schedule: cfg.lr_schedule,
        tilt_drop_max: cfg.tilt_drop_max,
        n2n_enabled: cfg.n2n,
        seed: cfg.seed,
        mode: cfg.mode,
        patch: PatchSpec::new(cfg.patch_size, cfg.patch_spacing)?,
        adam: Default::default(),
    })
}

pub fn filter_spec(cfg: &RunConfig) -> FilterSpec {
    FilterSpec {
        window: cfg.filter,
        pad_factor: cfg.pad_factor,
    }
}

/// Detector wide enough that the rotated volume never leaves the field
/// of view.
pub fn detector_for(cfg: &RunConfig) -> DetectorSpec {
    let n = cfg.volume_size;
    let diag = ((2 * n * n) as f64).sqrt().ceil() as usize;
    DetectorSpec::new(diag + 8, n + 8)
}

pub fn wavelet_bank(cfg: &RunConfig) -> Result<WaveletBank> {
    let family = WaveletFamily::parse(&cfg.wavelet_family)?;
    let bank = WaveletBank::new(family)?;
    bank.check_patch_support(cfg.patch_size)?;
    Ok(bank)
}

pub fn noise_model(cfg: &RunConfig) -> NoiseModel {
    match cfg.noise {
        NoiseKind::None => NoiseModel::none(),
        NoiseKind::Gaussian => NoiseModel::gaussian(cfg.noise_sigma, cfg.seed),
        NoiseKind::Poisson => NoiseModel::poisson(cfg.noise_dose, cfg.seed),
    }
}

/// One simulated acquisition: the phantom and the two independent noisy
/// half-series over the configured tilt range.
pub struct SimBundle {
    pub phantom: Volume,
    pub angles: Vec<f64>,
    pub even: TiltSeries,
    pub odd: TiltSeries,
}

pub fn simulate(cfg: &RunConfig, phantom_seed: u64) -> Result<SimBundle> {
    let n = cfg.volume_size;
    let phantom = make_phantom(&PhantomSpec {
        kind: cfg.phantom,
        size: (n, n, n),
        count: cfg.phantom_count,
        seed: phantom_seed,
        density_range: (0.5, 1.0),
    })?;
    let angles = cfg.tilt_angles();
    let clean = project(&phantom, &angles, detector_for(cfg), 1.0)?;
    let (even, odd) = apply_noise_pair(&clean, &noise_model(cfg))?;
    Ok(SimBundle {
        phantom,
        angles,
        even,
        odd,
    })
}

/// Filter a raw series for backprojection or patch extraction.
pub fn prepare_filtered(raw: &TiltSeries, cfg: &RunConfig) -> Result<TiltSeries> {
    Ok(filter_tilt_series(raw, &filter_spec(cfg))?)
}

/// Filtered backprojection of a raw series onto a cubic grid.
pub fn fbp_recon(raw: &TiltSeries, cfg: &RunConfig, dims: (usize, usize, usize)) -> Result<Volume> {
    let filtered = prepare_filtered(raw, cfg)?;
    Ok(backproject(&filtered, dims, cfg.voxel_size)?)
}

/// Assemble a supervised training example: standardized reference volume,
/// filtered and normalized half-series pair, and (in wavelet mode) the
/// precomputed subband targets.
pub fn training_example(
    target: &Volume,
    even_raw: &TiltSeries,
    odd_raw: &TiltSeries,
    cfg: &RunConfig,
) -> Result<TrainingExample> {
    let target = target.standardized();
    let series = prepare_filtered(even_raw, cfg)?.normalized();
    let pair = prepare_filtered(odd_raw, cfg)?.normalized();
    let subbands = match cfg.mode {
        TrainMode::Pixel => None,
        TrainMode::Wavelet => Some(dwt3(&target, &wavelet_bank(cfg)?)),
    };
    Ok(TrainingExample {
        target,
        series,
        series_pair: Some(pair),
        subbands,
    })
}

pub fn write_volume(volume: &Volume, path: &Path) -> Result<()> {
    write_mrc(
        &MrcData {
            data: volume.data.clone(),
            voxel_size: volume.voxel_size,
        },
        path,
    )
    .with_context(|| format!("writing {}", path.display()))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let mrc = read_mrc(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Volume::new(mrc.data, mrc.voxel_size)?)
}

pub fn write_series(series: &TiltSeries, path: &Path) -> Result<()> {
    write_mrc(
        &MrcData {
            data: series.projections.clone(),
            voxel_size: series.detector.pixel_size.0,
        },
        path,
    )
    .with_context(|| format!("writing {}", path.display()))
}

/// Read a raw projection stack, pairing it with angles from a .tlt file.
pub fn read_series(stack_path: &Path, angles: &[f64]) -> Result<TiltSeries> {
    let mrc = read_mrc(stack_path).with_context(|| format!("reading {}", stack_path.display()))?;
    let s = mrc.data.shape();
    if s[0] != angles.len() {
        bail!(
            "stack {} has {} projections but {} angles were supplied",
            stack_path.display(),
            s[0],
            angles.len()
        );
    }
    let (h, w) = (s[1], s[2]);
    let mut detector = DetectorSpec::new(w, h);
    detector.pixel_size = (mrc.voxel_size, mrc.voxel_size);
    TiltSeries::new(mrc.data, angles.to_vec(), detector).map_err(|e| anyhow!(e))
}
