//! Quantitative evaluation: Fourier shell correlation, resolution at a
//! threshold, empty-region statistics and scalar image metrics.

use ndarray::Array3;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::MetricsError;
use crate::geometry::Volume;

/// Per-shell correlation values with pixel-size metadata.
#[derive(Debug, Clone)]
pub struct FscCurve {
    /// Shell center frequencies in cycles/pixel, ascending, <= 0.5.
    pub shell_centers: Vec<f64>,
    /// Correlations clamped to [-1, 1].
    pub values: Vec<f64>,
    /// Shells with no Fourier samples are reported as 0 and flagged here.
    pub empty: Vec<bool>,
    /// Pixel size in Angstrom.
    pub pixel_size: f64,
    /// Caveats attached by the producer (e.g. the self-FSC independence
    /// requirement).
    pub annotation: Option<String>,
}

/// Resolution read off an FSC curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Angstrom(f64),
    NotCrossed,
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Resolution::Angstrom(a) => write!(f, "{a:.2} A"),
            Resolution::NotCrossed => write!(f, "not crossed"),
        }
    }
}

/// Full complex 3-D FFT, separable along each axis.
pub(crate) fn fft3(data: &Array3<f64>) -> Array3<Complex<f64>> {
    let s = data.shape();
    let (nz, ny, nx) = (s[0], s[1], s[2]);
    let mut out = data.mapv(|v| Complex::new(v, 0.0));
    let mut planner = FftPlanner::new();
    // x axis (contiguous)
    let fft_x = planner.plan_fft_forward(nx);
    for mut lane in out.rows_mut() {
        let buf = lane.as_slice_mut().expect("standard layout");
        fft_x.process(buf);
    }
    // y axis
    let fft_y = planner.plan_fft_forward(ny);
    let mut buf = vec![Complex::new(0.0, 0.0); ny];
    for iz in 0..nz {
        for ix in 0..nx {
            for iy in 0..ny {
                buf[iy] = out[[iz, iy, ix]];
            }
            fft_y.process(&mut buf);
            for iy in 0..ny {
                out[[iz, iy, ix]] = buf[iy];
            }
        }
    }
    // z axis
    let fft_z = planner.plan_fft_forward(nz);
    let mut buf = vec![Complex::new(0.0, 0.0); nz];
    for iy in 0..ny {
        for ix in 0..nx {
            for iz in 0..nz {
                buf[iz] = out[[iz, iy, ix]];
            }
            fft_z.process(&mut buf);
            for iz in 0..nz {
                out[[iz, iy, ix]] = buf[iz];
            }
        }
    }
    out
}

fn check_dims(a: &Volume, b: &Volume) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Fourier shell correlation between two equally sized volumes.
///
/// Shells are unit-width bins in FFT index radius (relative to the
/// smallest dimension); shell k collects Re(sum F_A conj(F_B)) normalized
/// by the per-volume shell energies.
pub fn fsc(a: &Volume, b: &Volume, n_shells: usize) -> Result<FscCurve, MetricsError> {
    check_dims(a, b)?;
    if n_shells < 2 {
        return Err(MetricsError::TooFewShells(n_shells));
    }
    if a.data.iter().all(|&v| v == 0.0) || b.data.iter().all(|&v| v == 0.0) {
        return Err(MetricsError::ZeroVolume);
    }
    let fa = fft3(&a.data);
    let fb = fft3(&b.data);
    let s = a.data.shape();
    let (nz, ny, nx) = (s[0], s[1], s[2]);
    let n_min = nx.min(ny).min(nz);
    let mut cross = vec![0.0f64; n_shells];
    let mut ea = vec![0.0f64; n_shells];
    let mut eb = vec![0.0f64; n_shells];
    let signed = |k: usize, n: usize| -> f64 {
        if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    for iz in 0..nz {
        let fz = signed(iz, nz) / nz as f64;
        for iy in 0..ny {
            let fy = signed(iy, ny) / ny as f64;
            for ix in 0..nx {
                let fx = signed(ix, nx) / nx as f64;
                let freq = (fx * fx + fy * fy + fz * fz).sqrt();
                let shell = (freq * n_min as f64).round() as usize;
                if shell >= n_shells {
                    continue;
                }
                let va = fa[[iz, iy, ix]];
                let vb = fb[[iz, iy, ix]];
                cross[shell] += (va * vb.conj()).re;
                ea[shell] += va.norm_sqr();
                eb[shell] += vb.norm_sqr();
            }
        }
    }
    let mut values = Vec::with_capacity(n_shells);
    let mut empty = Vec::with_capacity(n_shells);
    let mut centers = Vec::with_capacity(n_shells);
    for k in 0..n_shells {
        centers.push(k as f64 / n_min as f64);
        let denom = (ea[k] * eb[k]).sqrt();
        if denom == 0.0 {
            values.push(0.0);
            empty.push(true);
        } else {
            values.push((cross[k] / denom).clamp(-1.0, 1.0));
            empty.push(false);
        }
    }
    Ok(FscCurve {
        shell_centers: centers,
        values,
        empty,
        pixel_size: a.voxel_size,
        annotation: None,
    })
}

/// Default shell count: one unit-radius shell per Fourier index.
pub fn default_shell_count(vol: &Volume) -> usize {
    let (nx, ny, nz) = vol.dims();
    (nx.min(ny).min(nz) / 2).max(2)
}

/// First frequency where the curve crosses below `threshold`, linearly
/// interpolated between shells and converted to Angstrom.
pub fn resolution_at(curve: &FscCurve, threshold: f64) -> Resolution {
    for i in 1..curve.values.len() {
        let (v0, v1) = (curve.values[i - 1], curve.values[i]);
        if v0 >= threshold && v1 < threshold {
            let f0 = curve.shell_centers[i - 1];
            let f1 = curve.shell_centers[i];
            let t = (v0 - threshold) / (v0 - v1);
            let f_cross = f0 + t * (f1 - f0);
            if f_cross <= 0.0 {
                return Resolution::NotCrossed;
            }
            return Resolution::Angstrom(curve.pixel_size / f_cross);
        }
    }
    Resolution::NotCrossed
}

/// FSC between reconstructions from independent noise realizations. Only
/// meaningful when the two halves stay statistically independent through
/// processing; the curve carries that caveat.
pub fn self_fsc(a: &Volume, b: &Volume, n_shells: usize) -> Result<FscCurve, MetricsError> {
    let mut curve = fsc(a, b, n_shells)?;
    curve.annotation = Some(
        "self-FSC: valid only if the two inputs come from independent noise realizations"
            .to_string(),
    );
    Ok(curve)
}

/// Axis-aligned box in voxel indices, half-open upper bounds.
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub z: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct RegionHistogram {
    /// Left edges plus the final right edge (n_bins + 1 values).
    pub bin_edges: Vec<f64>,
    /// Probability mass per bin; sums to 1.
    pub density: Vec<f64>,
    /// Standard deviation of the (globally normalized) region values.
    pub region_std: f64,
}

/// Histogram of a region of the globally standardized volume, after
/// subtracting the region mean.
pub fn empty_region_histogram(
    volume: &Volume,
    region: Region,
    n_bins: usize,
) -> Result<RegionHistogram, MetricsError> {
    let (nx, ny, nz) = volume.dims();
    let bad = region.x.0 >= region.x.1
        || region.y.0 >= region.y.1
        || region.z.0 >= region.z.1
        || region.x.1 > nx
        || region.y.1 > ny
        || region.z.1 > nz
        || n_bins == 0;
    if bad {
        return Err(MetricsError::BadRegion(format!("{region:?}")));
    }
    let norm = volume.standardized();
    let mut values = Vec::new();
    for iz in region.z.0..region.z.1 {
        for iy in region.y.0..region.y.1 {
            for ix in region.x.0..region.x.1 {
                values.push(norm.data[[iz, iy, ix]]);
            }
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= mean;
    }
    let std = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut counts = vec![0usize; n_bins];
    for &v in &values {
        let idx = (((v - lo) / span) * n_bins as f64).floor() as usize;
        counts[idx.min(n_bins - 1)] += 1;
    }
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|k| lo + span * k as f64 / n_bins as f64)
        .collect();
    Ok(RegionHistogram {
        bin_edges,
        density,
        region_std: std,
    })
}

pub fn mse(a: &Volume, b: &Volume) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n)
}

/// PSNR in dB relative to the reference volume's value range (`a` is the
/// reference).
pub fn psnr(a: &Volume, b: &Volume) -> Result<f64, MetricsError> {
    let err = mse(a, b)?;
    let lo = a.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / err).log10())
}

pub fn pearson(a: &Volume, b: &Volume) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let n = a.data.len() as f64;
    let ma = a.data.sum() / n;
    let mb = b.data.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricsError::ZeroVolume);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_volume(n: usize, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::new(
            Array3::from_shape_fn((n, n, n), |_| rng.gen_range(-1.0..1.0)),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn self_correlation_is_one() {
        let v = random_volume(16, 1);
        let curve = fsc(&v, &v, 8).unwrap();
        for (k, &val) in curve.values.iter().enumerate() {
            if !curve.empty[k] {
                assert!((val - 1.0).abs() < 1e-6, "shell {k}: {val}");
            }
        }
    }

    #[test]
    fn independent_noise_decorrelates() {
        let a = random_volume(64, 2);
        let b = random_volume(64, 3);
        let curve = fsc(&a, &b, 32).unwrap();
        let non_dc: Vec<f64> = curve.values[1..].to_vec();
        let mean_abs = non_dc.iter().map(|v| v.abs()).sum::<f64>() / non_dc.len() as f64;
        assert!(mean_abs < 0.1, "mean |FSC| {mean_abs}");
    }

    #[test]
    fn fsc_scale_invariance_and_symmetry() {
        let a = random_volume(16, 4);
        let b = random_volume(16, 5);
        let ab = fsc(&a, &b, 8).unwrap();
        let ba = fsc(&b, &a, 8).unwrap();
        for (x, y) in ab.values.iter().zip(ba.values.iter()) {
            assert_eq!(x, y);
        }
        let a2 = Volume::new(&a.data * 3.5, 1.0).unwrap();
        let b2 = Volume::new(&b.data * 0.2, 1.0).unwrap();
        let scaled = fsc(&a2, &b2, 8).unwrap();
        for (x, y) in ab.values.iter().zip(scaled.values.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn doubling_one_volume_keeps_unity() {
        let a = random_volume(16, 6);
        let b = Volume::new(&a.data * 2.0, 1.0).unwrap();
        let curve = fsc(&a, &b, 8).unwrap();
        for (k, &val) in curve.values.iter().enumerate() {
            if !curve.empty[k] {
                assert!((val - 1.0).abs() < 1e-6, "shell {k}: {val}");
            }
        }
    }

    #[test]
    fn fsc_rejects_mismatch_and_zero() {
        let a = random_volume(8, 7);
        let b = random_volume(16, 8);
        assert!(fsc(&a, &b, 4).is_err());
        let z = Volume::zeros(8, 8, 8, 1.0);
        assert!(fsc(&a, &z, 4).is_err());
    }

    #[test]
    fn resolution_not_crossed_for_flat_curve() {
        let curve = FscCurve {
            shell_centers: vec![0.0, 0.1, 0.2],
            values: vec![1.0, 1.0, 1.0],
            empty: vec![false; 3],
            pixel_size: 1.0,
            annotation: None,
        };
        assert_eq!(resolution_at(&curve, 0.5), Resolution::NotCrossed);
    }

    #[test]
    fn resolution_interpolated_crossing() {
        // step 1 -> 0 exactly between shells at 0.25 cyc/px, pixel 7.84 A
        let curve = FscCurve {
            shell_centers: vec![0.0, 0.2, 0.3],
            values: vec![1.0, 1.0, 0.0],
            empty: vec![false; 3],
            pixel_size: 7.84,
            annotation: None,
        };
        match resolution_at(&curve, 0.5) {
            Resolution::Angstrom(a) => assert!((a - 31.36).abs() < 1e-10, "{a}"),
            Resolution::NotCrossed => panic!("expected a crossing"),
        }
    }

    #[test]
    fn resolution_monotone_in_threshold() {
        let curve = FscCurve {
            shell_centers: (0..10).map(|k| k as f64 * 0.05).collect(),
            values: (0..10).map(|k| 1.0 - k as f64 * 0.1).collect(),
            empty: vec![false; 10],
            pixel_size: 2.0,
            annotation: None,
        };
        let r143 = match resolution_at(&curve, 0.143) {
            Resolution::Angstrom(a) => a,
            _ => panic!(),
        };
        let r500 = match resolution_at(&curve, 0.5) {
            Resolution::Angstrom(a) => a,
            _ => panic!(),
        };
        assert!(r143 < r500, "0.143 gives {r143}, 0.5 gives {r500}");
    }

    #[test]
    fn self_fsc_carries_annotation() {
        let a = random_volume(8, 9);
        let curve = self_fsc(&a, &a, 4).unwrap();
        assert!(curve.annotation.is_some());
    }

    #[test]
    fn histogram_sums_to_one_and_gaussian_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data = Array3::from_shape_fn((32, 32, 32), |_| {
            // Box-Muller standard normal
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let vol = Volume::new(data, 1.0).unwrap();
        let region = Region {
            x: (4, 28),
            y: (4, 28),
            z: (4, 28),
        };
        let hist = empty_region_histogram(&vol, region, 40).unwrap();
        let total: f64 = hist.density.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((hist.region_std - 1.0).abs() < 0.05, "std {}", hist.region_std);
    }

    #[test]
    fn histogram_constant_region() {
        let vol = Volume::zeros(8, 8, 8, 1.0);
        let region = Region {
            x: (0, 8),
            y: (0, 8),
            z: (0, 8),
        };
        let hist = empty_region_histogram(&vol, region, 5).unwrap();
        assert_eq!(hist.region_std, 0.0);
        // all mass in one bin
        assert!(hist.density.iter().filter(|&&d| d > 0.0).count() == 1);
    }

    #[test]
    fn histogram_rejects_degenerate_region() {
        let vol = Volume::zeros(8, 8, 8, 1.0);
        let region = Region {
            x: (3, 3),
            y: (0, 8),
            z: (0, 8),
        };
        assert!(empty_region_histogram(&vol, region, 5).is_err());
    }

    #[test]
    fn scalar_metrics() {
        let a = random_volume(8, 11);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let offset = Volume::new(&a.data + 1.0, 1.0).unwrap();
        assert!((mse(&a, &offset).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &offset).unwrap() - 1.0).abs() < 1e-12);
        let neg = Volume::new(&a.data * -1.0, 1.0).unwrap();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }
}
