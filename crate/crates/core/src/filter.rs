//! 1-D frequency-domain filtering of projections along the x axis and the
//! classical filtered backprojection baseline.

use ndarray::{Array3, Axis};
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::FilterError;
use crate::geometry::{sample_projection, trajectory, TiltSeries, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterWindow {
    Ramp,
    CosineRamp,
}

/// Frequency response at `f` cycles/sample (|f| <= 0.5).
///
/// ramp: H(f) = |f|; cosine ramp: H(f) = |f| cos(pi f / (2 f_N)) with
/// f_N = 0.5, zero beyond Nyquist. Unit DC slope; the absolute output
/// scale is convention-dependent and absorbed downstream.
pub fn filter_gain(window: FilterWindow, f: f64) -> f64 {
    let a = f.abs();
    if a > 0.5 {
        return 0.0;
    }
    match window {
        FilterWindow::Ramp => a,
        FilterWindow::CosineRamp => a * (std::f64::consts::PI * a).cos(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FilterSpec {
    pub window: FilterWindow,
    /// Zero-pad multiple before the FFT; >= 2 suppresses circular wrap.
    pub pad_factor: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            window: FilterWindow::CosineRamp,
            pad_factor: 2,
        }
    }
}

/// Convolve each projection row with the chosen high-pass filter via a
/// zero-padded FFT. Rows are mean-subtracted first; the filter kills DC
/// anyway and this keeps the padded boundary from leaking the mean back
/// in as ringing.
pub fn filter_tilt_series(
    series: &TiltSeries,
    spec: &FilterSpec,
) -> Result<TiltSeries, FilterError> {
    if series.filtered {
        return Err(FilterError::AlreadyFiltered);
    }
    if spec.pad_factor < 1 {
        return Err(FilterError::BadPadFactor(spec.pad_factor));
    }
    let width = series.projections.shape()[2];
    let padded = width * spec.pad_factor;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(padded);
    let ifft = planner.plan_fft_inverse(padded);
    let gains: Vec<f64> = (0..padded)
        .map(|k| {
            let f = if k <= padded / 2 {
                k as f64 / padded as f64
            } else {
                k as f64 / padded as f64 - 1.0
            };
            filter_gain(spec.window, f)
        })
        .collect();

    let mut out = series.clone();
    out.projections
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each(|mut proj| {
            let mut buf = vec![Complex::new(0.0, 0.0); padded];
            for mut row in proj.rows_mut() {
                let mean = row.sum() / width as f64;
                for (b, &v) in buf.iter_mut().zip(row.iter()) {
                    *b = Complex::new(v - mean, 0.0);
                }
                for b in buf.iter_mut().skip(width) {
                    *b = Complex::new(0.0, 0.0);
                }
                fft.process(&mut buf);
                for (b, &g) in buf.iter_mut().zip(gains.iter()) {
                    *b *= g;
                }
                ifft.process(&mut buf);
                let norm = 1.0 / padded as f64;
                for (v, b) in row.iter_mut().zip(buf.iter()) {
                    *v = b.re * norm;
                }
            }
        });
    out.filtered = true;
    Ok(out)
}

/// Sum of filtered projections along each voxel's trajectory with bilinear
/// sampling. `weights` overrides the uniform pi/N angular quadrature.
pub fn backproject_weighted(
    filtered: &TiltSeries,
    out_dims: (usize, usize, usize),
    voxel_size: f64,
    weights: Option<&[f64]>,
) -> Result<Volume, FilterError> {
    if !filtered.filtered {
        return Err(FilterError::NotFiltered);
    }
    let n = filtered.len();
    let uniform = std::f64::consts::PI / n as f64;
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![uniform; n],
    };
    let (nx, ny, nz) = out_dims;
    let mut data = Array3::zeros((nz, ny, nx));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(iz, mut slab)| {
            let z = iz as f64 - 0.5 * (nz as f64 - 1.0);
            for iy in 0..ny {
                let y = iy as f64 - 0.5 * (ny as f64 - 1.0);
                for ix in 0..nx {
                    let x = ix as f64 - 0.5 * (nx as f64 - 1.0);
                    let mut acc = 0.0;
                    for (k, &theta) in filtered.angles.iter().enumerate() {
                        let point = trajectory([x, y, z], theta);
                        acc += w[k]
                            * sample_projection(
                                filtered.projections.index_axis(Axis(0), k),
                                point,
                            );
                    }
                    slab[[iy, ix]] = acc;
                }
            }
        });
    Ok(Volume { data, voxel_size })
}

pub fn backproject(
    filtered: &TiltSeries,
    out_dims: (usize, usize, usize),
    voxel_size: f64,
) -> Result<Volume, FilterError> {
    backproject_weighted(filtered, out_dims, voxel_size, None)
}

/// Filtered backprojection: filter, then backproject.
pub fn fbp(
    series: &TiltSeries,
    spec: &FilterSpec,
    out_dims: (usize, usize, usize),
    voxel_size: f64,
) -> Result<Volume, FilterError> {
    let filtered = filter_tilt_series(series, spec)?;
    backproject(&filtered, out_dims, voxel_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DetectorSpec;
    use crate::sim::{make_phantom, project, PhantomKind, PhantomSpec};
    use ndarray::Array3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn series_from(projections: Array3<f64>, angles: Vec<f64>) -> TiltSeries {
        let h = projections.shape()[1];
        let w = projections.shape()[2];
        TiltSeries::new(projections, angles, DetectorSpec::new(w, h)).unwrap()
    }

    #[test]
    fn constant_projection_is_annihilated() {
        let series = series_from(Array3::from_elem((1, 8, 32), 5.0), vec![0.0]);
        let spec = FilterSpec::default();
        let out = filter_tilt_series(&series, &spec).unwrap();
        let max = out.projections.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max < 1e-8 * 5.0, "residual {max}");
    }

    #[test]
    fn single_frequency_gain_matches_transfer_function() {
        // pad_factor 1 makes the convolution circular, so a bin-aligned
        // cosine is an exact eigenvector with eigenvalue H(f0)
        let w = 64usize;
        let k0 = 5usize;
        let f0 = k0 as f64 / w as f64;
        let row: Vec<f64> = (0..w)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64).cos())
            .collect();
        let mut proj = Array3::zeros((1, 1, w));
        for (i, &v) in row.iter().enumerate() {
            proj[[0, 0, i]] = v;
        }
        let series = series_from(proj, vec![0.0]);
        for window in [FilterWindow::Ramp, FilterWindow::CosineRamp] {
            let spec = FilterSpec { window, pad_factor: 1 };
            let out = filter_tilt_series(&series, &spec).unwrap();
            let gain = filter_gain(window, f0);
            for (i, &v) in row.iter().enumerate() {
                assert!(
                    (out.projections[[0, 0, i]] - gain * v).abs() < 1e-6,
                    "window {window:?} sample {i}"
                );
            }
        }
    }

    #[test]
    fn cosine_ramp_zero_at_nyquist() {
        assert!(filter_gain(FilterWindow::CosineRamp, 0.5).abs() < 1e-15);
        // alternating row is the Nyquist eigenvector under circular filtering
        let w = 32usize;
        let mut proj = Array3::zeros((1, 1, w));
        for i in 0..w {
            proj[[0, 0, i]] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let series = series_from(proj, vec![0.0]);
        let spec = FilterSpec {
            window: FilterWindow::CosineRamp,
            pad_factor: 1,
        };
        let out = filter_tilt_series(&series, &spec).unwrap();
        let max = out.projections.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max < 1e-12);
    }

    #[test]
    fn refiltering_is_rejected() {
        let series = series_from(Array3::zeros((1, 4, 16)), vec![0.0]);
        let spec = FilterSpec::default();
        let once = filter_tilt_series(&series, &spec).unwrap();
        assert!(filter_tilt_series(&once, &spec).is_err());
    }

    #[test]
    fn filtering_commutes_with_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let proj = Array3::from_shape_fn((1, 6, 24), |_| rng.gen_range(-1.0..1.0));
        let series = series_from(proj.clone(), vec![0.0]);
        let spec = FilterSpec::default();
        let filtered = filter_tilt_series(&series, &spec).unwrap();
        // permute rows, filter, and compare against permuted filtered rows
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut permuted = Array3::zeros((1, 6, 24));
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..24 {
                permuted[[0, dst, c]] = proj[[0, src, c]];
            }
        }
        let filtered_perm = filter_tilt_series(&series_from(permuted, vec![0.0]), &spec).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..24 {
                assert_eq!(
                    filtered_perm.projections[[0, dst, c]],
                    filtered.projections[[0, src, c]]
                );
            }
        }
    }

    #[test]
    fn backprojection_rejects_unfiltered() {
        let series = series_from(Array3::zeros((1, 4, 4)), vec![0.0]);
        assert!(backproject(&series, (4, 4, 4), 1.0).is_err());
    }

    #[test]
    fn single_zero_tilt_smears_along_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let proj = Array3::from_shape_fn((1, 9, 9), |_| rng.gen_range(-1.0..1.0));
        let mut series = series_from(proj, vec![0.0]);
        series.filtered = true;
        let vol = backproject(&series, (9, 9, 9), 1.0).unwrap();
        for iy in 0..9 {
            for ix in 0..9 {
                let v0 = vol.data[[0, iy, ix]];
                for iz in 1..9 {
                    assert!((vol.data[[iz, iy, ix]] - v0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_constant_tilts_sum() {
        let c = 1.75;
        let mut series = series_from(Array3::from_elem((2, 9, 9), c), vec![0.0, 0.0]);
        series.filtered = true;
        let vol = backproject(&series, (9, 9, 9), 1.0).unwrap();
        let w = std::f64::consts::PI / 2.0;
        for &v in vol.data.iter() {
            assert!((v - 2.0 * w * c).abs() < 1e-12);
        }
    }

    #[test]
    fn point_source_fbp_peaks_at_source() {
        let n = 33;
        let mut data = Array3::zeros((n, n, n));
        let (ix, iy, iz) = (20usize, 16usize, 12usize);
        data[[iz, iy, ix]] = 1.0;
        let vol = Volume::new(data, 1.0).unwrap();
        let angles: Vec<f64> = (0..90)
            .map(|k| (-89.0 + 178.0 * k as f64 / 89.0).to_radians())
            .collect();
        let det = DetectorSpec::new(48, 33);
        let series = project(&vol, &angles, det, 0.25).unwrap();
        let recon = fbp(
            &series,
            &FilterSpec {
                window: FilterWindow::Ramp,
                pad_factor: 2,
            },
            (n, n, n),
            1.0,
        )
        .unwrap();
        let mut best = (0, 0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for (idx, &v) in recon.data.indexed_iter() {
            if v > best_val {
                best_val = v;
                best = idx;
            }
        }
        assert_eq!(best, (iz, iy, ix));
    }

    #[test]
    fn fbp_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Array3::from_shape_fn((3, 8, 8), |_| rng.gen_range(-1.0..1.0));
        let b = Array3::from_shape_fn((3, 8, 8), |_| rng.gen_range(-1.0..1.0));
        let angles = vec![-0.4, 0.1, 0.6];
        let (ca, cb) = (0.7, -1.3);
        let spec = FilterSpec::default();
        let va = fbp(&series_from(a.clone(), angles.clone()), &spec, (8, 8, 8), 1.0).unwrap();
        let vb = fbp(&series_from(b.clone(), angles.clone()), &spec, (8, 8, 8), 1.0).unwrap();
        let combined = &a * ca + &b * cb;
        let vc = fbp(&series_from(combined, angles), &spec, (8, 8, 8), 1.0).unwrap();
        let expect = &va.data * ca + &vb.data * cb;
        let num = (&vc.data - &expect).mapv(f64::abs).sum();
        let den = expect.mapv(f64::abs).sum().max(1e-30);
        assert!(num / den < 1e-6, "relative error {}", num / den);
    }

    #[test]
    fn zero_series_gives_zero_volume() {
        let series = series_from(Array3::zeros((5, 8, 8)), vec![-0.2, -0.1, 0.0, 0.1, 0.2]);
        let vol = fbp(&series, &FilterSpec::default(), (8, 8, 8), 1.0).unwrap();
        assert!(vol.data.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn missing_wedge_lowers_correlation() {
        let spec = PhantomSpec {
            kind: PhantomKind::Spheres,
            size: (32, 32, 32),
            count: 4,
            seed: 13,
            density_range: (0.5, 1.0),
        };
        let phantom = make_phantom(&spec).unwrap();
        let det = DetectorSpec::new(48, 32);
        let full: Vec<f64> = (0..60)
            .map(|k| (-85.0 + 170.0 * k as f64 / 59.0).to_radians())
            .collect();
        let wedge: Vec<f64> = (0..41).map(|k| (-60.0 + 3.0 * k as f64).to_radians()).collect();
        let fspec = FilterSpec::default();
        let corr = |angles: &[f64]| {
            let series = project(&phantom, angles, det, 0.5).unwrap();
            let recon = fbp(&series, &fspec, (32, 32, 32), 1.0).unwrap();
            crate::metrics::pearson(&recon, &phantom).unwrap()
        };
        let c_full = corr(&full);
        let c_wedge = corr(&wedge);
        assert!(c_full > 0.85, "full-range correlation {c_full}");
        assert!(c_wedge < c_full, "wedge {c_wedge} vs full {c_full}");
    }
}
