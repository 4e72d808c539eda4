//! Single-tilt-axis acquisition geometry: rotation matrices, sinusoid
//! trajectories, bilinear sampling and the patch crop operator.
//!
//! Conventions used throughout the crate:
//! * Volume data is stored as `(nz, ny, nx)` with x fastest in memory.
//! * Volume coordinates are voxel units with the origin at the volume
//!   center: voxel index `i` along x sits at `x = i - (nx - 1) / 2`.
//! * The tilt axis is y (the second coordinate). Detector coordinate `u`
//!   maps to projection columns, `v` to rows, both centered the same way.

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::GeometryError;

/// Dense 3-D scalar density grid with voxel-size metadata.
#[derive(Debug, Clone)]
pub struct Volume {
    /// Density values, shape `(nz, ny, nx)`.
    pub data: Array3<f64>,
    /// Voxel edge length in Angstrom.
    pub voxel_size: f64,
}

impl Volume {
    pub fn new(data: Array3<f64>, voxel_size: f64) -> Result<Self, GeometryError> {
        if voxel_size <= 0.0 {
            return Err(GeometryError::BadVoxelSize(voxel_size));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { data, voxel_size })
    }

    pub fn zeros(nx: usize, ny: usize, nz: usize, voxel_size: f64) -> Self {
        Self {
            data: Array3::zeros((nz, ny, nx)),
            voxel_size,
        }
    }

    /// `(nx, ny, nz)` voxel counts.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[2], s[1], s[0])
    }

    /// Trilinear interpolation at a centered coordinate `(x, y, z)` in voxel
    /// units. Points outside the grid contribute zero.
    pub fn sample_trilinear(&self, x: f64, y: f64, z: f64) -> f64 {
        let (nx, ny, nz) = self.dims();
        let fx = x + 0.5 * (nx as f64 - 1.0);
        let fy = y + 0.5 * (ny as f64 - 1.0);
        let fz = z + 0.5 * (nz as f64 - 1.0);
        trilinear_at_index(&self.data, fx, fy, fz)
    }

    /// Rescale to zero mean, unit standard deviation. A constant volume is
    /// shifted to zero and left there.
    pub fn standardized(&self) -> Volume {
        let n = self.data.len() as f64;
        let mean = self.data.sum() / n;
        let var = self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let scale = if std > 0.0 { 1.0 / std } else { 1.0 };
        Volume {
            data: self.data.mapv(|v| (v - mean) * scale),
            voxel_size: self.voxel_size,
        }
    }
}

/// Trilinear interpolation in raw index coordinates with zero padding.
pub(crate) fn trilinear_at_index(data: &Array3<f64>, fx: f64, fy: f64, fz: f64) -> f64 {
    let s = data.shape();
    let (nz, ny, nx) = (s[0] as isize, s[1] as isize, s[2] as isize);
    let x0 = fx.floor();
    let y0 = fy.floor();
    let z0 = fz.floor();
    let dx = fx - x0;
    let dy = fy - y0;
    let dz = fz - z0;
    let (x0, y0, z0) = (x0 as isize, y0 as isize, z0 as isize);
    let mut acc = 0.0;
    for (kz, wz) in [(z0, 1.0 - dz), (z0 + 1, dz)] {
        if kz < 0 || kz >= nz || wz == 0.0 {
            continue;
        }
        for (ky, wy) in [(y0, 1.0 - dy), (y0 + 1, dy)] {
            if ky < 0 || ky >= ny || wy == 0.0 {
                continue;
            }
            for (kx, wx) in [(x0, 1.0 - dx), (x0 + 1, dx)] {
                if kx < 0 || kx >= nx || wx == 0.0 {
                    continue;
                }
                acc += wz * wy * wx * data[[kz as usize, ky as usize, kx as usize]];
            }
        }
    }
    acc
}

/// Detector geometry: pixel counts, pixel pitch and the finite-pixel
/// sampling kernel width (a box, in pixels; 0 disables supersampling).
#[derive(Debug, Clone, Copy)]
pub struct DetectorSpec {
    pub width: usize,
    pub height: usize,
    pub pixel_size: (f64, f64),
    pub kernel_width: f64,
}

impl DetectorSpec {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixel_size: (1.0, 1.0),
            kernel_width: 0.0,
        }
    }
}

/// Stack of 2-D projections with per-projection tilt angles.
///
/// Angles are in radians, strictly inside (-pi/2, pi/2); they need not be
/// uniformly spaced nor sorted. `filtered` records whether ramp filtering
/// has been applied.
#[derive(Debug, Clone)]
pub struct TiltSeries {
    /// Shape `(n_tilts, height, width)`.
    pub projections: Array3<f64>,
    pub angles: Vec<f64>,
    pub detector: DetectorSpec,
    pub filtered: bool,
}

impl TiltSeries {
    pub fn new(
        projections: Array3<f64>,
        angles: Vec<f64>,
        detector: DetectorSpec,
    ) -> Result<Self, GeometryError> {
        if projections.shape()[0] != angles.len() || angles.is_empty() {
            return Err(GeometryError::AngleCountMismatch {
                projections: projections.shape()[0],
                angles: angles.len(),
            });
        }
        if angles
            .iter()
            .any(|a| !a.is_finite() || a.abs() >= std::f64::consts::FRAC_PI_2)
        {
            return Err(GeometryError::AngleOutOfRange);
        }
        Ok(Self {
            projections,
            angles,
            detector,
            filtered: false,
        })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Divide all projections by the global standard deviation.
    pub fn normalized(&self) -> TiltSeries {
        let n = self.projections.len() as f64;
        let mean = self.projections.sum() / n;
        let var = self
            .projections
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        let scale = if std > 0.0 { 1.0 / std } else { 1.0 };
        TiltSeries {
            projections: &self.projections * scale,
            angles: self.angles.clone(),
            detector: self.detector,
            filtered: self.filtered,
        }
    }

    /// Keep only the tilts at `keep` (indices into the series), in order.
    pub fn subset(&self, keep: &[usize]) -> TiltSeries {
        let h = self.projections.shape()[1];
        let w = self.projections.shape()[2];
        let mut projections = Array3::zeros((keep.len(), h, w));
        let mut angles = Vec::with_capacity(keep.len());
        for (out, &k) in keep.iter().enumerate() {
            projections
                .index_axis_mut(ndarray::Axis(0), out)
                .assign(&self.projections.index_axis(ndarray::Axis(0), k));
            angles.push(self.angles[k]);
        }
        TiltSeries {
            projections,
            angles,
            detector: self.detector,
            filtered: self.filtered,
        }
    }
}

/// Detector coordinates of one volume point at one tilt, centered pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub u: f64,
    pub v: f64,
}

/// Patch geometry: odd size P and sample spacing in detector pixels.
#[derive(Debug, Clone, Copy)]
pub struct PatchSpec {
    pub size: usize,
    pub spacing: f64,
}

impl PatchSpec {
    pub fn new(size: usize, spacing: f64) -> Result<Self, GeometryError> {
        if size % 2 == 0 || size == 0 {
            return Err(GeometryError::PatchSizeNotOdd(size));
        }
        if spacing <= 0.0 {
            return Err(GeometryError::BadSpacing(spacing));
        }
        Ok(Self { size, spacing })
    }
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            size: 21,
            spacing: 1.0,
        }
    }
}

/// The network input for one volume point: N filtered-projection crops.
///
/// Shape `(n_tilts, P, P)`, indexed `(tilt, y_offset, x_offset)`.
#[derive(Debug, Clone)]
pub struct PatchStack {
    pub data: Array3<f64>,
    pub angles: Vec<f64>,
}

impl PatchStack {
    pub fn n_tilts(&self) -> usize {
        self.angles.len()
    }

    pub fn patch_size(&self) -> usize {
        self.data.shape()[1]
    }
}

/// Rotation about the tilt (y) axis.
pub fn rotation_matrix(theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

/// The sinusoid a volume point traces on the detector as the stage tilts.
pub fn trajectory(r0: [f64; 3], theta: f64) -> TrajectoryPoint {
    let (s, c) = theta.sin_cos();
    TrajectoryPoint {
        u: r0[0] * c - r0[2] * s,
        v: r0[1],
    }
}

/// Bilinear interpolation of `image` at array-index coordinates
/// (`col` along the second axis, `row` along the first). Points strictly
/// outside the grid return 0; exact on grid nodes.
pub fn sample_bilinear(image: ArrayView2<f64>, col: f64, row: f64) -> f64 {
    let (nr, nc) = (image.nrows() as isize, image.ncols() as isize);
    let c0 = col.floor();
    let r0 = row.floor();
    let dc = col - c0;
    let dr = row - r0;
    let (c0, r0) = (c0 as isize, r0 as isize);
    let mut acc = 0.0;
    for (r, wr) in [(r0, 1.0 - dr), (r0 + 1, dr)] {
        if r < 0 || r >= nr || wr == 0.0 {
            continue;
        }
        for (c, wc) in [(c0, 1.0 - dc), (c0 + 1, dc)] {
            if c < 0 || c >= nc || wc == 0.0 {
                continue;
            }
            acc += wr * wc * image[[r as usize, c as usize]];
        }
    }
    acc
}

/// Centered detector coordinate -> array column index. Coordinate 0 sits at
/// `(width - 1) / 2`, half-integer for even widths.
pub fn detector_to_index(coord: f64, extent: usize) -> f64 {
    coord + 0.5 * (extent as f64 - 1.0)
}

/// Sample a projection at a trajectory point, converting from centered
/// detector coordinates to array indices.
pub fn sample_projection(projection: ArrayView2<f64>, point: TrajectoryPoint) -> f64 {
    let col = detector_to_index(point.u, projection.ncols());
    let row = detector_to_index(point.v, projection.nrows());
    sample_bilinear(projection, col, row)
}

/// Crop a P x P patch of a filtered projection around `trajectory(r0, theta)`.
///
/// Element `(j, i)` (row = y offset, column = x offset, both running over
/// `-(P/2)..=P/2`) samples the projection at the trajectory point minus
/// `spacing * (i, j)`; the patch center is the trajectory point itself.
pub fn extract_patch(
    projection: ArrayView2<f64>,
    r0: [f64; 3],
    theta: f64,
    spec: PatchSpec,
) -> Array2<f64> {
    let center = trajectory(r0, theta);
    let p = spec.size;
    let half = (p / 2) as isize;
    let mut out = Array2::zeros((p, p));
    for j in -half..=half {
        for i in -half..=half {
            let point = TrajectoryPoint {
                u: center.u - spec.spacing * i as f64,
                v: center.v - spec.spacing * j as f64,
            };
            out[[(j + half) as usize, (i + half) as usize]] = sample_projection(projection, point);
        }
    }
    out
}

/// Crop one patch per tilt, in series order. The series must be filtered:
/// the network is trained on filtered inputs and raw ones signal pipeline
/// misuse.
pub fn extract_patch_stack(
    series: &TiltSeries,
    r0: [f64; 3],
    spec: PatchSpec,
) -> Result<PatchStack, GeometryError> {
    if !series.filtered {
        return Err(GeometryError::UnfilteredInput);
    }
    let p = spec.size;
    let mut data = Array3::zeros((series.len(), p, p));
    for (k, &theta) in series.angles.iter().enumerate() {
        let patch = extract_patch(
            series.projections.index_axis(ndarray::Axis(0), k),
            r0,
            theta,
            spec,
        );
        data.index_axis_mut(ndarray::Axis(0), k).assign(&patch);
    }
    Ok(PatchStack {
        data,
        angles: series.angles.clone(),
    })
}
