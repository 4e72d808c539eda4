//! Flat `key = value` run configuration with a typed schema. Unknown keys
//! are rejected so typos fail loudly instead of silently using defaults.

use std::path::Path;

use crate::error::IoError;
use crate::filter::FilterWindow;
use crate::net::{LrSchedule, Pooling, TrainMode};
use crate::sim::{NoiseKind, PhantomKind};

/// Every tunable of the pipeline, with the documented defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // network architecture
    pub patch_size: usize,
    pub patch_spacing: f64,
    pub feat: usize,
    pub hidden: usize,
    pub depth: usize,
    pub pe_dim: usize,
    pub pooling: Pooling,
    pub mode: TrainMode,
    pub wavelet_family: String,
    // filtering
    pub filter: FilterWindow,
    pub pad_factor: usize,
    // training
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub tilt_drop_max: usize,
    pub n2n: bool,
    // simulation
    pub volume_size: usize,
    pub voxel_size: f64,
    pub phantom: PhantomKind,
    pub phantom_count: usize,
    pub tilt_min_deg: f64,
    pub tilt_max_deg: f64,
    pub tilt_step_deg: f64,
    pub noise: NoiseKind,
    pub noise_sigma: f64,
    pub noise_dose: f64,
    // execution
    pub seed: u64,
    pub threads: usize,
    pub chunk_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patch_size: 21,
            patch_spacing: 1.0,
            feat: 128,
            hidden: 128,
            depth: 5,
            pe_dim: 128,
            pooling: Pooling::Mean,
            mode: TrainMode::Pixel,
            wavelet_family: "cdf22".to_string(),
            filter: FilterWindow::CosineRamp,
            pad_factor: 2,
            steps: 5000,
            batch_size: 64,
            lr: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            tilt_drop_max: 30,
            n2n: true,
            volume_size: 64,
            voxel_size: 1.0,
            phantom: PhantomKind::Spheres,
            phantom_count: 12,
            tilt_min_deg: -60.0,
            tilt_max_deg: 60.0,
            tilt_step_deg: 3.0,
            noise: NoiseKind::Gaussian,
            noise_sigma: 1.0,
            noise_dose: 100.0,
            seed: 0,
            threads: 0,
            chunk_size: 4096,
        }
    }
}

fn bad(line: usize, msg: String) -> IoError {
    IoError::BadConfig { line, msg }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, IoError> {
    value
        .parse()
        .map_err(|_| bad(line, format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, IoError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(line, format!("'{key}' expects a boolean, got '{value}'"))),
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), IoError> {
        match key {
            "patch_size" => {
                let p: usize = parse_num(key, value, line)?;
                if p % 2 == 0 || p == 0 {
                    return Err(bad(line, format!("patch_size must be odd, got {p}")));
                }
                self.patch_size = p;
            }
            "patch_spacing" => {
                let s: f64 = parse_num(key, value, line)?;
                if s <= 0.0 {
                    return Err(bad(line, format!("patch_spacing must be positive, got {s}")));
                }
                self.patch_spacing = s;
            }
            "feat" => self.feat = parse_num(key, value, line)?,
            "hidden" => self.hidden = parse_num(key, value, line)?,
            "depth" => self.depth = parse_num(key, value, line)?,
            "pe_dim" => {
                let d: usize = parse_num(key, value, line)?;
                if d % 2 != 0 || d == 0 {
                    return Err(bad(line, format!("pe_dim must be even, got {d}")));
                }
                self.pe_dim = d;
            }
            "pooling" => {
                self.pooling = match value {
                    "mean" => Pooling::Mean,
                    "sum" => Pooling::Sum,
                    "max" => Pooling::Max,
                    _ => return Err(bad(line, format!("unknown pooling '{value}'"))),
                }
            }
            "mode" => {
                self.mode = match value {
                    "pixel" => TrainMode::Pixel,
                    "wavelet" => TrainMode::Wavelet,
                    _ => return Err(bad(line, format!("unknown mode '{value}'"))),
                }
            }
            "wavelet_family" => self.wavelet_family = value.to_string(),
            "filter" => {
                self.filter = match value {
                    "ramp" => FilterWindow::Ramp,
                    "cosine_ramp" => FilterWindow::CosineRamp,
                    _ => return Err(bad(line, format!("unknown filter '{value}'"))),
                }
            }
            "pad_factor" => {
                let p: usize = parse_num(key, value, line)?;
                if p < 1 {
                    return Err(bad(line, "pad_factor must be >= 1".to_string()));
                }
                self.pad_factor = p;
            }
            "steps" => self.steps = parse_num(key, value, line)?,
            "batch_size" => self.batch_size = parse_num(key, value, line)?,
            "lr" => self.lr = parse_num(key, value, line)?,
            "lr_schedule" => {
                self.lr_schedule = match value {
                    "constant" => LrSchedule::Constant,
                    "cosine" => LrSchedule::Cosine,
                    _ => return Err(bad(line, format!("unknown lr_schedule '{value}'"))),
                }
            }
            "tilt_drop_max" => self.tilt_drop_max = parse_num(key, value, line)?,
            "n2n" => self.n2n = parse_bool(key, value, line)?,
            "volume_size" => self.volume_size = parse_num(key, value, line)?,
            "voxel_size" => {
                let v: f64 = parse_num(key, value, line)?;
                if v <= 0.0 {
                    return Err(bad(line, format!("voxel_size must be positive, got {v}")));
                }
                self.voxel_size = v;
            }
            "phantom" => {
                self.phantom = match value {
                    "spheres" => PhantomKind::Spheres,
                    "shells" => PhantomKind::Shells,
                    "point_grid" => PhantomKind::PointGrid,
                    _ => return Err(bad(line, format!("unknown phantom '{value}'"))),
                }
            }
            "phantom_count" => self.phantom_count = parse_num(key, value, line)?,
            "tilt_min_deg" => self.tilt_min_deg = parse_num(key, value, line)?,
            "tilt_max_deg" => self.tilt_max_deg = parse_num(key, value, line)?,
            "tilt_step_deg" => {
                let s: f64 = parse_num(key, value, line)?;
                if s <= 0.0 {
                    return Err(bad(line, format!("tilt_step_deg must be positive, got {s}")));
                }
                self.tilt_step_deg = s;
            }
            "noise" => {
                self.noise = match value {
                    "none" => NoiseKind::None,
                    "gaussian" => NoiseKind::Gaussian,
                    "poisson" => NoiseKind::Poisson,
                    _ => return Err(bad(line, format!("unknown noise '{value}'"))),
                }
            }
            "noise_sigma" => self.noise_sigma = parse_num(key, value, line)?,
            "noise_dose" => self.noise_dose = parse_num(key, value, line)?,
            "seed" => self.seed = parse_num(key, value, line)?,
            "threads" => self.threads = parse_num(key, value, line)?,
            "chunk_size" => self.chunk_size = parse_num(key, value, line)?,
            _ => return Err(IoError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Tilt angles of the simulated acquisition, in radians.
    pub fn tilt_angles(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut a = self.tilt_min_deg;
        while a <= self.tilt_max_deg + 1e-9 {
            out.push(a.to_radians());
            a += self.tilt_step_deg;
        }
        out
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, IoError> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are
/// skipped, defaults fill everything not mentioned.
pub fn parse_config_str(text: &str) -> Result<RunConfig, IoError> {
    let mut config = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| bad(line, format!("expected 'key = value', got '{content}'")))?;
        config.set(key.trim(), value.trim(), line)?;
    }
    Ok(config)
}
