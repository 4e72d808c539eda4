//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("voxel size must be positive, got {0}")]
    BadVoxelSize(f64),
    #[error("volume contains non-finite values")]
    NonFinite,
    #[error("projection count {projections} does not match angle count {angles}")]
    AngleCountMismatch { projections: usize, angles: usize },
    #[error("tilt angles must be finite and strictly inside (-pi/2, pi/2)")]
    AngleOutOfRange,
    #[error("patch size must be odd and positive, got {0}")]
    PatchSizeNotOdd(usize),
    #[error("patch spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("tilt-series must be filtered before patch extraction")]
    UnfilteredInput,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ray step must be positive, got {0}")]
    BadStep(f64),
    #[error("angle list is empty")]
    NoAngles,
    #[error("volume contains non-finite values")]
    NonFiniteVolume,
    #[error("poisson noise requires non-negative signal (min value {0})")]
    NegativeSignal(f64),
    #[error("poisson noise requires dose > 0, got {0}")]
    BadDose(f64),
    #[error("gaussian noise requires sigma >= 0, got {0}")]
    BadSigma(f64),
    #[error("phantom axis size {0} too small for {1} phantoms (need >= 8)")]
    PhantomTooSmall(usize, &'static str),
    #[error("phantom count must be >= 1")]
    PhantomCountZero,
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("tilt-series is already filtered")]
    AlreadyFiltered,
    #[error("backprojection requires a filtered tilt-series")]
    NotFiltered,
    #[error("pad factor must be >= 1, got {0}")]
    BadPadFactor(usize),
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("positional encoding dimension must be even, got {0}")]
    OddEncodingDim(usize),
    #[error("patch stack has no tilts")]
    EmptyStack,
    #[error("patch size {got} does not match network configuration {expected}")]
    PatchSizeMismatch { got: usize, expected: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("non-finite loss at step {step} (value {value})")]
    Diverged { step: usize, value: f64 },
    #[error("tilt_drop_max {drop} must be below the tilt count {n}")]
    DropTooLarge { drop: usize, n: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("network output dimension {0} is not valid for this mode")]
    BadOutDim(usize),
    #[error("wavelet-mode training requires precomputed subband targets")]
    MissingSubbands,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("filter bank failed the perfect-reconstruction check (max error {0})")]
    NotPerfectReconstruction(f64),
    #[error("analysis filter support {support} exceeds patch size {patch}")]
    SupportExceedsPatch { support: usize, patch: usize },
    #[error("subband shapes are inconsistent")]
    ShapeMismatch,
    #[error("wavelet-mode reconstruction requires even grid dimensions, got {0:?}")]
    OddGrid((usize, usize, usize)),
    #[error("expected a {expected}-output network, got out_dim {got}")]
    WrongMode { expected: usize, got: usize },
    #[error("unknown wavelet family '{0}'")]
    UnknownFamily(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("volume dimensions differ: {0:?} vs {1:?}")]
    DimMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("all-zero volume: correlation normalization undefined")]
    ZeroVolume,
    #[error("need at least 2 shells, got {0}")]
    TooFewShells(usize),
    #[error("region {0} lies outside the volume or is degenerate")]
    BadRegion(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad MRC map stamp {0:?}")]
    BadMapStamp([u8; 4]),
    #[error("unsupported MRC mode {0} (supported: 0, 1, 2, 6)")]
    UnsupportedMode(i32),
    #[error("MRC payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid MRC dimensions {0:?}")]
    BadDims((i32, i32, i32)),
    #[error("line {line}: cannot parse '{text}' as an angle")]
    BadAngleLine { line: usize, text: String },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint corrupted: {0}")]
    Corrupt(String),
    #[error("config line {line}: {msg}")]
    BadConfig { line: usize, msg: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
}
