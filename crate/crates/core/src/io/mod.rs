//! Bit-exact file I/O: a practical subset of the MRC2014 map format,
//! one-angle-per-line tilt files, versioned model checkpoints, and flat
//! key = value run configuration.

pub mod checkpoint;
pub mod config;
pub mod mrc;
pub mod tlt;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use mrc::{read_mrc, write_mrc, MrcData};
pub use tlt::{read_tlt, write_tlt};
