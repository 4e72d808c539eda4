//! Tilt-angle files: one angle in degrees per line, blank lines ignored.

use std::path::Path;

use crate::error::IoError;

pub fn read_tlt(path: &Path) -> Result<Vec<f64>, IoError> {
    parse_tlt(&std::fs::read_to_string(path)?)
}

pub fn parse_tlt(text: &str) -> Result<Vec<f64>, IoError> {
    let mut angles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let degrees: f64 = trimmed.parse().map_err(|_| IoError::BadAngleLine {
            line: i + 1,
            text: trimmed.to_string(),
        })?;
        angles.push(degrees.to_radians());
    }
    Ok(angles)
}

/// Write angles (radians) as degrees, one per line.
pub fn write_tlt(angles: &[f64], path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    for a in angles {
        out.push_str(&format!("{:.6}\n", a.to_degrees()));
    }
    std::fs::write(path, out)?;
    Ok(())
}
