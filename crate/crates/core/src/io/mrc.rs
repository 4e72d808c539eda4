//! MRC2014 subset: mode-2 (32-bit float) writer; mode 0/1/2/6 reader with
//! byte-order normalization via the machine stamp. Extended headers are
//! skipped, never interpreted.

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use ndarray::Array3;
use std::path::Path;

use crate::error::IoError;

const HEADER_LEN: usize = 1024;
const MAP_STAMP_OFFSET: usize = 208;
const MACHINE_STAMP_OFFSET: usize = 212;

/// Raw contents of an MRC file: the payload in x-fastest order plus the
/// voxel size recovered from the cell/grid fields. Whether the z axis
/// means sections-of-a-volume or projections-of-a-stack is up to the
/// caller.
#[derive(Debug, Clone)]
pub struct MrcData {
    /// Shape `(nz, ny, nx)`.
    pub data: Array3<f64>,
    /// Cell length per grid step along x, in Angstrom (1.0 if absent).
    pub voxel_size: f64,
}

fn stats(data: &Array3<f64>) -> (f32, f32, f32, f32) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in data.iter() {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let n = data.len() as f64;
    let mean = sum / n;
    let rms = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (min as f32, max as f32, mean as f32, rms as f32)
}

/// Write a mode-2 little-endian file: exactly 1024 + 4·n bytes.
pub fn write_mrc(data: &MrcData, path: &Path) -> Result<(), IoError> {
    let s = data.data.shape();
    let (nz, ny, nx) = (s[0], s[1], s[2]);
    let mut header = vec![0u8; HEADER_LEN];
    let put_i32 = |buf: &mut [u8], off: usize, v: i32| LittleEndian::write_i32(&mut buf[off..off + 4], v);
    let put_f32 = |buf: &mut [u8], off: usize, v: f32| LittleEndian::write_f32(&mut buf[off..off + 4], v);
    put_i32(&mut header, 0, nx as i32);
    put_i32(&mut header, 4, ny as i32);
    put_i32(&mut header, 8, nz as i32);
    put_i32(&mut header, 12, 2); // mode 2: 32-bit float
    // nxstart/nystart/nzstart stay 0
    put_i32(&mut header, 28, nx as i32); // mx
    put_i32(&mut header, 32, ny as i32);
    put_i32(&mut header, 36, nz as i32);
    put_f32(&mut header, 40, (nx as f64 * data.voxel_size) as f32); // xlen
    put_f32(&mut header, 44, (ny as f64 * data.voxel_size) as f32);
    put_f32(&mut header, 48, (nz as f64 * data.voxel_size) as f32);
    put_f32(&mut header, 52, 90.0); // cell angles
    put_f32(&mut header, 56, 90.0);
    put_f32(&mut header, 60, 90.0);
    put_i32(&mut header, 64, 1); // mapc/mapr/maps: x, y, z
    put_i32(&mut header, 68, 2);
    put_i32(&mut header, 72, 3);
    let (dmin, dmax, dmean, rms) = stats(&data.data);
    put_f32(&mut header, 76, dmin);
    put_f32(&mut header, 80, dmax);
    put_f32(&mut header, 84, dmean);
    put_i32(&mut header, 88, 1); // ispg
    put_i32(&mut header, 92, 0); // nsymbt: no extended header
    header[MAP_STAMP_OFFSET..MAP_STAMP_OFFSET + 4].copy_from_slice(b"MAP ");
    header[MACHINE_STAMP_OFFSET..MACHINE_STAMP_OFFSET + 4].copy_from_slice(&[0x44, 0x44, 0, 0]);
    put_f32(&mut header, 216, rms);

    let mut payload = vec![0u8; data.data.len() * 4];
    for (chunk, &v) in payload.chunks_exact_mut(4).zip(data.data.iter()) {
        LittleEndian::write_f32(chunk, v as f32);
    }
    header.extend_from_slice(&payload);
    std::fs::write(path, header)?;
    Ok(())
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn i32(self, buf: &[u8], off: usize) -> i32 {
        match self {
            Endian::Little => LittleEndian::read_i32(&buf[off..off + 4]),
            Endian::Big => BigEndian::read_i32(&buf[off..off + 4]),
        }
    }

    fn f32(self, buf: &[u8], off: usize) -> f32 {
        match self {
            Endian::Little => LittleEndian::read_f32(&buf[off..off + 4]),
            Endian::Big => BigEndian::read_f32(&buf[off..off + 4]),
        }
    }
}

fn mode_bytes(mode: i32) -> Result<usize, IoError> {
    match mode {
        0 => Ok(1), // signed 8-bit
        1 => Ok(2), // signed 16-bit
        2 => Ok(4), // 32-bit float
        6 => Ok(2), // unsigned 16-bit
        other => Err(IoError::UnsupportedMode(other)),
    }
}

pub fn read_mrc(path: &Path) -> Result<MrcData, IoError> {
    let bytes = std::fs::read(path)?;
    read_mrc_bytes(&bytes)
}

/// Parse an in-memory MRC image; the entry point for the fuzz tests.
pub fn read_mrc_bytes(bytes: &[u8]) -> Result<MrcData, IoError> {
    if bytes.len() < HEADER_LEN {
        return Err(IoError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let map = &bytes[MAP_STAMP_OFFSET..MAP_STAMP_OFFSET + 4];
    if map != b"MAP " {
        return Err(IoError::BadMapStamp([map[0], map[1], map[2], map[3]]));
    }
    let stamp = &bytes[MACHINE_STAMP_OFFSET..MACHINE_STAMP_OFFSET + 4];
    let endian = match stamp[0] {
        0x44 => Endian::Little,
        0x11 => Endian::Big,
        _ => return Err(IoError::BadMapStamp([stamp[0], stamp[1], stamp[2], stamp[3]])),
    };
    let nx = endian.i32(bytes, 0);
    let ny = endian.i32(bytes, 4);
    let nz = endian.i32(bytes, 8);
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(IoError::BadDims((nx, ny, nz)));
    }
    let mode = endian.i32(bytes, 12);
    let bpv = mode_bytes(mode)?;
    let nsymbt = endian.i32(bytes, 92);
    if nsymbt < 0 {
        return Err(IoError::Corrupt(format!(
            "negative extended header size {nsymbt}"
        )));
    }
    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
    let n_voxels = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .ok_or(IoError::BadDims((nx as i32, ny as i32, nz as i32)))?;
    let data_start = HEADER_LEN
        .checked_add(nsymbt as usize)
        .ok_or(IoError::Corrupt("extended header overflow".into()))?;
    let expected = data_start
        .checked_add(n_voxels.checked_mul(bpv).ok_or(IoError::BadDims((
            nx as i32, ny as i32, nz as i32,
        )))?)
        .ok_or(IoError::Corrupt("payload size overflow".into()))?;
    if bytes.len() < expected {
        return Err(IoError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[data_start..expected];
    let mut values = Vec::with_capacity(n_voxels);
    match mode {
        0 => values.extend(payload.iter().map(|&b| b as i8 as f64)),
        1 => {
            for c in payload.chunks_exact(2) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_i16(c),
                    Endian::Big => BigEndian::read_i16(c),
                };
                values.push(v as f64);
            }
        }
        2 => {
            for c in payload.chunks_exact(4) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_f32(c),
                    Endian::Big => BigEndian::read_f32(c),
                };
                values.push(v as f64);
            }
        }
        6 => {
            for c in payload.chunks_exact(2) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_u16(c),
                    Endian::Big => BigEndian::read_u16(c),
                };
                values.push(v as f64);
            }
        }
        _ => unreachable!("mode checked above"),
    }
    let data = Array3::from_shape_vec((nz, ny, nx), values)
        .map_err(|e| IoError::Corrupt(e.to_string()))?;
    let mx = endian.i32(bytes, 28);
    let xlen = endian.f32(bytes, 40);
    let voxel_size = if mx > 0 && xlen.is_finite() && xlen > 0.0 {
        xlen as f64 / mx as f64
    } else {
        1.0
    };
    Ok(MrcData { data, voxel_size })
}
