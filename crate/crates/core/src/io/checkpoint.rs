//! Versioned model checkpoints: magic, format version, the architecture
//! block, then every weight tensor in declared order with its shape.
//! Weights are stored as little-endian 32-bit floats; training runs at 64
//! bits internally and rounds on save (the documented precision boundary).

use byteorder::{ByteOrder, LittleEndian};
use ndarray::Array2;
use std::path::Path;

use crate::error::IoError;
use crate::net::{MlpParams, NetConfig, Pooling, SetMlpParams, SliceMlpParams};

const MAGIC: &[u8; 8] = b"TOMONET\0";
const VERSION: u32 = 1;

fn pooling_tag(p: Pooling) -> u8 {
    match p {
        Pooling::Mean => 0,
        Pooling::Sum => 1,
        Pooling::Max => 2,
    }
}

fn pooling_from_tag(tag: u8) -> Result<Pooling, IoError> {
    match tag {
        0 => Ok(Pooling::Mean),
        1 => Ok(Pooling::Sum),
        2 => Ok(Pooling::Max),
        other => Err(IoError::Corrupt(format!("unknown pooling tag {other}"))),
    }
}

/// Serialize parameters plus the wavelet family tag the model was (or
/// would be) trained against; the tag is carried even in pixel mode so a
/// checkpoint fully describes its reconstruction pipeline.
pub fn save_checkpoint(
    params: &SliceMlpParams,
    wavelet_family: &str,
    path: &Path,
) -> Result<(), IoError> {
    let cfg = &params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, cfg.patch as u32);
    push_u32(&mut buf, cfg.feat as u32);
    push_u32(&mut buf, cfg.hidden as u32);
    push_u32(&mut buf, cfg.depth as u32);
    push_u32(&mut buf, cfg.out_dim as u32);
    push_u32(&mut buf, cfg.pe_dim as u32);
    buf.push(pooling_tag(cfg.pooling));
    let family = wavelet_family.as_bytes();
    push_u32(&mut buf, family.len() as u32);
    buf.extend_from_slice(family);
    let tensors = params.tensors();
    push_u32(&mut buf, tensors.len() as u32);
    for t in tensors {
        push_u32(&mut buf, t.nrows() as u32);
        push_u32(&mut buf, t.ncols() as u32);
        for &v in t.iter() {
            let mut le = [0u8; 4];
            LittleEndian::write_f32(&mut le, v as f32);
            buf.extend_from_slice(&le);
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(SliceMlpParams, String), IoError> {
    let bytes = std::fs::read(path)?;
    load_checkpoint_bytes(&bytes)
}

/// Parse an in-memory checkpoint; the entry point for the fuzz tests.
pub fn load_checkpoint_bytes(bytes: &[u8]) -> Result<(SliceMlpParams, String), IoError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(IoError::BadVersion(version));
    }
    let patch = cur.u32()? as usize;
    let feat = cur.u32()? as usize;
    let hidden = cur.u32()? as usize;
    let depth = cur.u32()? as usize;
    let out_dim = cur.u32()? as usize;
    let pe_dim = cur.u32()? as usize;
    let pooling = pooling_from_tag(cur.u8()?)?;
    let family_len = cur.u32()? as usize;
    if family_len > 64 {
        return Err(IoError::Corrupt(format!(
            "implausible wavelet tag length {family_len}"
        )));
    }
    let family = String::from_utf8(cur.take(family_len)?.to_vec())
        .map_err(|e| IoError::Corrupt(e.to_string()))?;
    // plausibility bounds keep a corrupted architecture block from
    // driving huge allocations before the shape chain is ever compared
    if patch == 0
        || patch > 1024
        || feat == 0
        || feat > 65536
        || hidden == 0
        || hidden > 65536
        || depth > 256
        || out_dim == 0
        || out_dim > 64
        || pe_dim == 0
        || pe_dim > 65536
    {
        return Err(IoError::Corrupt(format!(
            "implausible architecture block (patch {patch}, feat {feat}, hidden {hidden}, \
             depth {depth}, out_dim {out_dim}, pe_dim {pe_dim})"
        )));
    }
    let config = NetConfig {
        patch,
        feat,
        hidden,
        depth,
        out_dim,
        pe_dim,
        pooling,
    };
    // the shape chain is fully determined by the architecture block
    let mut expected: Vec<(usize, usize)> = Vec::new();
    for _ in 0..patch {
        expected.push((pe_dim, patch));
        expected.push((hidden, pe_dim));
        for _ in 0..depth {
            expected.push((hidden, hidden));
        }
        expected.push((feat, hidden));
    }
    expected.push((
        hidden,
        patch
            .checked_mul(feat)
            .ok_or(IoError::Corrupt("patch*feat overflow".into()))?,
    ));
    for _ in 0..depth {
        expected.push((hidden, hidden));
    }
    expected.push((out_dim, hidden));

    let n_tensors = cur.u32()? as usize;
    if n_tensors != expected.len() {
        return Err(IoError::Corrupt(format!(
            "tensor count {n_tensors} does not match architecture ({} expected)",
            expected.len()
        )));
    }
    let mut tensors: Vec<Array2<f64>> = Vec::with_capacity(n_tensors);
    for &(rows, cols) in &expected {
        let r = cur.u32()? as usize;
        let c = cur.u32()? as usize;
        if (r, c) != (rows, cols) {
            return Err(IoError::Corrupt(format!(
                "tensor shape ({r}, {c}) does not match architecture ({rows}, {cols})"
            )));
        }
        let n = rows
            .checked_mul(cols)
            .ok_or(IoError::Corrupt("tensor size overflow".into()))?;
        let raw = cur.take(n.checked_mul(4).ok_or(IoError::Corrupt("tensor size overflow".into()))?)?;
        let mut values = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(4) {
            values.push(LittleEndian::read_f32(chunk) as f64);
        }
        tensors.push(
            Array2::from_shape_vec((rows, cols), values)
                .map_err(|e| IoError::Corrupt(e.to_string()))?,
        );
    }
    if cur.pos != bytes.len() {
        return Err(IoError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }

    let mut iter = tensors.into_iter();
    let mut slices = Vec::with_capacity(patch);
    for _ in 0..patch {
        let embed = iter.next().expect("counted above");
        let weights: Vec<Array2<f64>> = (0..depth + 2)
            .map(|_| iter.next().expect("counted above"))
            .collect();
        slices.push(SetMlpParams {
            embed,
            trunk: MlpParams { weights },
        });
    }
    let combiner = MlpParams {
        weights: iter.collect(),
    };
    Ok((
        SliceMlpParams {
            slices,
            combiner,
            config,
        },
        family,
    ))
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    let mut le = [0u8; 4];
    LittleEndian::write_u32(&mut le, v);
    buf.extend_from_slice(&le);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(IoError::Corrupt("length overflow".into()))?;
        if end > self.bytes.len() {
            return Err(IoError::Truncated {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }
}
