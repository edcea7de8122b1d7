use std::io::{Read, Write};

use super::{generate, ProcShapesConfig, CHANNELS};
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"PSHP";
pub const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u32,
    pub count: u32,
    pub height: u32,
    pub width: u32,
}

/// Writes the samples `indices` as: magic, version, count, H, W (u32 LE),
/// then per sample a label byte followed by `3·H·W` f32 LE pixels.
pub fn write_dump(cfg: &ProcShapesConfig, indices: &[usize], out: &mut impl Write) -> Result<()> {
    if cfg.n_classes > u8::MAX as usize + 1 {
        return Err(Error::Dataset("labels do not fit in a byte".into()));
    }
    let s = cfg.image_size as u32;
    out.write_all(DUMP_MAGIC)?;
    for v in [DUMP_VERSION, indices.len() as u32, s, s] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(1 + 4 * cfg.pixels());
    for &i in indices {
        let (img, label) = generate(cfg, i)?;
        buf.clear();
        buf.push(label as u8);
        for v in img {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_dump(input: &mut impl Read) -> Result<(DumpHeader, Vec<(u8, Vec<f32>)>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Dataset("bad dump magic".into()));
    }
    let mut word = || -> Result<u32> {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let header = DumpHeader {
        version: word()?,
        count: word()?,
        height: word()?,
        width: word()?,
    };
    if header.version != DUMP_VERSION {
        return Err(Error::Dataset(format!("unsupported dump version {}", header.version)));
    }
    let n = CHANNELS * header.height as usize * header.width as usize;
    let mut samples = Vec::with_capacity(header.count as usize);
    let mut raw = vec![0u8; 1 + 4 * n];
    for _ in 0..header.count {
        input.read_exact(&mut raw)?;
        let px = raw[1..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        samples.push((raw[0], px));
    }
    Ok((header, samples))
}
