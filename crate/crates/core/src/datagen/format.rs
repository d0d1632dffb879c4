//! TPDS container, little-endian:
//! magic `TPDS`, u16 version, u32 sample count; per sample u16 h, u16 w,
//! four bit-packed row-major masks (occupied, free, unknown, history), u8
//! label count; per label u16 point count, `(f32 row, f32 col)` points and
//! the bit-packed traversable mask. Bits are packed least significant first.

use std::fs;
use std::path::Path;

use super::{DatasetSample, TrajectoryLabel};
use crate::error::{Error, Result};
use crate::grid::{GridConfig, NetworkInput, OccupancyGrid};

const MAGIC: &[u8; 4] = b"TPDS";
const VERSION: u16 = 1;

fn pack(bits: impl ExactSizeIterator<Item = bool>, out: &mut Vec<u8>) {
    let n = bits.len();
    let start = out.len();
    out.resize(start + n.div_ceil(8), 0);
    for (i, b) in bits.enumerate() {
        if b {
            out[start + i / 8] |= 1 << (i % 8);
        }
    }
}

pub fn encode_dataset(samples: &[DatasetSample]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(samples.len()).map_err(|_| Error::format("too many samples"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (i, s) in samples.iter().enumerate() {
        let cfg = s.input.config;
        let (h, w) = (u16::try_from(cfg.height), u16::try_from(cfg.width));
        let (Ok(h), Ok(w)) = (h, w) else {
            return Err(Error::format_at(i, "grid larger than 65535 cells per side"));
        };
        out.extend_from_slice(&h.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
        for c in 0..NetworkInput::CHANNELS {
            pack(s.input.channel(c).iter().map(|v| *v != 0.0), &mut out);
        }
        let labels = u8::try_from(s.labels.len()).map_err(|_| Error::format_at(i, "more than 255 labels"))?;
        out.push(labels);
        for l in &s.labels {
            let n = u16::try_from(l.polyline.len()).map_err(|_| Error::format_at(i, "polyline longer than 65535 points"))?;
            out.extend_from_slice(&n.to_le_bytes());
            for p in &l.polyline {
                out.extend_from_slice(&p[0].to_le_bytes());
                out.extend_from_slice(&p[1].to_le_bytes());
            }
            if l.traversable.len() != cfg.cells() {
                return Err(Error::format_at(i, "label mask size differs from the grid"));
            }
            pack(l.traversable.iter().copied(), &mut out);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    sample: Option<usize>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format { sample: self.sample, message: "truncated file".into() });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bits(&mut self, n: usize) -> Result<Vec<bool>> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }
}

/// Inverse of [`encode_dataset`]; validates every sample's invariants.
/// Scene metadata is not stored, so decoded samples carry `meta: None` and a
/// default [`GridConfig`] for their size.
pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<DatasetSample>> {
    let mut r = Reader { bytes, pos: 0, sample: None };
    if r.take(4).map_err(|_| Error::format("bad magic"))? != MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        r.sample = Some(i);
        let (h, w) = (r.u16()? as usize, r.u16()? as usize);
        let cfg = GridConfig::with_size(h, w);
        cfg.validate().map_err(|e| Error::format_at(i, e.to_string()))?;
        let n = cfg.cells();
        let masks = [r.bits(n)?, r.bits(n)?, r.bits(n)?, r.bits(n)?];
        let grid = OccupancyGrid::from_masks(cfg, &masks[0], &masks[1], &masks[2]).map_err(|e| Error::format_at(i, e.to_string()))?;
        let mut channels = Vec::with_capacity(4 * n);
        for m in &masks {
            channels.extend(m.iter().map(|b| if *b { 1.0f32 } else { 0.0 }));
        }
        let label_count = r.u8()? as usize;
        if label_count == 0 {
            return Err(Error::format_at(i, "sample has no labels"));
        }
        let mut labels = Vec::with_capacity(label_count);
        for _ in 0..label_count {
            let points = r.u16()? as usize;
            let mut polyline = Vec::with_capacity(points);
            for _ in 0..points {
                polyline.push([r.f32()?, r.f32()?]);
            }
            let label = TrajectoryLabel { traversable: r.bits(n)?, polyline };
            label.validate(&grid).map_err(|e| Error::format_at(i, e.to_string()))?;
            labels.push(label);
        }
        samples.push(DatasetSample { input: NetworkInput { channels, config: cfg }, labels, meta: None });
    }
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes after the last sample"));
    }
    Ok(samples)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[DatasetSample]) -> Result<()> {
    fs::write(path, encode_dataset(samples)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetSample>> {
    decode_dataset(&fs::read(path)?)
}
