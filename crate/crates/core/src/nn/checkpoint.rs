//! `TGWT` weight files: magic, `u16` version, then per parameter a `u16`
//! name length, the name bytes, a `u8` rank, `u32` dims and little-endian
//! `f32` values, until end of file.

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"TGWT";
pub const VERSION: u16 = 1;

pub fn encode<T: Scalar>(store: &ParamStore<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + store.num_values() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, tensor) in store.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::format(format!("parameter name too long: {name}")))?;
        let rank = u8::try_from(tensor.rank()).map_err(|_| Error::format("tensor rank exceeds 255"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in tensor.shape() {
            let d = u32::try_from(d).map_err(|_| Error::format("dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| Error::format("truncated weight file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).map_err(|_| Error::format("bad magic"))? != MAGIC {
        return Err(Error::format("bad magic"));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported weight file version {version}")));
    }
    let mut store = ParamStore::new();
    while cur.pos < bytes.len() {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?).map_err(|_| Error::format("parameter name is not UTF-8"))?.to_string();
        let rank = cur.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = cur.take(count.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
        let data = raw.chunks_exact(4).map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64)).collect();
        store.add(name, Tensor::new(shape, data)?).map_err(|e| Error::format(e.to_string()))?;
    }
    Ok(store)
}

pub fn save<T: Scalar>(store: &ParamStore<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(store)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<ParamStore<T>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..40),
                                   name in "[a-z][a-z0-9_.]{0,20}") {
            let mut store = ParamStore::<f32>::new();
            store.add(name.clone(), Tensor::new(vec![values.len()], values.clone()).unwrap()).unwrap();
            store.add(format!("{name}.2d"), Tensor::new(vec![1, values.len()], values).unwrap()).unwrap();
            let bytes = encode(&store).unwrap();
            let back: ParamStore<f32> = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back).unwrap(), bytes);
            for ((n1, t1), (n2, t2)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                for (a, b) in t1.data().iter().zip(t2.data()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(decode::<f32>(b"XXXX\x01\x00"), Err(Error::Format { .. })));
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let bytes = encode(&store).unwrap();
        let err = decode::<f32>(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }
}
