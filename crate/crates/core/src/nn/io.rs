//! `HARSSL01` parameter files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    b"HARSSL01"
//! version  u16 (= 1)
//! seed     u64
//! step     u64
//! meta     u32 byte length, then UTF-8 (JSON model description, may be empty)
//! count    u32
//! per tensor: u32 name length, UTF-8 name, u32 ndim, ndim × u32 dims,
//!             product(dims) × f32
//! ```

use std::path::Path;

use super::{Float, ParamStore, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HARSSL01";
pub const VERSION: u16 = 1;

pub fn encode(params: &ParamStore, meta: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_values() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&params.seed().to_le_bytes());
    out.extend_from_slice(&params.step().to_le_bytes());
    put_str(&mut out, meta);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        put_str(&mut out, name);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(ParamStore, String)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a HARSSL01 parameter file".into()));
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {version}")));
    }
    let seed = u64::from_le_bytes(r.array()?);
    let step = u64::from_le_bytes(r.array()?);
    let meta = r.string()?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new(seed);
    store.set_step(step);
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as Float)
            .collect();
        store.insert(name, Tensor::new(dims, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((store, meta))
}

pub fn save(path: &Path, params: &ParamStore, meta: &str) -> Result<()> {
    std::fs::write(path, encode(params, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(ParamStore, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("parameter file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Network};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode(&ParamStore::new(7), "");
        assert_eq!(&bytes[..8], b"HARSSL01");
        assert_eq!(&bytes[8..10], &[1, 0]);
        assert_eq!(bytes.len(), 8 + 2 + 8 + 8 + 4 + 4);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let net = Network::new(vec![LayerSpec::Dense { name: "d".into(), inputs: 3, outputs: 2 }]);
        let bytes = encode(&net.init_params(1).unwrap(), "{}");
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }

    proptest! {
        #[test]
        fn save_load_save_is_byte_identical(seed in any::<u64>(), step in 0u64..1000, i in 1usize..6, o in 1usize..6, meta in "[a-z{}\":]{0,20}") {
            let net = Network::new(vec![
                LayerSpec::Dense { name: "a".into(), inputs: i, outputs: o },
                LayerSpec::Relu,
                LayerSpec::Dense { name: "b".into(), inputs: o, outputs: 2 },
            ]);
            let mut p = net.init_params(seed).unwrap();
            p.set_step(step);
            let bytes = encode(&p, &meta);
            let (q, m) = decode(&bytes).unwrap();
            prop_assert_eq!(&m, &meta);
            prop_assert_eq!(encode(&q, &m), bytes);
            #[cfg(not(feature = "f64-check"))]
            prop_assert_eq!(q, p);
        }
    }
}
