//! `HARWIN01` window cache.
//!
//! Little-endian: magic `b"HARWIN01"`, u32 window count, then per window a
//! u32-length-prefixed UTF-8 subject id, f64 start time, i32 label (−1 when
//! unlabeled) and 900 f32 samples (300 × 3, row-major).

use std::path::Path;

use super::Window;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HARWIN01";
pub const VALUES_PER_WINDOW: usize = 900;

pub fn encode(windows: &[Window]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + windows.len() * (VALUES_PER_WINDOW * 4 + 32));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(windows.len() as u32).to_le_bytes());
    for w in windows {
        if w.samples.len() != VALUES_PER_WINDOW {
            return Err(Error::Data(format!(
                "window cache stores {VALUES_PER_WINDOW} values per window, got {}",
                w.samples.len()
            )));
        }
        if w.label == Some(-1) {
            return Err(Error::Data("label -1 is reserved for unlabeled windows".into()));
        }
        out.extend_from_slice(&(w.subject_id.len() as u32).to_le_bytes());
        out.extend_from_slice(w.subject_id.as_bytes());
        out.extend_from_slice(&w.start_time.to_le_bytes());
        out.extend_from_slice(&w.label.unwrap_or(-1).to_le_bytes());
        for v in &w.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Window>> {
    let truncated = || Error::Format("window cache truncated".into());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(truncated)?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(Error::Format("not a HARWIN01 window cache".into()));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let subject_id = String::from_utf8(take(n)?.to_vec())
            .map_err(|_| Error::Format("subject id is not UTF-8".into()))?;
        let start_time = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let label = i32::from_le_bytes(take(4)?.try_into().unwrap());
        let samples = take(VALUES_PER_WINDOW * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Window {
            subject_id,
            start_time,
            samples,
            label: (label != -1).then_some(label),
        });
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after window cache".into()));
    }
    Ok(out)
}

pub fn save(path: &Path, windows: &[Window]) -> Result<()> {
    std::fs::write(path, encode(windows)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<Window>> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
