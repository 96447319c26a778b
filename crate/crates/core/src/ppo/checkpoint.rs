//! Versioned binary checkpoint: magic `SXPPO\0\0\0`, u32 version, then the
//! policy and value layer widths (u64 count followed by u64 widths), the
//! u64 parameter count and the parameters as little-endian f64.

use std::path::Path;

use super::nn::MlpShape;
use super::{PolicyParams, PpoError};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"SXPPO\0\0\0";
pub const VERSION: u32 = 1;

fn put_shape(b: &mut Vec<u8>, s: &MlpShape) {
    b.extend_from_slice(&(s.sizes.len() as u64).to_le_bytes());
    for &w in &s.sizes {
        b.extend_from_slice(&(w as u64).to_le_bytes());
    }
}

pub fn to_bytes<T: Real>(p: &PolicyParams<T>) -> Vec<u8> {
    let mut b = MAGIC.to_vec();
    b.extend_from_slice(&VERSION.to_le_bytes());
    put_shape(&mut b, &p.policy_shape);
    put_shape(&mut b, &p.value_shape);
    b.extend_from_slice(&(p.params.len() as u64).to_le_bytes());
    for x in &p.params {
        b.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    b
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PpoError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or_else(|| PpoError::Checkpoint("truncated".into()))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, PpoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn shape(&mut self) -> Result<MlpShape, PpoError> {
        let n = self.u64()?;
        if !(2..=64).contains(&n) {
            return Err(PpoError::Checkpoint("layer count".into()));
        }
        let sizes = (0..n).map(|_| self.u64().map(|w| w as usize)).collect::<Result<Vec<_>, _>>()?;
        if sizes.iter().any(|&w| w == 0 || w > 1 << 20) {
            return Err(PpoError::Checkpoint("layer width".into()));
        }
        Ok(MlpShape::new(sizes))
    }
}

pub fn from_bytes<T: Real>(b: &[u8]) -> Result<PolicyParams<T>, PpoError> {
    let mut r = Reader { b, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(PpoError::Checkpoint("not a policy checkpoint".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(PpoError::Checkpoint(format!("unsupported version {version}")));
    }
    let ps = r.shape()?;
    let vs = r.shape()?;
    let n = r.u64()? as usize;
    if n > (b.len() - r.at) / 8 {
        return Err(PpoError::Checkpoint("parameter count exceeds file".into()));
    }
    let params = (0..n).map(|_| r.u64().map(|bits| T::lit(f64::from_bits(bits)))).collect::<Result<Vec<T>, _>>()?;
    if r.at != b.len() {
        return Err(PpoError::Checkpoint("trailing bytes".into()));
    }
    PolicyParams::from_parts(ps, vs, params)
}

pub fn save<T: Real>(p: &PolicyParams<T>, path: &Path) -> Result<(), PpoError> {
    std::fs::write(path, to_bytes(p)).map_err(|e| PpoError::Checkpoint(e.to_string()))
}

pub fn load<T: Real>(path: &Path) -> Result<PolicyParams<T>, PpoError> {
    from_bytes(&std::fs::read(path).map_err(|e| PpoError::Checkpoint(format!("{}: {e}", path.display())))?)
}
