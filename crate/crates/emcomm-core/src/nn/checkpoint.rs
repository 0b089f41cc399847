//! Parameter checkpoint files.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic "EMCK" | version u16 | tensor_count u64
//! per tensor:  name_len u64 | name (UTF-8) | ndim u64 | dims u64 x ndim
//!              | data f64 x prod(dims)
//! ```

use super::NnError;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"EMCK";
const VERSION: u16 = 1;

/// A named f64 tensor with explicit dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        let t = Self {
            name: name.into(),
            dims,
            data,
        };
        debug_assert_eq!(t.dims.iter().product::<usize>(), t.data.len());
        t
    }
}

pub fn save_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<(), NnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(t.dims.len() as u64).to_le_bytes());
        for d in &t.dims {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    file.write_all(&buf)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<NamedTensor>, NnError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?
        .read_to_end(&mut bytes)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    parse_checkpoint(&bytes)
}

fn parse_checkpoint(bytes: &[u8]) -> Result<Vec<NamedTensor>, NnError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(NnError::Checkpoint(format!(
            "bad magic {:02x?}, expected {:02x?}",
            magic, MAGIC
        )));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let count = cur.take_u64()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.take_u64()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = cur.take_u64()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.take_u64()? as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
        }
        tensors.push(NamedTensor { name, dims, data });
    }
    Ok(tensors)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Checkpoint(format!(
                "truncated: need {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn take_u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.emck");
        let tensors = vec![
            NamedTensor::new("a/weight", vec![2, 3], vec![1.5, -2.25, 0.0, f64::MIN_POSITIVE, 1e300, -0.1]),
            NamedTensor::new("a/bias", vec![3], vec![0.1, 0.2, 0.3]),
        ];
        save_checkpoint(&path, &tensors).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, tensors);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = parse_checkpoint(b"NOPE\x01\x00").unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_buffer_is_rejected() {
        let err = parse_checkpoint(b"EM").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}
