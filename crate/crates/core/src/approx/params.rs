//! Named parameter arrays and the binary checkpoint format.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "CDRL" | version=1 | array count
//! per array: name length | UTF-8 name | rank | dims... | values as f32 LE
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ApproxError, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CDRL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl ParamArray {
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            self.shape.clone(),
            self.values.iter().map(|&v| v as f64).collect(),
        )
        .expect("param array is consistent")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    arrays: Vec<ParamArray>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<usize, ApproxError> {
        let name = name.into();
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(ApproxError::DuplicateName(name));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(ApproxError::ShapeMismatch {
                expected: shape,
                found: vec![values.len()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ApproxError::NonFiniteParam(name));
        }
        self.arrays.push(ParamArray {
            name,
            shape,
            values,
        });
        Ok(self.arrays.len() - 1)
    }

    pub fn arrays(&self) -> &[ParamArray] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [ParamArray] {
        &mut self.arrays
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }

    /// Copies every array of `source` into `self` bit-exactly.
    pub fn copy_from(&mut self, source: &ParamSet) -> Result<(), ApproxError> {
        if self.arrays.len() != source.arrays.len() {
            return Err(ApproxError::ShapeMismatch {
                expected: vec![self.arrays.len()],
                found: vec![source.arrays.len()],
            });
        }
        for (dst, src) in self.arrays.iter_mut().zip(&source.arrays) {
            if dst.shape != src.shape {
                return Err(ApproxError::ShapeMismatch {
                    expected: dst.shape.clone(),
                    found: src.shape.clone(),
                });
            }
        }
        for (dst, src) in self.arrays.iter_mut().zip(&source.arrays) {
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }

    /// Appends all arrays of `other` with `prefix` prepended to their names.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet) -> Result<(), ApproxError> {
        for a in &other.arrays {
            self.push(format!("{prefix}{}", a.name), a.shape.clone(), a.values.clone())?;
        }
        Ok(())
    }

    /// Arrays whose names start with `prefix`, with the prefix stripped.
    pub fn take_prefixed(&self, prefix: &str) -> ParamSet {
        ParamSet {
            arrays: self
                .arrays
                .iter()
                .filter_map(|a| {
                    a.name.strip_prefix(prefix).map(|rest| ParamArray {
                        name: rest.to_string(),
                        shape: a.shape.clone(),
                        values: a.values.clone(),
                    })
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.scalar_count() * 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ApproxError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(ApproxError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ApproxError::Format(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut set = ParamSet::new();
        let mut seen = HashSet::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| ApproxError::Format("array name is not UTF-8".into()))?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(ApproxError::Format(format!("duplicate array {name}")));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| {
                ApproxError::Format("array size overflows".into())
            })?)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            set.push(name, shape, values)
                .map_err(|e| ApproxError::Format(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(ApproxError::Format("trailing bytes".into()));
        }
        Ok(set)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ApproxError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ApproxError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ApproxError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_params(params: &ParamSet, path: &Path) -> Result<(), ApproxError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&params.to_bytes())?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamSet, ApproxError> {
    ParamSet::from_bytes(&fs::read(path)?)
}

/// Overwrites `target` with `source`. Shapes must agree.
pub fn copy_to_target(source: &ParamSet, target: &mut ParamSet) -> Result<(), ApproxError> {
    target.copy_from(source)
}
