//! Named-tensor archives: a JSON manifest plus a flat little-endian blob.
//!
//! `<stem>.json` lists every tensor's name, dtype (`"f32"` / `"f64"`), shape
//! and byte offset into `<stem>.bin`, along with free-form metadata.
//! Values round-trip bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// One named tensor; the payload is kept as little-endian bytes of `dtype`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    dtype: &'static str,
    bytes: Vec<u8>,
}

impl Tensor {
    pub fn from_matrix<T: Real>(name: impl Into<String>, m: &DenseMatrix<T>) -> Self {
        Self::from_slice(name, vec![m.rows(), m.cols()], m.as_slice())
    }

    pub fn from_slice<T: Real>(name: impl Into<String>, shape: Vec<usize>, v: &[T]) -> Self {
        let mut bytes = Vec::with_capacity(v.len() * T::BYTES);
        v.iter().for_each(|x| x.write_le(&mut bytes));
        Self {
            name: name.into(),
            shape,
            dtype: T::DTYPE,
            bytes,
        }
    }

    pub fn dtype(&self) -> &'static str {
        self.dtype
    }

    fn width(&self) -> usize {
        if self.dtype == f32::DTYPE {
            f32::BYTES
        } else {
            f64::BYTES
        }
    }

    pub fn len(&self) -> usize {
        self.bytes.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn to_vec<T: Real>(&self) -> Result<Vec<T>> {
        if self.dtype != T::DTYPE {
            return Err(Error::InvalidInput(format!(
                "tensor {} has dtype {}, expected {}",
                self.name,
                self.dtype,
                T::DTYPE
            )));
        }
        Ok(self.bytes.chunks_exact(T::BYTES).map(T::read_le).collect())
    }

    pub fn to_matrix<T: Real>(&self) -> Result<DenseMatrix<T>> {
        if self.shape.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "tensor {} is not 2-D: {:?}",
                self.name, self.shape
            )));
        }
        DenseMatrix::new(self.shape[0], self.shape[1], self.to_vec()?)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn write(stem: &Path, tensors: &[Tensor], metadata: serde_json::Value) -> Result<Manifest> {
    let (json_path, bin_path) = paths(stem);
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.len() {
            return Err(Error::shape("tensor_io::write", expected, t.len()));
        }
        entries.push(TensorEntry {
            name: t.name.clone(),
            dtype: t.dtype().to_string(),
            shape: t.shape.clone(),
            offset: blob.len() as u64,
        });
        blob.extend_from_slice(&t.bytes);
    }
    let manifest = Manifest {
        blob: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors: entries,
        metadata,
    };
    fs::write(&bin_path, &blob).map_err(|e| Error::io(&bin_path, e))?;
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(manifest)
}

pub fn read(stem: &Path) -> Result<(Manifest, Vec<Tensor>)> {
    let (json_path, _) = paths(stem);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: json_path.clone(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let bin_path = json_path.with_file_name(&manifest.blob);
    let blob = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let count: usize = entry.shape.iter().product();
        let (dtype, width) = match entry.dtype.as_str() {
            "f32" => (f32::DTYPE, f32::BYTES),
            "f64" => (f64::DTYPE, f64::BYTES),
            other => {
                return Err(Error::InvalidInput(format!(
                    "tensor {}: unknown dtype {other}",
                    entry.name
                )))
            }
        };
        let start = entry.offset as usize;
        let end = start + count * width;
        let bytes = blob.get(start..end).ok_or_else(|| {
            Error::InvalidInput(format!("tensor {} overruns the blob", entry.name))
        })?;
        tensors.push(Tensor {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            dtype,
            bytes: bytes.to_vec(),
        });
    }
    Ok((manifest, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bit_exact_round_trip(a in prop::collection::vec(any::<f64>(), 1..40),
                                b in prop::collection::vec(any::<f32>(), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let stem = dir.path().join("t");
            let tensors = vec![
                Tensor::from_slice("a", vec![a.len()], &a),
                Tensor::from_slice("b", vec![1, b.len()], &b),
            ];
            write(&stem, &tensors, serde_json::json!({"k": 1})).unwrap();
            let (manifest, back) = read(&stem).unwrap();
            prop_assert_eq!(manifest.metadata["k"].as_i64(), Some(1));
            let a2: Vec<f64> = back[0].to_vec().unwrap();
            let b2: Vec<f32> = back[1].to_vec().unwrap();
            prop_assert!(a.iter().zip(&a2).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert!(b.iter().zip(&b2).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(manifest.tensors[1].offset, 8 * a.len() as u64);
        }
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let t = Tensor::from_slice("x", vec![2], &[1.0f32, 2.0]);
        assert!(t.to_vec::<f64>().is_err());
    }
}
