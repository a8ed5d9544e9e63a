//! Feature store: a dense matrix of 32-bit floats plus a JSON sidecar that
//! names every row.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic   b"RVFS"
//! version u32   (1)
//! tag     u8    (descriptor code) + 3 reserved zero bytes
//! dim     u32
//! count   u32
//! data    count * dim * f32, row-major
//! ```

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorTag, FeatureVector};
use crate::error::{Error, IoContext, Result};

pub const STORE_MAGIC: &[u8; 4] = b"RVFS";
pub const STORE_VERSION: u32 = 1;

/// What a row describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowLabel {
    View {
        object_id: String,
        ring: usize,
        view: usize,
    },
    Query {
        query_id: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub tag: DescriptorTag,
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
    pub labels: Vec<RowLabel>,
}

impl FeatureStore {
    pub fn new(tag: DescriptorTag, dim: usize) -> Self {
        Self {
            tag,
            dim,
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, fv: &FeatureVector, label: RowLabel) -> Result<()> {
        if fv.tag != self.tag {
            return Err(Error::DescriptorMismatch {
                index: self.tag.to_string(),
                query: fv.tag.to_string(),
            });
        }
        if fv.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: fv.len(),
            });
        }
        self.rows
            .push(fv.values.iter().map(|&v| v as f32).collect());
        self.labels.push(label);
        Ok(())
    }

    pub fn write_matrix<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(STORE_MAGIC)?;
        out.write_all(&STORE_VERSION.to_le_bytes())?;
        out.write_all(&[self.tag.code(), 0, 0, 0])?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.rows.len() as u32).to_le_bytes())?;
        for row in &self.rows {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the matrix part; labels are left empty.
    pub fn read_matrix<R: Read>(input: &mut R) -> Result<FeatureStore> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(Error::Format("not a feature store (bad magic)".into()));
        }
        let version = read_u32(input)?;
        if version != STORE_VERSION {
            return Err(Error::Format(format!(
                "unsupported feature store version {version}"
            )));
        }
        let mut tag = [0u8; 4];
        input.read_exact(&mut tag)?;
        let tag = DescriptorTag::from_code(tag[0])?;
        let dim = read_u32(input)? as usize;
        let count = read_u32(input)? as usize;
        let mut rows = Vec::with_capacity(count);
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            input.read_exact(&mut buf)?;
            rows.push(
                buf.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                    .collect(),
            );
        }
        Ok(FeatureStore {
            tag,
            dim,
            rows,
            labels: Vec::new(),
        })
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    /// Writes `path` (matrix) and `path.json` (row labels).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_matrix(&mut bytes)?;
        std::fs::write(path, bytes).at(path)?;
        let side = Self::sidecar_path(path);
        std::fs::write(&side, serde_json::to_vec_pretty(&self.labels)?).at(&side)
    }

    pub fn load(path: &Path) -> Result<FeatureStore> {
        let bytes = std::fs::read(path).at(path)?;
        let mut store = Self::read_matrix(&mut bytes.as_slice())?;
        let side = Self::sidecar_path(path);
        store.labels = serde_json::from_slice(&std::fs::read(&side).at(&side)?)?;
        if store.labels.len() != store.rows.len() {
            return Err(Error::Format(format!(
                "sidecar has {} labels for {} rows",
                store.labels.len(),
                store.rows.len()
            )));
        }
        Ok(store)
    }

    pub fn vector(&self, row: usize) -> FeatureVector {
        FeatureVector::new(self.rows[row].iter().map(|&v| v as f64).collect(), self.tag)
    }
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let mut s = FeatureStore::new(DescriptorTag::Grid, 3);
        s.push(
            &FeatureVector::new(vec![0.5, 0.25, 0.25], DescriptorTag::Grid),
            RowLabel::View {
                object_id: "a".into(),
                ring: 3,
                view: 0,
            },
        )
        .unwrap();
        s.push(
            &FeatureVector::new(vec![1.0, 0.0, 0.0], DescriptorTag::Grid),
            RowLabel::Query {
                query_id: "q".into(),
            },
        )
        .unwrap();
        s.save(&path).unwrap();
        let back = FeatureStore::load(&path).unwrap();
        assert_eq!(back, s);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20 + 2 * 3 * 4);
        assert_eq!(&bytes[..4], b"RVFS");
    }

    #[test]
    fn rejects_wrong_dimension_and_tag() {
        let mut s = FeatureStore::new(DescriptorTag::Grid, 3);
        let label = RowLabel::Query {
            query_id: "q".into(),
        };
        assert!(s
            .push(
                &FeatureVector::new(vec![1.0], DescriptorTag::Grid),
                label.clone()
            )
            .is_err());
        assert!(s
            .push(&FeatureVector::new(vec![1.0; 3], DescriptorTag::Hog), label)
            .is_err());
    }

    #[test]
    fn bad_magic() {
        assert!(FeatureStore::read_matrix(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
    }
}
