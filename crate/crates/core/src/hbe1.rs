//! Flat binary weight container: magic `HBE1`, a little-endian u32
//! header length, a JSON header describing tensor names and shapes,
//! then raw little-endian f32 data row-major in header order.

use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HBE1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(name: &str, data: &[f64]) -> Tensor {
        Tensor {
            name: name.to_string(),
            shape: vec![data.len()],
            data: data.to_vec(),
        }
    }

    pub fn from_mat(name: &str, mat: &crate::mat::Mat) -> Tensor {
        Tensor {
            name: name.to_string(),
            shape: vec![mat.rows, mat.cols],
            data: mat.data.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_mat(&self) -> Result<crate::mat::Mat> {
        if self.shape.len() != 2 {
            return Err(Error::Serialize(format!(
                "tensor '{}' has shape {:?}, expected a matrix",
                self.name, self.shape
            )));
        }
        Ok(crate::mat::Mat {
            rows: self.shape[0],
            cols: self.shape[1],
            data: self.data.clone(),
        })
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    byte_order: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cell_type: Option<String>,
    tensors: Vec<TensorInfo>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

/// Write tensors to a container file. Values are narrowed to f32.
pub fn write_tensors(path: &Path, cell_type: Option<&str>, tensors: &[Tensor]) -> Result<()> {
    let header = Header {
        version: 1,
        dtype: "f32".to_string(),
        byte_order: "le".to_string(),
        cell_type: cell_type.map(str::to_string),
        tensors: tensors
            .iter()
            .map(|t| TensorInfo {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    for t in tensors {
        if t.data.len() != t.len() {
            return Err(Error::Serialize(format!(
                "tensor '{}' data length {} does not match shape {:?}",
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        for &v in &t.data {
            file.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Read a container written by [`write_tensors`]. Values widen to f64.
pub fn read_tensors(path: &Path) -> Result<(Option<String>, Vec<Tensor>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serialize(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.dtype != "f32" || header.byte_order != "le" {
        return Err(Error::Serialize(format!(
            "unsupported container encoding {}/{}",
            header.dtype, header.byte_order
        )));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in header.tensors {
        let count: usize = info.shape.iter().product();
        let mut raw = vec![0u8; count * 4];
        file.read_exact(&mut raw).map_err(|e| {
            Error::Serialize(format!("tensor '{}' truncated: {e}", info.name))
        })?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        tensors.push(Tensor {
            name: info.name,
            shape: info.shape,
            data,
        });
    }
    Ok((header.cell_type, tensors))
}
