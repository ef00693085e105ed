//! Named-tensor exchange file.
//!
//! Little-endian binary layout:
//!
//! ```text
//! magic   8 bytes  "SNPTNSR\0"
//! version u32      1
//! count   u32      number of tensors, written in name order
//! per tensor:
//!   name_len u32, name (UTF-8)
//!   ndim u32, dims u64 * ndim
//!   data f64 * product(dims), row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::matrix::Matrix;
use super::FusionError;

pub const TENSOR_MAGIC: &[u8; 8] = b"SNPTNSR\0";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            shape: vec![m.rows, m.cols],
            data: m.data.clone(),
        }
    }

    pub fn vector(v: &[f64]) -> Self {
        Self {
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn to_matrix(&self, rows: usize, cols: usize) -> Result<Matrix, FusionError> {
        if self.shape != [rows, cols] {
            return Err(FusionError::TensorFile(format!(
                "expected shape [{rows}, {cols}], found {:?}",
                self.shape
            )));
        }
        Ok(Matrix::from_vec(rows, cols, self.data.clone()))
    }

    /// Any 2-D tensor as a matrix.
    pub fn as_matrix(&self) -> Result<Matrix, FusionError> {
        match self.shape.as_slice() {
            &[r, c] => Ok(Matrix::from_vec(r, c, self.data.clone())),
            s => Err(FusionError::TensorFile(format!("expected a 2-D tensor, found {s:?}"))),
        }
    }

    pub fn to_vector(&self, len: usize) -> Result<Vec<f64>, FusionError> {
        if self.shape != [len] {
            return Err(FusionError::TensorFile(format!(
                "expected shape [{len}], found {:?}",
                self.shape
            )));
        }
        Ok(self.data.clone())
    }
}

fn io_err(e: std::io::Error) -> FusionError {
    FusionError::TensorFile(e.to_string())
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &BTreeMap<String, Tensor>) -> Result<(), FusionError> {
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
    put(TENSOR_MAGIC)?;
    put(&TENSOR_VERSION.to_le_bytes())?;
    put(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let expect: usize = t.shape.iter().product();
        if expect != t.data.len() {
            return Err(FusionError::TensorFile(format!("tensor `{name}` data does not match its shape")));
        }
        put(&(name.len() as u32).to_le_bytes())?;
        put(name.as_bytes())?;
        put(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            put(&(d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            put(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FusionError> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(io_err)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, FusionError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, FusionError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_tensors<R: Read>(r: R) -> Result<BTreeMap<String, Tensor>, FusionError> {
    let mut r = Reader(r);
    if &r.bytes::<8>()? != TENSOR_MAGIC {
        return Err(FusionError::TensorFile("bad magic".into()));
    }
    let version = r.u32()?;
    if version != TENSOR_VERSION {
        return Err(FusionError::TensorFile(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let mut name = vec![0u8; len];
        r.0.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| FusionError::TensorFile("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FusionError::TensorFile(format!("tensor `{name}` is too large")))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.bytes()?));
        }
        if out.insert(name.clone(), Tensor { shape, data }).is_some() {
            return Err(FusionError::TensorFile(format!("duplicate tensor `{name}`")));
        }
    }
    let mut probe = [0u8; 1];
    if r.0.read(&mut probe).map_err(io_err)? != 0 {
        return Err(FusionError::TensorFile("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BTreeMap<String, Tensor> {
        BTreeMap::from([
            ("a.weight".to_string(), Tensor { shape: vec![2, 3], data: vec![1.0, -2.5, 3.0, 0.0, 1e-300, f64::MAX] }),
            ("a.bias".to_string(), Tensor::vector(&[0.5, -0.5, 0.25])),
            ("empty".to_string(), Tensor { shape: vec![0, 4], data: vec![] }),
        ])
    }

    #[test]
    fn round_trip_is_exact() {
        let mut buf = Vec::new();
        write_tensors(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[..8], TENSOR_MAGIC);
        assert_eq!(read_tensors(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn damaged_files_are_rejected() {
        let mut buf = Vec::new();
        write_tensors(&mut buf, &sample()).unwrap();
        for cut in [0, 4, 8, 16, buf.len() - 1] {
            assert!(read_tensors(&buf[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_tensors(bad.as_slice()).is_err());
        let mut trailing = buf;
        trailing.push(0);
        assert!(read_tensors(trailing.as_slice()).is_err());
    }

    #[test]
    fn shape_checks() {
        let t = Tensor::vector(&[1.0, 2.0]);
        assert!(t.to_matrix(1, 2).is_err());
        assert!(t.as_matrix().is_err());
        assert_eq!(t.to_vector(2).unwrap(), vec![1.0, 2.0]);
        assert!(t.to_vector(3).is_err());
    }
}
