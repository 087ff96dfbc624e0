use std::path::Path;

use crate::error::{Error, Result};
use crate::store::{read_embedding_tensor, write_embedding_tensor, Dtype, EmbeddingTensor};

/// Per-sample feature vectors, row-major `n x dim`.
///
/// `provenance` describes how the rows were produced (`"concat"`,
/// `"concat+pca1024"`, ...) and travels with the matrix through MMEB files
/// as the tensor name.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    dim: usize,
    values: Vec<f64>,
    provenance: String,
}

impl FeatureMatrix {
    pub fn new(n: usize, dim: usize, values: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        let provenance = provenance.into();
        if n == 0 || dim == 0 {
            return Err(Error::Dimension(format!(
                "feature matrix must be non-empty, got {n}x{dim}"
            )));
        }
        if n.checked_mul(dim) != Some(values.len()) {
            return Err(Error::Dimension(format!(
                "feature matrix {n}x{dim} given {} values",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                context: format!("feature matrix '{provenance}'"),
                index,
            });
        }
        Ok(Self {
            n,
            dim,
            values,
            provenance,
        })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], provenance: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != dim) {
            return Err(Error::Dimension(format!(
                "ragged rows: expected width {dim}, found {}",
                bad.as_ref().len()
            )));
        }
        let values = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), dim, values, provenance)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    #[inline]
    pub fn squared_distance(&self, a: usize, b: usize) -> f64 {
        squared_distance(self.row(a), self.row(b))
    }

    /// Flattens each sample's `t*d` values into one row.
    pub fn from_tensor(tensor: EmbeddingTensor) -> Result<Self> {
        let (n, width) = (tensor.n(), tensor.t() * tensor.d());
        let provenance = tensor.name().to_string();
        Self::new(n, width, tensor.into_values(), provenance)
    }

    /// The matrix as an `n x 1 x dim` tensor named after its provenance.
    pub fn to_tensor(&self) -> EmbeddingTensor {
        EmbeddingTensor::new(self.provenance.clone(), self.n, 1, self.dim, self.values.clone())
            .expect("feature matrix invariants imply tensor invariants")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_embedding_tensor(&self.to_tensor(), path, Dtype::F64)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor(read_embedding_tensor(path)?)
    }
}

/// `||a - b||^2`, summed in coordinate order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_distances() {
        let fm = FeatureMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]], "t").unwrap();
        assert_eq!(fm.n(), 2);
        assert_eq!(fm.dim(), 2);
        assert_eq!(fm.row(1), &[3.0, 4.0]);
        assert_eq!(fm.squared_distance(0, 1), 25.0);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert_eq!(
            FeatureMatrix::new(2, 2, vec![0.0; 3], "t").unwrap_err().kind(),
            "DimensionError"
        );
        assert_eq!(
            FeatureMatrix::new(1, 2, vec![0.0, f64::NAN], "t").unwrap_err().kind(),
            "DataError"
        );
        assert!(FeatureMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], "t").is_err());
    }

    #[test]
    fn mmeb_round_trip_keeps_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.mmeb");
        let fm = FeatureMatrix::from_rows(&[[0.1, -2.0], [1e300, 5.5]], "mean+pca2").unwrap();
        fm.write(&path).unwrap();
        assert_eq!(FeatureMatrix::read(&path).unwrap(), fm);
    }
}
