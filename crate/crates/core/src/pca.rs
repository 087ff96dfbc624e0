//! Principal component analysis fitted on a [`FeatureMatrix`].
//!
//! Two routes produce the same model. With `d <= n` the `d x d` sample
//! covariance is decomposed directly; otherwise the `n x n` Gram matrix of
//! the centered rows is decomposed and each eigenvector `u` is lifted to a
//! component `X^T u / sqrt(mu)`. Covariance uses the `n - 1` divisor. Each
//! component's largest-magnitude entry is made positive (lowest index wins
//! a magnitude tie).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{dot, symmetric_eigen};
use crate::store::{read_embedding_tensor, write_embedding_tensor, Dtype, EmbeddingTensor};

pub const MODEL_FILE: &str = "pca.json";
pub const MEAN_FILE: &str = "pca_mean.mmeb";
pub const COMPONENTS_FILE: &str = "pca_components.mmeb";

/// Gram eigenvalues below this fraction of the largest are treated as null.
const GRAM_RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcaRoute {
    /// Covariance when `d <= n`, Gram otherwise.
    Auto,
    Covariance,
    Gram,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    dim: usize,
    mean: Vec<f64>,
    /// `k x dim`, row-major.
    components: Vec<f64>,
    explained_variance: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    k: usize,
    d: usize,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.dim..(i + 1) * self.dim]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.components.chunks_exact(self.dim)
    }

    /// Projects every row onto the components: `C (x - mean)`.
    pub fn transform(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "PCA model expects width {}, features have width {}",
                self.dim,
                features.dim()
            )));
        }
        let k = self.k();
        let mut out = vec![0.0; features.n() * k];
        out.par_chunks_mut(k)
            .zip(features.rows().collect::<Vec<_>>())
            .for_each(|(dst, row)| {
                let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
                for (slot, comp) in dst.iter_mut().zip(self.components()) {
                    *slot = dot(comp, &centered);
                }
            });
        FeatureMatrix::new(
            features.n(),
            k,
            out,
            format!("{}+pca{k}", features.provenance()),
        )
    }

    /// Writes `pca.json` plus MMEB tensors for the mean and components.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let header = ModelHeader {
            k: self.k(),
            d: self.dim,
            explained_variance: self.explained_variance.clone(),
        };
        let path = dir.join(MODEL_FILE);
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        let mean = EmbeddingTensor::new("pca_mean", 1, 1, self.dim, self.mean.clone())?;
        write_embedding_tensor(&mean, dir.join(MEAN_FILE), Dtype::F64)?;
        let comps =
            EmbeddingTensor::new("pca_components", self.k(), 1, self.dim, self.components.clone())?;
        write_embedding_tensor(&comps, dir.join(COMPONENTS_FILE), Dtype::F64)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MODEL_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let header: ModelHeader = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let mean = read_embedding_tensor(dir.join(MEAN_FILE))?;
        let comps = read_embedding_tensor(dir.join(COMPONENTS_FILE))?;
        let consistent = header.explained_variance.len() == header.k
            && mean.n() * mean.t() == 1
            && mean.d() == header.d
            && comps.n() * comps.t() == header.k
            && comps.d() == header.d;
        if !consistent {
            return Err(Error::Format(format!(
                "{}: PCA header disagrees with stored tensors",
                dir.display()
            )));
        }
        Ok(Self {
            dim: header.d,
            mean: mean.into_values(),
            components: comps.into_values(),
            explained_variance: header.explained_variance,
        })
    }
}

pub fn fit_pca(features: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    fit_pca_with_route(features, k, PcaRoute::Auto)
}

pub fn fit_pca_with_route(features: &FeatureMatrix, k: usize, route: PcaRoute) -> Result<PcaModel> {
    let (n, d) = (features.n(), features.dim());
    if n < 2 {
        return Err(Error::Rank(format!("PCA needs at least 2 samples, got {n}")));
    }
    let max_k = (n - 1).min(d);
    if k == 0 || k > max_k {
        return Err(Error::Rank(format!(
            "PCA target dimension {k} outside 1..={max_k} for {n} samples of width {d}"
        )));
    }
    let first = features.row(0);
    if features.rows().all(|r| r == first) {
        return Err(Error::Degenerate(
            "all samples are identical; data has zero variance".into(),
        ));
    }

    let mut mean = vec![0.0; d];
    for row in features.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = features
        .rows()
        .flat_map(|row| row.iter().zip(&mean).map(|(x, m)| x - m))
        .collect();

    let use_gram = match route {
        PcaRoute::Auto => d > n,
        PcaRoute::Covariance => false,
        PcaRoute::Gram => true,
    };
    let (mut components, explained_variance) = if use_gram {
        gram_route(&centered, n, d, k)?
    } else {
        covariance_route(&centered, n, d, k)?
    };
    if explained_variance[0] <= 0.0 {
        return Err(Error::Degenerate("data has zero variance".into()));
    }
    for comp in components.chunks_exact_mut(d) {
        fix_sign(comp);
    }
    Ok(PcaModel {
        dim: d,
        mean,
        components,
        explained_variance,
    })
}

fn covariance_route(centered: &[f64], n: usize, d: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut columns = vec![0.0; d * n];
    for (i, row) in centered.chunks_exact(d).enumerate() {
        for (j, x) in row.iter().enumerate() {
            columns[j * n + i] = *x;
        }
    }
    let divisor = (n - 1) as f64;
    let mut cov = vec![0.0; d * d];
    cov.par_chunks_mut(d).enumerate().for_each(|(a, out)| {
        let col_a = &columns[a * n..(a + 1) * n];
        for (b, slot) in out.iter_mut().enumerate() {
            *slot = dot(col_a, &columns[b * n..(b + 1) * n]) / divisor;
        }
    });
    // Exact symmetry keeps the eigensolver input well-formed.
    for a in 0..d {
        for b in 0..a {
            cov[a * d + b] = cov[b * d + a];
        }
    }
    let eig = symmetric_eigen(cov, d)?;
    let components = eig.vectors[..k * d].to_vec();
    let variance = eig.values[..k].iter().map(|v| v.max(0.0)).collect();
    Ok((components, variance))
}

fn gram_route(centered: &[f64], n: usize, d: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows: Vec<&[f64]> = centered.chunks_exact(d).collect();
    let mut gram = vec![0.0; n * n];
    gram.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = dot(rows[i], rows[j]);
        }
    });
    for i in 0..n {
        for j in 0..i {
            gram[i * n + j] = gram[j * n + i];
        }
    }
    let eig = symmetric_eigen(gram, n)?;
    let cutoff = eig.values[0].max(0.0) * GRAM_RANK_TOLERANCE;

    let mut components: Vec<f64> = Vec::with_capacity(k * d);
    let mut variance = Vec::with_capacity(k);
    for j in 0..k {
        let mu = eig.values[j];
        let mut comp = vec![0.0; d];
        if mu > cutoff {
            let u = eig.vector(j);
            for (row, &w) in rows.iter().zip(u) {
                for (c, x) in comp.iter_mut().zip(*row) {
                    *c += w * x;
                }
            }
            let inv = 1.0 / mu.sqrt();
            comp.iter_mut().for_each(|c| *c *= inv);
            orthonormalize_against(&mut comp, &components, d);
        } else {
            comp = complete_basis(&components, d)?;
        }
        components.extend_from_slice(&comp);
        variance.push(mu.max(0.0) / (n - 1) as f64);
    }
    Ok((components, variance))
}

/// Two passes of modified Gram-Schmidt against the rows of `basis`, then normalize.
fn orthonormalize_against(v: &mut [f64], basis: &[f64], d: usize) {
    for _ in 0..2 {
        for b in basis.chunks_exact(d) {
            let proj = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
    }
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// First standard basis vector that survives orthogonalization against `basis`.
fn complete_basis(basis: &[f64], d: usize) -> Result<Vec<f64>> {
    for axis in 0..d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        for _ in 0..2 {
            for b in basis.chunks_exact(d) {
                let proj = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 0.5 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Ok(v);
        }
    }
    Err(Error::Internal("could not complete an orthonormal basis".into()))
}

fn fix_sign(comp: &mut [f64]) {
    let mut best = 0;
    for (i, v) in comp.iter().enumerate() {
        if v.abs() > comp[best].abs() {
            best = i;
        }
    }
    if comp[best] < 0.0 {
        comp.iter_mut().for_each(|v| *v = -*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0]], "line").unwrap()
    }

    #[test]
    fn line_fixture() {
        for route in [PcaRoute::Covariance, PcaRoute::Gram] {
            let model = fit_pca_with_route(&line(), 1, route).unwrap();
            let c = model.component(0);
            assert!((c[0] - 0.5f64.sqrt()).abs() < 1e-12, "{route:?} {c:?}");
            assert!((c[1] - 0.5f64.sqrt()).abs() < 1e-12, "{route:?} {c:?}");
            assert!((model.explained_variance()[0] - 2.0).abs() < 1e-12);

            let p = FeatureMatrix::from_rows(&[[1.0, 1.0]], "p").unwrap();
            let out = model.transform(&p).unwrap();
            assert!((out.values()[0] - 2f64.sqrt()).abs() < 1e-12);
            assert_eq!(out.provenance(), "p+pca1");
        }
    }

    #[test]
    fn mean_maps_to_origin() {
        let fm = FeatureMatrix::from_rows(
            &[[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 4.0, 1.0], [2.0, 2.0, -3.0]],
            "x",
        )
        .unwrap();
        let model = fit_pca(&fm, 2).unwrap();
        let mean = FeatureMatrix::from_rows(&[model.mean().to_vec()], "m").unwrap();
        let out = model.transform(&mean).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rank_and_degenerate_errors() {
        assert_eq!(fit_pca(&line(), 0).unwrap_err().kind(), "RankError");
        assert_eq!(fit_pca(&line(), 3).unwrap_err().kind(), "RankError");
        let single = FeatureMatrix::from_rows(&[[1.0, 2.0]], "s").unwrap();
        assert_eq!(fit_pca(&single, 1).unwrap_err().kind(), "RankError");
        let same = FeatureMatrix::from_rows(&[[0.1, 0.2]; 4], "s").unwrap();
        assert_eq!(fit_pca(&same, 1).unwrap_err().kind(), "DegenerateError");
    }

    #[test]
    fn transform_checks_width() {
        let model = fit_pca(&line(), 1).unwrap();
        let wide = FeatureMatrix::from_rows(&[[1.0, 1.0, 1.0]], "w").unwrap();
        assert_eq!(model.transform(&wide).unwrap_err().kind(), "DimensionError");
    }

    #[test]
    fn rank_deficient_gram_completes_basis() {
        // Points on a line in 4-D: only one direction carries variance.
        let fm = FeatureMatrix::from_rows(
            &[[0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0]],
            "l",
        )
        .unwrap();
        let model = fit_pca_with_route(&fm, 2, PcaRoute::Gram).unwrap();
        let (a, b) = (model.component(0), model.component(1));
        assert!((dot(a, a) - 1.0).abs() < 1e-12);
        assert!((dot(b, b) - 1.0).abs() < 1e-12);
        assert!(dot(a, b).abs() < 1e-12);
        assert_eq!(model.explained_variance()[1], 0.0);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = fit_pca(&line(), 1).unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(PcaModel::load(dir.path()).unwrap(), model);
    }
}
