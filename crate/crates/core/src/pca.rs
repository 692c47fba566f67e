//! Principal component analysis on dense sample matrices.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::trmf::{self, Modality, Reader, TrmfError, Writer};

// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} has dimension {found}, expected {expected}")]
    RaggedSamples {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("output_dim must be at least 1")]
    ZeroOutputDim,
    #[error("eigendecomposition did not converge")]
    NoConvergence,
    #[error(transparent)]
    Trmf(#[from] TrmfError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<f64>,
    /// Row-major `[output_dim × input_dim]`; rows past `valid_components` are zero.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// Number of leading components with non-zero variance.
    pub valid_components: usize,
}

impl PcaModel {
    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn is_zero_variance(&self) -> bool {
        self.valid_components == 0
    }

    pub fn padded_components(&self) -> usize {
        self.output_dim - self.valid_components
    }

    /// `components · (x − mean)`
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, PcaError> {
        if x.len() != self.input_dim {
            return Err(PcaError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.output_dim)
            .map(|i| {
                self.component(i)
                    .iter()
                    .zip(&centered)
                    .map(|(c, v)| c * v)
                    .sum()
            })
            .collect())
    }

    /// `mean + componentsᵀ · y`
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>, PcaError> {
        if y.len() != self.output_dim {
            return Err(PcaError::DimensionMismatch {
                expected: self.output_dim,
                found: y.len(),
            });
        }
        let mut out = self.mean.clone();
        for (i, &coef) in y.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.component(i)) {
                *o += coef * c;
            }
        }
        Ok(out)
    }

    /// Writes `u32 input_dim, u32 output_dim, mean f32[input_dim],
    /// components f32[output_dim × input_dim]`.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Modality::Pca);
        w.u32(self.input_dim as u32);
        w.u32(self.output_dim as u32);
        for v in &self.mean {
            w.f32(*v as f32);
        }
        for v in &self.components {
            w.f32(*v as f32);
        }
        w.finish()
    }

    /// Explained variance is not stored on disk and loads as zero.
    pub fn decode(data: &[u8]) -> Result<PcaModel, PcaError> {
        let mut r = Reader::open(data, Modality::Pca)?;
        let input_dim = r.u32()? as usize;
        let output_dim = r.u32()? as usize;
        let mean: Vec<f64> = r.f32s(input_dim)?.into_iter().map(f64::from).collect();
        let components: Vec<f64> = r
            .f32s(input_dim * output_dim)?
            .into_iter()
            .map(f64::from)
            .collect();
        r.finish()?;
        let valid_components = (0..output_dim)
            .take_while(|&i| {
                components[i * input_dim..(i + 1) * input_dim]
                    .iter()
                    .any(|v| *v != 0.0)
            })
            .count();
        Ok(PcaModel {
            input_dim,
            output_dim,
            mean,
            components,
            explained_variance: vec![0.0; output_dim],
            valid_components,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PcaError> {
        Ok(trmf::write_atomic(path, &self.encode())?)
    }

    pub fn load(path: &Path) -> Result<PcaModel, PcaError> {
        PcaModel::decode(&std::fs::read(path).map_err(TrmfError::from)?)
    }
}

/// Fits `output_dim` principal components to `samples` (one sample per row).
///
/// Uses the covariance matrix when `input_dim ≤ n` and the Gram matrix
/// otherwise. Components whose variance is zero, and any requested beyond
/// `min(input_dim, n)`, are zero rows counted in `padded_components`.
/// Each component's largest-magnitude entry is positive.
pub fn fit_pca(samples: &[Vec<f64>], output_dim: usize) -> Result<PcaModel, PcaError> {
    let n = samples.len();
    if n < 2 {
        return Err(PcaError::TooFewSamples(n));
    }
    if output_dim == 0 {
        return Err(PcaError::ZeroOutputDim);
    }
    let d = samples[0].len();
    for (index, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(PcaError::RaggedSamples {
                index,
                found: s.len(),
                expected: d,
            });
        }
    }

    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| samples[i][j] - mean[j]);
    let denom = (n - 1) as f64;

    // (variance, unit component) pairs, sorted by variance descending
    let mut pairs: Vec<(f64, Vec<f64>)> = if d <= n {
        let cov = centered.tr_mul(&centered) / denom;
        let eig = SymmetricEigen::try_new(cov, 1e-14, 0).ok_or(PcaError::NoConvergence)?;
        (0..d)
            .map(|i| {
                (
                    eig.eigenvalues[i],
                    eig.eigenvectors.column(i).iter().copied().collect(),
                )
            })
            .collect()
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::try_new(gram, 1e-14, 0).ok_or(PcaError::NoConvergence)?;
        (0..n)
            .map(|i| {
                let lambda = eig.eigenvalues[i];
                let u = eig.eigenvectors.column(i);
                let v = centered.tr_mul(&u);
                let norm = v.norm();
                let comp = if norm > 0.0 {
                    v.iter().map(|x| x / norm).collect()
                } else {
                    vec![0.0; d]
                };
                (lambda, comp)
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let top = pairs.first().map(|p| p.0).unwrap_or(0.0).max(0.0);
    let threshold = top * RANK_TOL;
    let mut components = vec![0.0; output_dim * d];
    let mut explained_variance = vec![0.0; output_dim];
    let mut valid_components = 0;
    for (i, (lambda, mut comp)) in pairs.into_iter().take(output_dim.min(d).min(n)).enumerate() {
        if !(lambda > threshold) || top == 0.0 {
            break;
        }
        let pivot = comp
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, v)| {
                if v.abs() > best.1 {
                    (j, v.abs())
                } else {
                    best
                }
            })
            .0;
        if comp[pivot] < 0.0 {
            comp.iter_mut().for_each(|v| *v = -*v);
        }
        components[i * d..(i + 1) * d].copy_from_slice(&comp);
        explained_variance[i] = lambda;
        valid_components += 1;
    }

    if valid_components == 0 {
        log::warn!("PCA fit on {n} samples found zero variance; projection maps to zero");
    } else if valid_components < output_dim {
        log::warn!(
            "PCA fit on {n} samples of dimension {d}: {} of {output_dim} components are zero-padded",
            output_dim - valid_components
        );
    }

    Ok(PcaModel {
        input_dim: d,
        output_dim,
        mean,
        components,
        explained_variance,
        valid_components,
    })
}
