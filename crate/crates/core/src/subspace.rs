//! PCA over a neighborhood of text embeddings and the coarse/fine split of
//! the resulting basis.
//!
//! High-variance components carry broad category structure; the remaining
//! low-variance components carry fine-grained distinctions between nearby
//! classes. [`pc_ratio_report`] measures that asymmetry per component and
//! [`suggest_k`] turns it into a split index.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emb::{check_dim, dot, EmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

/// Components whose eigenvalue falls below this fraction of the leading one
/// are dropped.
pub const RANK_TOL: f64 = 1e-10;

/// Default ratio threshold for [`suggest_k`].
pub const DEFAULT_RATIO_THRESHOLD: f64 = 3.0;

/// Which eigenproblem [`fit_pca_with_route`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaRoute {
    /// Gram route when `n < d`, covariance route otherwise.
    Auto,
    /// `d x d` sample covariance.
    Covariance,
    /// `n x n` Gram matrix of the (centered) points, mapped back to feature space.
    Gram,
}

/// Orthonormal principal basis of a fitted set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub dim: usize,
    pub center: Vec<f64>,
    /// Unit components in nonincreasing eigenvalue order.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// An ordered list of orthonormal directions together with the center that
/// projections subtract.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub dim: usize,
    pub center: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl Subspace {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Coordinates of `z - center` along each component.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        project(&self.components, z, &self.center)
    }

    /// Maps a coordinate-space gradient back to ambient space: `U * g`.
    pub fn lift(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (u, c) in self.components.iter().zip(coords) {
            for (o, x) in out.iter_mut().zip(u) {
                *o += c * x;
            }
        }
        out
    }

    /// Same directions, projections taken about the origin.
    pub fn uncentered(mut self) -> Self {
        self.center = vec![0.0; self.dim];
        self
    }
}

impl SubspaceBasis {
    /// Number of retained components (`D`).
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    /// Splits into the first `k` components and the remaining `D - k`.
    pub fn split(&self, k: usize) -> Result<(Subspace, Subspace)> {
        let d = self.rank();
        if k < 1 || k >= d {
            return Err(Error::InvalidSplit {
                k,
                max: d.saturating_sub(1),
            });
        }
        let part = |range: std::ops::Range<usize>| Subspace {
            dim: self.dim,
            center: self.center.clone(),
            components: self.components[range].to_vec(),
        };
        Ok((part(0..k), part(k..d)))
    }

    pub fn full(&self) -> Subspace {
        Subspace {
            dim: self.dim,
            center: self.center.clone(),
            components: self.components.clone(),
        }
    }

    /// SHA-256 over the little-endian bytes of every stored value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for x in self
            .center
            .iter()
            .chain(self.components.iter().flatten())
            .chain(&self.eigenvalues)
        {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// PCA with the default route selection.
pub fn fit_pca(set: &EmbeddingSet, center: bool) -> Result<SubspaceBasis> {
    fit_pca_with_route(set, center, PcaRoute::Auto)
}

pub fn fit_pca_with_route(set: &EmbeddingSet, center: bool, route: PcaRoute) -> Result<SubspaceBasis> {
    let n = set.len();
    let d = set.dim();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: n });
    }
    let mean = if center {
        let mut m = vec![0.0; d];
        for v in set.vectors() {
            m.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        }
        m.iter_mut().for_each(|a| *a /= n as f64);
        m
    } else {
        vec![0.0; d]
    };
    let rows: Vec<Vec<f64>> = set
        .vectors()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let denom = (n - 1) as f64;

    let use_gram = match route {
        PcaRoute::Auto => n < d,
        PcaRoute::Gram => true,
        PcaRoute::Covariance => false,
    };

    let (values, mut vectors) = if use_gram {
        let gram: Vec<Vec<f64>> = rows
            .iter()
            .map(|a| rows.iter().map(|b| dot(a, b) / denom).collect())
            .collect();
        let eig = symmetric_eigen(&gram);
        let vectors: Vec<Vec<f64>> = eig
            .vectors
            .iter()
            .map(|coef| {
                let mut u = vec![0.0; d];
                for (r, c) in rows.iter().zip(coef) {
                    u.iter_mut().zip(r).for_each(|(a, x)| *a += c * x);
                }
                u
            })
            .collect();
        (eig.values, vectors)
    } else {
        let mut cov = vec![vec![0.0; d]; d];
        for r in &rows {
            for i in 0..d {
                if r[i] == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[i][j] += r[i] * r[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i][j] /= denom;
                cov[j][i] = cov[i][j];
            }
        }
        let eig = symmetric_eigen(&cov);
        (eig.values, eig.vectors)
    };

    let leading = values.first().copied().unwrap_or(0.0);
    if !(leading > 0.0) {
        return Err(Error::DegenerateSet);
    }
    let max_rank = if center { (n - 1).min(d) } else { n.min(d) };
    let keep = values
        .iter()
        .take(max_rank)
        .take_while(|&&l| l >= RANK_TOL * leading)
        .count();

    let mut components = Vec::with_capacity(keep);
    for u in vectors.iter_mut().take(keep) {
        let len = dot(u, u).sqrt();
        if !(len > 0.0) {
            return Err(Error::DegenerateSet);
        }
        u.iter_mut().for_each(|x| *x /= len);
        orient(u);
        components.push(std::mem::take(u));
    }
    let eigenvalues = values[..keep].iter().map(|&l| l.max(0.0)).collect();
    Ok(SubspaceBasis {
        dim: d,
        center: mean,
        components,
        eigenvalues,
    })
}

/// Flips `u` so its largest-magnitude coordinate (first on ties) is positive.
fn orient(u: &mut [f64]) {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `U^T (z - center)` for the given component list.
pub fn project(components: &[Vec<f64>], z: &[f64], center: &[f64]) -> Result<Vec<f64>> {
    check_dim(center.len(), z.len())?;
    let shifted: Vec<f64> = z.iter().zip(center).map(|(a, c)| a - c).collect();
    components
        .iter()
        .map(|u| {
            check_dim(u.len(), z.len())?;
            Ok(dot(u, &shifted))
        })
        .collect()
}

/// Per-component ratio of mean cross-category to mean within-category
/// absolute coordinate differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcRatioReport {
    /// One ratio per component; `f64::INFINITY` when within-category spread is zero.
    pub ratios: Vec<f64>,
    pub labels: Vec<String>,
}

pub fn pc_ratio_report(set: &EmbeddingSet, labels: &[String], basis: &SubspaceBasis) -> Result<PcRatioReport> {
    check_dim(basis.dim, set.dim())?;
    if labels.len() != set.len() {
        return Err(Error::InsufficientLabels);
    }
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_str()).or_insert(0usize) += 1;
    }
    if counts.len() < 2 || counts.values().any(|&c| c < 2) {
        return Err(Error::InsufficientLabels);
    }

    let mut ratios = Vec::with_capacity(basis.rank());
    for u in &basis.components {
        let coords: Vec<f64> = set.vectors().map(|v| dot(u, v)).collect();
        let (mut cross, mut n_cross, mut within, mut n_within) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..coords.len() {
            for j in (i + 1)..coords.len() {
                let gap = (coords[i] - coords[j]).abs();
                if labels[i] == labels[j] {
                    within += gap;
                    n_within += 1;
                } else {
                    cross += gap;
                    n_cross += 1;
                }
            }
        }
        let within = within / n_within as f64;
        let cross = cross / n_cross as f64;
        ratios.push(if within > 0.0 { cross / within } else { f64::INFINITY });
    }
    Ok(PcRatioReport {
        ratios,
        labels: labels.to_vec(),
    })
}

/// Number of leading components whose ratio reaches `threshold`, floored at 1
/// and capped at `D - 1`.
pub fn suggest_k(report: &PcRatioReport, threshold: f64) -> usize {
    let leading = report.ratios.iter().take_while(|&&r| r >= threshold).count();
    leading.min(report.ratios.len().saturating_sub(1)).max(1)
}
