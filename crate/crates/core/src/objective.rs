//! The three-term objective over a class text embedding `z`:
//!
//! * image alignment: `-(1/N) * sum_i cos(x_i, z)` over exemplar images,
//! * coarse anchoring: `(1/|C|) * sum_p (1 - cos(Uc^T (z - m), Uc^T (z_p - m)))`,
//! * fine separation: `(1/|F|) * sum_n cos(Uf^T (z - m), Uf^T (z_n - m))`,
//!
//! combined as `align + lambda1 * coarse + lambda2 * fine`. Every term returns
//! its analytic gradient with respect to `z`.
//!
//! With a single coarse component the projected cosine is a sign agreement
//! and its gradient vanishes almost everywhere.

use serde::{Deserialize, Serialize};

use crate::emb::{check_dim, cosine_with_grad, norm, EmbeddingSet};
use crate::error::{Error, Result};
use crate::neighborhood::NeighborhoodSpec;
use crate::subspace::Subspace;

/// Projected norms at or below this raise [`Error::ZeroProjection`].
pub const ZERO_PROJECTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.lambda1) && ok(self.lambda2) {
            Ok(())
        } else {
            Err(Error::InvalidWeights)
        }
    }

    /// Alignment term only.
    pub fn align_only() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub img_align: f64,
    pub coarse: f64,
    pub fine: f64,
    pub total: f64,
}

pub fn loss_img_align(z: &[f64], exemplars: &EmbeddingSet) -> Result<(f64, Vec<f64>)> {
    if exemplars.is_empty() {
        return Err(Error::EmptySet);
    }
    check_dim(exemplars.dim(), z.len())?;
    let n = exemplars.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; z.len()];
    for x in exemplars.vectors() {
        let (c, g) = cosine_with_grad(z, x)?;
        value -= c / n;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a -= b / n);
    }
    Ok((value, grad))
}

/// Mean projected cosine between `z` and each neighbor, with its gradient.
fn mean_projected_cosine(z: &[f64], neighbors: &EmbeddingSet, part: &Subspace) -> Result<(f64, Vec<f64>)> {
    if neighbors.is_empty() {
        return Err(Error::EmptySet);
    }
    check_dim(neighbors.dim(), z.len())?;
    check_dim(part.dim, z.len())?;
    let pz = part.project(z)?;
    if norm(&pz) <= ZERO_PROJECTION {
        return Err(Error::ZeroProjection("z".into()));
    }
    let n = neighbors.len() as f64;
    let mut value = 0.0;
    let mut gcoord = vec![0.0; part.len()];
    for nb in neighbors {
        let pn = part.project(&nb.vector)?;
        if norm(&pn) <= ZERO_PROJECTION {
            return Err(Error::ZeroProjection(nb.name.clone()));
        }
        let (c, g) = cosine_with_grad(&pz, &pn)?;
        value += c / n;
        gcoord.iter_mut().zip(&g).for_each(|(a, b)| *a += b / n);
    }
    Ok((value, part.lift(&gcoord)))
}

/// Projected cosine of `z` to each neighbor, in neighbor order.
pub fn projected_similarities(z: &[f64], neighbors: &EmbeddingSet, part: &Subspace) -> Result<Vec<f64>> {
    let pz = part.project(z)?;
    neighbors
        .vectors()
        .map(|v| crate::emb::cosine_sim(&pz, &part.project(v)?))
        .collect()
}

pub fn loss_coarse(z: &[f64], coarse: &EmbeddingSet, coarse_part: &Subspace) -> Result<(f64, Vec<f64>)> {
    let (sim, g) = mean_projected_cosine(z, coarse, coarse_part)?;
    Ok((1.0 - sim, g.into_iter().map(|x| -x).collect()))
}

pub fn loss_fine(z: &[f64], fine: &EmbeddingSet, fine_part: &Subspace) -> Result<(f64, Vec<f64>)> {
    mean_projected_cosine(z, fine, fine_part)
}

/// Everything the total loss needs besides `z`.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub exemplars: &'a EmbeddingSet,
    pub neighborhood: &'a NeighborhoodSpec,
    pub coarse_part: &'a Subspace,
    pub fine_part: &'a Subspace,
    pub weights: LossWeights,
}

impl Objective<'_> {
    /// Loss breakdown and gradient of the weighted total. Terms with zero
    /// weight are still evaluated so the breakdown is always complete.
    pub fn evaluate(&self, z: &[f64]) -> Result<(LossBreakdown, Vec<f64>)> {
        total_loss(
            z,
            self.exemplars,
            self.neighborhood,
            self.coarse_part,
            self.fine_part,
            self.weights,
        )
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.evaluate(z)?.0.total)
    }
}

pub fn total_loss(
    z: &[f64],
    exemplars: &EmbeddingSet,
    neighborhood: &NeighborhoodSpec,
    coarse_part: &Subspace,
    fine_part: &Subspace,
    weights: LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let (img_align, mut grad) = loss_img_align(z, exemplars)?;
    let (coarse, gc) = loss_coarse(z, &neighborhood.coarse, coarse_part)?;
    let (fine, gf) = loss_fine(z, &neighborhood.fine, fine_part)?;
    for ((g, c), f) in grad.iter_mut().zip(&gc).zip(&gf) {
        *g += weights.lambda1 * c + weights.lambda2 * f;
    }
    let total = img_align + weights.lambda1 * coarse + weights.lambda2 * fine;
    Ok((
        LossBreakdown {
            img_align,
            coarse,
            fine,
            total,
        },
        grad,
    ))
}

/// Largest per-coordinate relative error between central differences of `f`
/// at `z` and `analytic`, measured as `|fd - an| / max(1e-8, |fd| + |an|)`.
pub fn gradcheck<F>(f: F, analytic: &[f64], z: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    check_dim(z.len(), analytic.len())?;
    let mut probe = z.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..z.len() {
        probe[i] = z[i] + h;
        let up = f(&probe)?;
        probe[i] = z[i] - h;
        let down = f(&probe)?;
        probe[i] = z[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!("f at coordinate {i}")));
        }
        let fd = (up - down) / (2.0 * h);
        let an = analytic[i];
        worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-8));
    }
    Ok(worst)
}
