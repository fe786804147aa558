//! Dense-vector primitives: named embeddings, ordered embedding sets, and the
//! cosine machinery every other module builds on.
//!
//! Vectors are stored as `f64`. Nothing here assumes stored vectors are
//! normalized; norms are divided out on the fly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const EPS_NORM: f64 = 1e-12;

/// A named real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub name: String,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(name: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Ordered collection of embeddings sharing one dimension, with unique names.
///
/// Order is significant: every tie-break in the crate falls back to it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    entries: Vec<Embedding>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a set, checking dimension, finiteness and name uniqueness.
    pub fn from_entries(dim: usize, entries: Vec<Embedding>) -> Result<Self> {
        let mut set = Self::new(dim);
        for e in entries {
            set.push(e)?;
        }
        Ok(set)
    }

    /// Convenience constructor from `(name, vector)` pairs; the dimension is
    /// taken from the first entry.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        let entries: Vec<Embedding> = pairs.into_iter().map(|(n, v)| Embedding::new(n, v)).collect();
        let dim = entries.first().map(Embedding::dim).ok_or(Error::EmptySet)?;
        Self::from_entries(dim, entries)
    }

    pub fn push(&mut self, e: Embedding) -> Result<()> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: e.dim(),
            });
        }
        if e.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(e.name));
        }
        if self.get(&e.name).is_some() {
            return Err(Error::DuplicateName(e.name));
        }
        self.entries.push(e);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Embedding> {
        self.entries.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Embedding> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|e| e.vector.as_slice())
    }

    /// Returns a new set holding the named entries, in the requested order.
    pub fn select<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut out = Self::new(self.dim);
        let mut missing = Vec::new();
        for n in names {
            match self.get(n) {
                Some(e) => out.push(e.clone())?,
                None => missing.push(n.to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::UnresolvedName(missing))
        }
    }

    /// Concatenates two sets; names must stay unique.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for e in other.iter() {
            out.push(e.clone())?;
        }
        Ok(out)
    }

    pub fn into_entries(self) -> Vec<Embedding> {
        self.entries
    }
}

impl<'a> IntoIterator for &'a EmbeddingSet {
    type Item = &'a Embedding;
    type IntoIter = std::slice::Iter<'a, Embedding>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > EPS_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(raw_cosine(a, b)?.clamp(-1.0, 1.0))
}

/// Unclamped cosine; losses use this so values and gradients stay consistent.
pub(crate) fn raw_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if !(na > EPS_NORM && nb > EPS_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Cosine of `a` against `b` together with its gradient with respect to `a`:
/// `b / (|a||b|) - cos * a / |a|^2`.
pub(crate) fn cosine_with_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (na, nb) = (norm(a), norm(b));
    if !(na > EPS_NORM && nb > EPS_NORM) {
        return Err(Error::ZeroVector);
    }
    let c = dot(a, b) / (na * nb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - c * x / (na * na))
        .collect();
    Ok((c, grad))
}

/// Componentwise mean of a set, optionally normalized.
pub fn mean_embedding(set: &EmbeddingSet, normalize_result: bool) -> Result<Embedding> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut acc = vec![0.0; set.dim()];
    for v in set.vectors() {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = set.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    if normalize_result {
        acc = l2_normalize(&acc)?;
    }
    Ok(Embedding::new("mean", acc))
}

/// `|a| x |b|` matrix of cosine similarities, row-major by `a`.
pub fn pairwise_sims(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<Vec<Vec<f64>>> {
    check_dim(a.dim(), b.dim())?;
    a.vectors()
        .map(|x| b.vectors().map(|y| cosine_sim(x, y)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn normalize_three_four_five() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn normalize_random_512_has_unit_norm_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_vec(&mut rng, 512);
        let u = l2_normalize(&v).unwrap();
        let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        let uu = l2_normalize(&u).unwrap();
        assert!(u.iter().zip(&uu).all(|(a, b)| (a - b).abs() < 1e-7));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.707_106_8).abs() < 1e-7);
        assert!(matches!(
            cosine_sim(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn cosine_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let a = random_vec(&mut rng, 64);
        let b = random_vec(&mut rng, 64);
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..64 {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        let oracle = ab / (aa.sqrt() * bb.sqrt());
        assert!((cosine_sim(&a, &b).unwrap() - oracle).abs() < 1e-7);
    }

    #[test]
    fn mean_examples() {
        let s = EmbeddingSet::from_pairs([("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]).unwrap();
        let m = mean_embedding(&s, true).unwrap();
        assert!((m.vector[0] - 0.707_1).abs() < 1e-4 && (m.vector[1] - 0.707_1).abs() < 1e-4);

        let s = EmbeddingSet::from_pairs([("v", vec![0.3, -2.0, 5.0])]).unwrap();
        assert_eq!(mean_embedding(&s, false).unwrap().vector, vec![0.3, -2.0, 5.0]);

        let s = EmbeddingSet::from_pairs([("a", vec![1.0, 0.0]), ("b", vec![-1.0, 0.0])]).unwrap();
        assert!(matches!(mean_embedding(&s, true), Err(Error::ZeroVector)));
        assert!(matches!(
            mean_embedding(&EmbeddingSet::new(2), false),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn pairwise_examples() {
        let basis = EmbeddingSet::from_pairs([
            ("x", vec![1.0, 0.0, 0.0]),
            ("y", vec![0.0, 1.0, 0.0]),
            ("z", vec![0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let m = pairwise_sims(&basis, &basis).unwrap();
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = EmbeddingSet::from_pairs((0..5).map(|i| (format!("a{i}"), random_vec(&mut rng, 9)))).unwrap();
        let b = EmbeddingSet::from_pairs((0..7).map(|i| (format!("b{i}"), random_vec(&mut rng, 9)))).unwrap();
        let m = pairwise_sims(&a, &b).unwrap();
        assert_eq!((m.len(), m[0].len()), (5, 7));
        for (i, x) in a.vectors().enumerate() {
            for (j, y) in b.vectors().enumerate() {
                let mut ab = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                for k in 0..9 {
                    ab += x[k] * y[k];
                    aa += x[k] * x[k];
                    bb += y[k] * y[k];
                }
                assert!((m[i][j] - ab / (aa * bb).sqrt()).abs() < 1e-7);
            }
        }
        let one = a.select(["a0"]).unwrap();
        let onb = b.select(["b0"]).unwrap();
        assert_eq!(
            pairwise_sims(&one, &onb).unwrap()[0][0],
            cosine_sim(&a.entries()[0].vector, &b.entries()[0].vector).unwrap()
        );
    }

    #[test]
    fn set_rejects_duplicates_and_wrong_dim() {
        let mut s = EmbeddingSet::new(2);
        s.push(Embedding::new("a", vec![1.0, 2.0])).unwrap();
        assert!(matches!(
            s.push(Embedding::new("a", vec![0.0, 1.0])),
            Err(Error::DuplicateName(_))
        ));
        assert!(matches!(
            s.push(Embedding::new("b", vec![0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.push(Embedding::new("c", vec![f64::NAN, 0.0])),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(s.select(["a", "q"]), Err(Error::UnresolvedName(v)) if v == vec!["q"]));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn nonzero_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-10.0f64..10.0, d).prop_filter("nonzero", |v| norm(v) > 1e-3)
        }

        proptest! {
            #[test]
            fn cosine_symmetric_and_scale_invariant(a in nonzero_vec(12), b in nonzero_vec(12)) {
                let ab = cosine_sim(&a, &b).unwrap();
                prop_assert!((ab - cosine_sim(&b, &a).unwrap()).abs() <= 1e-12);
                for alpha in [0.5, 2.0, 10.0] {
                    let sa: Vec<f64> = a.iter().map(|x| alpha * x).collect();
                    prop_assert!((cosine_sim(&sa, &b).unwrap() - ab).abs() <= 1e-6);
                }
            }

            #[test]
            fn normalized_self_similarity_is_one(vs in prop::collection::vec(nonzero_vec(6), 1..6)) {
                let set = EmbeddingSet::from_pairs(
                    vs.iter().enumerate().map(|(i, v)| (format!("e{i}"), l2_normalize(v).unwrap())),
                ).unwrap();
                let m = pairwise_sims(&set, &set).unwrap();
                for (i, row) in m.iter().enumerate() {
                    prop_assert!((row[i] - 1.0).abs() <= 1e-6);
                }
            }
        }
    }
}
