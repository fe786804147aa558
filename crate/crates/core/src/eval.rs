//! Evaluation harness: zero-shot classification, cumulative accuracy over a
//! class-incremental sequence, Precision@K retrieval, the mean-image
//! baseline, and vocabulary-neighborhood diagnostics.
//!
//! Every ranking breaks ties by input order.

use serde::{Deserialize, Serialize};

use crate::emb::{check_dim, cosine_sim, mean_embedding, EmbeddingSet};
use crate::error::{Error, Result};
use crate::optim::ClassRegistry;
use crate::subspace::{fit_pca, Subspace};

/// Image embeddings with one ground-truth class name each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    images: EmbeddingSet,
    labels: Vec<String>,
}

impl LabeledImageSet {
    pub fn new(images: EmbeddingSet, labels: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Format(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn images(&self) -> &EmbeddingSet {
        &self.images
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    /// Concatenation of several sets, in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LabeledImageSet>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some(first) = iter.next() else {
            return Self::new(EmbeddingSet::new(0), vec![]);
        };
        let mut out = first.clone();
        for p in iter {
            out.images = out.images.concat(&p.images)?;
            out.labels.extend(p.labels.iter().cloned());
        }
        Ok(out)
    }

    /// Distinct labels in first-appearance order.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in &self.labels {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub correct: usize,
    pub total: usize,
    /// Percent; `None` when the class has no images.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassAccuracy>,
    pub correct: usize,
    pub total: usize,
    /// Overall top-1 accuracy in percent.
    pub accuracy: f64,
    /// `confusion[truth][predicted]`, indexed like `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<String>,
}

fn argmax_class(image: &[f64], class_embs: &EmbeddingSet) -> Result<usize> {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, c) in class_embs.vectors().enumerate() {
        let s = cosine_sim(image, c)?;
        if s > best_sim {
            best = i;
            best_sim = s;
        }
    }
    Ok(best)
}

/// Predicts the class whose embedding has the highest cosine with each image.
pub fn classify(images: &LabeledImageSet, class_embs: &EmbeddingSet) -> Result<ClassificationResult> {
    if class_embs.is_empty() {
        return Err(Error::EmptySet);
    }
    check_dim(class_embs.dim(), images.dim())?;
    let classes: Vec<String> = class_embs.names().map(str::to_string).collect();
    let truth: Vec<usize> = images
        .labels
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::UnknownLabel(l.clone()))
        })
        .collect::<Result<_>>()?;

    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    let mut predictions = Vec::with_capacity(images.len());
    for (img, &t) in images.images.vectors().zip(&truth) {
        let p = argmax_class(img, class_embs)?;
        confusion[t][p] += 1;
        predictions.push(classes[p].clone());
    }
    let per_class: Vec<ClassAccuracy> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let total: usize = confusion[i].iter().sum();
            let correct = confusion[i][i];
            ClassAccuracy {
                class: c.clone(),
                correct,
                total,
                accuracy: (total > 0).then(|| 100.0 * correct as f64 / total as f64),
            }
        })
        .collect();
    let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
    let total = images.len();
    Ok(ClassificationResult {
        classes,
        per_class,
        correct,
        total,
        accuracy: if total > 0 {
            100.0 * correct as f64 / total as f64
        } else {
            0.0
        },
        confusion,
        predictions,
    })
}

/// After task `t`, classifies every image from tasks `1..=t` against the first
/// `t` registry entries.
pub fn classify_cumulative(registry: &ClassRegistry, tasks: &[LabeledImageSet]) -> Result<Vec<ClassificationResult>> {
    if tasks.len() > registry.len() {
        return Err(Error::Format(format!(
            "{} tasks but only {} registered classes",
            tasks.len(),
            registry.len()
        )));
    }
    (1..=tasks.len())
        .map(|t| {
            let seen = LabeledImageSet::concat(&tasks[..t])?;
            classify(&seen, &registry.prefix(t)?)
        })
        .collect()
}

/// Mean cosine between each image and its own class embedding.
pub fn mean_image_text_cosine(images: &LabeledImageSet, class_embs: &EmbeddingSet) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut total = 0.0;
    for (img, l) in images.images.vectors().zip(&images.labels) {
        let c = class_embs.get(l).ok_or_else(|| Error::UnknownLabel(l.clone()))?;
        total += cosine_sim(img, &c.vector)?;
    }
    Ok(total / images.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub name: String,
    pub label: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub positive_class: String,
    pub k: usize,
    pub precision: f64,
    pub top: Vec<RankedItem>,
}

/// Fraction of the `k` gallery items most similar to `query` that carry
/// `positive_class`.
pub fn precision_at_k(
    query: &[f64],
    gallery: &LabeledImageSet,
    k: usize,
    positive_class: &str,
) -> Result<RetrievalResult> {
    if k == 0 || gallery.len() < k {
        return Err(Error::GalleryTooSmall {
            needed: k.max(1),
            found: gallery.len(),
        });
    }
    check_dim(gallery.dim(), query.len())?;
    let mut ranked: Vec<RankedItem> = gallery
        .images
        .iter()
        .zip(&gallery.labels)
        .map(|(e, l)| {
            Ok(RankedItem {
                name: e.name.clone(),
                label: l.clone(),
                similarity: cosine_sim(query, &e.vector)?,
            })
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    ranked.truncate(k);
    let hits = ranked.iter().filter(|r| r.label == positive_class).count();
    Ok(RetrievalResult {
        positive_class: positive_class.to_string(),
        k,
        precision: hits as f64 / k as f64,
        top: ranked,
    })
}

/// One normalized mean image embedding per class, named by class, in
/// first-appearance order.
pub fn mean_image_baseline(exemplars: &LabeledImageSet) -> Result<EmbeddingSet> {
    if exemplars.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut out = EmbeddingSet::new(exemplars.dim());
    for class in exemplars.classes() {
        let members: Vec<_> = exemplars
            .images
            .iter()
            .zip(&exemplars.labels)
            .filter(|(_, l)| **l == class)
            .map(|(e, _)| e.clone())
            .collect();
        let set = EmbeddingSet::from_entries(exemplars.dim(), members)?;
        let mut mean = mean_embedding(&set, true)?;
        mean.name = class;
        out.push(mean)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub name: String,
    pub similarity: f64,
}

pub fn nearest_neighbors(z: &[f64], vocab: &EmbeddingSet, n: usize) -> Result<Vec<Neighbor>> {
    if vocab.is_empty() {
        return Err(Error::EmptySet);
    }
    check_dim(vocab.dim(), z.len())?;
    let mut all: Vec<Neighbor> = vocab
        .iter()
        .map(|e| {
            Ok(Neighbor {
                name: e.name.clone(),
                similarity: cosine_sim(z, &e.vector)?,
            })
        })
        .collect::<Result<_>>()?;
    all.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    all.truncate(n);
    Ok(all)
}

/// The single closest vocabulary entry; the semantic-drift scalar.
pub fn max_vocab_sim(z: &[f64], vocab: &EmbeddingSet) -> Result<Neighbor> {
    Ok(nearest_neighbors(z, vocab, 1)?.remove(0))
}

/// Coordinates of each embedding along the set's own top two principal
/// components. The second coordinate is zero when the set is rank one.
pub fn project_2d(set: &EmbeddingSet) -> Result<Vec<[f64; 2]>> {
    if set.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: set.len(),
        });
    }
    let basis = fit_pca(set, true)?;
    let top = Subspace {
        dim: basis.dim,
        center: basis.center.clone(),
        components: basis.components.iter().take(2).cloned().collect(),
    };
    set.vectors()
        .map(|v| {
            let c = top.project(v)?;
            Ok([c[0], c.get(1).copied().unwrap_or(0.0)])
        })
        .collect()
}
