//! Coarse and fine reference neighborhoods for a target class.
//!
//! Candidate names come from configuration. Coarse candidates are taken as
//! given; fine candidates are pruned to the `keep_k` whose text embeddings
//! sit closest to the exemplar images.

use serde::{Deserialize, Serialize};

use crate::emb::{check_dim, cosine_sim, EmbeddingSet};
use crate::error::{Error, Result};

pub const DEFAULT_KEEP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub class_name: String,
    pub coarse: Vec<String>,
    pub fine: Vec<String>,
}

impl CandidateSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |list: &[String]| list.is_empty() || list.contains(&self.class_name);
        if bad(&self.coarse) || bad(&self.fine) {
            return Err(Error::InvalidCandidates(self.class_name.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSpec {
    pub coarse: EmbeddingSet,
    /// Retained hard negatives, highest score first.
    pub fine: EmbeddingSet,
    /// Coarse entries followed by fine entries; the PCA input.
    pub union: EmbeddingSet,
}

/// A candidate and its mean cosine similarity to the exemplars.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub name: String,
    pub score: f64,
}

/// Scores every candidate by mean cosine to the exemplar images.
pub fn score_candidates(candidates: &EmbeddingSet, exemplar_images: &EmbeddingSet) -> Result<Vec<ScoredCandidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if exemplar_images.is_empty() {
        return Err(Error::EmptyExemplars);
    }
    check_dim(candidates.dim(), exemplar_images.dim())?;
    candidates
        .iter()
        .map(|c| {
            let mut total = 0.0;
            for x in exemplar_images.vectors() {
                total += cosine_sim(&c.vector, x)?;
            }
            Ok(ScoredCandidate {
                name: c.name.clone(),
                score: total / exemplar_images.len() as f64,
            })
        })
        .collect()
}

/// Keeps the `keep_k` best-scoring candidates, ordered by score; ties go to
/// the earlier candidate.
pub fn filter_fine_negatives(
    candidates: &EmbeddingSet,
    exemplar_images: &EmbeddingSet,
    keep_k: usize,
) -> Result<EmbeddingSet> {
    let kept = rank_fine_negatives(candidates, exemplar_images, keep_k)?;
    candidates.select(kept.iter().map(|c| c.name.as_str()))
}

/// Like [`filter_fine_negatives`] but returns names with scores.
pub fn rank_fine_negatives(
    candidates: &EmbeddingSet,
    exemplar_images: &EmbeddingSet,
    keep_k: usize,
) -> Result<Vec<ScoredCandidate>> {
    if keep_k == 0 {
        return Err(Error::InsufficientCandidates { needed: 1, found: 0 });
    }
    let mut scored = score_candidates(candidates, exemplar_images)?;
    // sort_by is stable, so equal scores keep input order.
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(keep_k);
    Ok(scored)
}

pub fn build_neighborhood(
    spec: &CandidateSpec,
    text_lookup: &EmbeddingSet,
    exemplar_images: &EmbeddingSet,
    keep_k: usize,
) -> Result<NeighborhoodSpec> {
    spec.validate()?;
    let coarse = text_lookup.select(spec.coarse.iter().map(String::as_str))?;

    let resolvable: Vec<&str> = spec
        .fine
        .iter()
        .map(String::as_str)
        .filter(|n| text_lookup.get(n).is_some())
        .collect();
    if resolvable.len() < keep_k {
        return Err(Error::InsufficientCandidates {
            needed: keep_k,
            found: resolvable.len(),
        });
    }
    let candidates = text_lookup.select(resolvable)?;
    let fine = filter_fine_negatives(&candidates, exemplar_images, keep_k)?;
    let union = coarse.concat(&fine)?;
    Ok(NeighborhoodSpec { coarse, fine, union })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(s: &EmbeddingSet) -> Vec<&str> {
        s.names().collect()
    }

    #[test]
    fn keeps_aligned_candidate() {
        let cands = EmbeddingSet::from_pairs([("b", vec![0.0, 1.0]), ("a", vec![2.0, 0.0])]).unwrap();
        let ex = EmbeddingSet::from_pairs([("x", vec![1.0, 0.0])]).unwrap();
        assert_eq!(names(&filter_fine_negatives(&cands, &ex, 1).unwrap()), vec!["a"]);
        assert_eq!(names(&filter_fine_negatives(&cands, &ex, 5).unwrap()), vec!["a", "b"]);
    }

    #[test]
    fn ties_keep_input_order() {
        let cands = EmbeddingSet::from_pairs([("p", vec![0.0, 1.0]), ("q", vec![0.0, -1.0])]).unwrap();
        let ex = EmbeddingSet::from_pairs([("x", vec![1.0, 0.0])]).unwrap();
        assert_eq!(names(&filter_fine_negatives(&cands, &ex, 1).unwrap()), vec!["p"]);
    }

    #[test]
    fn matches_exhaustive_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v = |n: usize, p: &str| {
            EmbeddingSet::from_pairs(
                (0..n).map(|i| (format!("{p}{i}"), (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())),
            )
            .unwrap()
        };
        let cands = v(6, "c");
        let ex = v(4, "x");
        let kept = filter_fine_negatives(&cands, &ex, 3).unwrap();

        // Oracle: explicit loops, then pick the best three by repeated argmax.
        let mut scores: Vec<(usize, f64)> = cands
            .vectors()
            .enumerate()
            .map(|(i, c)| {
                let mut s = 0.0;
                for x in ex.vectors() {
                    let (mut cx, mut cc, mut xx) = (0.0, 0.0, 0.0);
                    for k in 0..8 {
                        cx += c[k] * x[k];
                        cc += c[k] * c[k];
                        xx += x[k] * x[k];
                    }
                    s += cx / (cc.sqrt() * xx.sqrt());
                }
                (i, s / 4.0)
            })
            .collect();
        let mut expected = vec![];
        for _ in 0..3 {
            let (pos, _) =
                scores.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |best, (p, &(_, s))| if s > best.1 { (p, s) } else { best },
                );
            expected.push(format!("c{}", scores[pos].0));
            scores.remove(pos);
        }
        assert_eq!(names(&kept), expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn empty_inputs() {
        let ex = EmbeddingSet::from_pairs([("x", vec![1.0, 0.0])]).unwrap();
        assert!(matches!(
            filter_fine_negatives(&EmbeddingSet::new(2), &ex, 1),
            Err(Error::EmptyCandidates)
        ));
        assert!(matches!(
            filter_fine_negatives(&ex, &EmbeddingSet::new(2), 1),
            Err(Error::EmptyExemplars)
        ));
    }

    fn lookup() -> EmbeddingSet {
        EmbeddingSet::from_pairs([
            ("Indian sweet", vec![1.0, 0.2, 0.0, 0.0]),
            ("dessert", vec![0.9, 0.3, 0.1, 0.0]),
            ("snack", vec![0.8, -0.2, 0.0, 0.1]),
            ("malapua", vec![0.3, 0.1, 1.0, 0.0]),
            ("kachori", vec![0.2, -0.5, 0.3, 0.4]),
            ("imarti", vec![0.5, 0.4, 0.0, 0.6]),
            ("samosa", vec![0.0, -0.9, 0.1, 0.3]),
            ("ladoo", vec![0.6, 0.6, -0.2, 0.1]),
        ])
        .unwrap()
    }

    fn spec() -> CandidateSpec {
        CandidateSpec {
            class_name: "anarsa".into(),
            coarse: vec!["Indian sweet".into(), "dessert".into(), "snack".into()],
            fine: ["malapua", "kachori", "imarti", "samosa", "ladoo"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    #[test]
    fn neighborhood_sizes_and_retention() {
        let ex =
            EmbeddingSet::from_pairs([("img0", vec![0.2, 0.0, 0.9, 0.1]), ("img1", vec![0.1, 0.1, 1.0, 0.0])]).unwrap();
        let n = build_neighborhood(&spec(), &lookup(), &ex, 3).unwrap();
        assert_eq!(n.union.len(), 6);
        assert_eq!(names(&n.coarse), vec!["Indian sweet", "dessert", "snack"]);
        assert_eq!(n.fine.entries()[0].name, "malapua");
        assert_eq!(&names(&n.union)[..3], &["Indian sweet", "dessert", "snack"]);
    }

    #[test]
    fn neighborhood_errors() {
        let ex = EmbeddingSet::from_pairs([("img0", vec![0.2, 0.0, 0.9, 0.1])]).unwrap();
        let mut s = spec();
        s.coarse.push("sweetmeat".into());
        assert!(matches!(
            build_neighborhood(&s, &lookup(), &ex, 3),
            Err(Error::UnresolvedName(v)) if v == vec!["sweetmeat"]
        ));
        assert!(matches!(
            build_neighborhood(&spec(), &lookup(), &ex, 6),
            Err(Error::InsufficientCandidates { needed: 6, found: 5 })
        ));
        let mut s = spec();
        s.fine.push("anarsa".into());
        assert!(matches!(
            build_neighborhood(&s, &lookup(), &ex, 3),
            Err(Error::InvalidCandidates(_))
        ));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_is_subset_and_sized(
                cands in prop::collection::vec(prop::collection::vec(0.1f64..1.0, 4), 1..8),
                ex in prop::collection::vec(prop::collection::vec(0.1f64..1.0, 4), 1..5),
                keep in 1usize..10,
            ) {
                let c = EmbeddingSet::from_pairs(cands.iter().enumerate().map(|(i, v)| (format!("c{i}"), v.clone()))).unwrap();
                let e = EmbeddingSet::from_pairs(ex.iter().enumerate().map(|(i, v)| (format!("x{i}"), v.clone()))).unwrap();
                let out = filter_fine_negatives(&c, &e, keep).unwrap();
                prop_assert_eq!(out.len(), keep.min(c.len()));
                for e in out.iter() {
                    prop_assert!(c.get(&e.name) == Some(e));
                }

                let mut rev = e.entries().to_vec();
                rev.reverse();
                let e_rev = EmbeddingSet::from_entries(4, rev).unwrap();
                let a = score_candidates(&c, &e).unwrap();
                let b = score_candidates(&c, &e_rev).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x.score - y.score).abs() <= 1e-9);
                }
            }
        }
    }
}
