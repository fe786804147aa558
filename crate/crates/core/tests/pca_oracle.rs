//! PCA checked against nalgebra's symmetric eigensolver on the sample covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subspace_embed::emb::{dot, EmbeddingSet};
use subspace_embed::subspace::{fit_pca, fit_pca_with_route, PcaRoute};

fn random_set(seed: u64, n: usize, d: usize) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingSet::from_pairs((0..n).map(|i| (format!("p{i}"), (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())))
        .unwrap()
}

fn oracle_eigenvalues(set: &EmbeddingSet) -> Vec<f64> {
    let (n, d) = (set.len(), set.dim());
    let x = DMatrix::from_row_iterator(n, d, set.vectors().flatten().copied());
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut values: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

#[test]
fn eigenvalues_match_nalgebra_both_routes() {
    for (seed, n, d) in [(0, 30, 6), (1, 7, 12), (2, 12, 12), (3, 40, 3)] {
        let set = random_set(seed, n, d);
        let expected = oracle_eigenvalues(&set);
        for route in [PcaRoute::Covariance, PcaRoute::Gram] {
            let basis = fit_pca_with_route(&set, true, route).unwrap();
            assert_eq!(basis.rank(), (n - 1).min(d), "{route:?} n={n} d={d}");
            for (got, want) in basis.eigenvalues.iter().zip(&expected) {
                assert!((got - want).abs() <= 1e-9 * expected[0], "{route:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn components_are_eigenvectors_of_the_oracle_covariance() {
    let set = random_set(5, 25, 8);
    let expected = oracle_eigenvalues(&set);
    let basis = fit_pca(&set, true).unwrap();
    for (u, lambda) in basis.components.iter().zip(&expected) {
        let variance: f64 = set
            .vectors()
            .map(|v| {
                let c: Vec<f64> = v.iter().zip(&basis.center).map(|(a, m)| a - m).collect();
                dot(u, &c).powi(2)
            })
            .sum::<f64>()
            / (set.len() as f64 - 1.0);
        assert!((variance - lambda).abs() <= 1e-9 * expected[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn routes_agree_up_to_rank(seed in any::<u64>(), n in 3usize..14, d in 2usize..10) {
        let set = random_set(seed, n, d);
        let cov = fit_pca_with_route(&set, true, PcaRoute::Covariance).unwrap();
        let gram = fit_pca_with_route(&set, true, PcaRoute::Gram).unwrap();
        prop_assert_eq!(cov.rank(), gram.rank());
        let top = cov.eigenvalues[0];
        for (a, b) in cov.eigenvalues.iter().zip(&gram.eigenvalues) {
            prop_assert!((a - b).abs() <= 1e-9 * top);
        }
    }
}
