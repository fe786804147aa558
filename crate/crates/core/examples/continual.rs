//! Add classes one at a time; earlier embeddings never change.

use subspace_embed::eval::classify_cumulative;
use subspace_embed::fixtures::{continual, continual_config};
use subspace_embed::optim::fit_sequential;

fn main() -> subspace_embed::Result<()> {
    let f = continual(3);
    let classes: Vec<_> = f.tasks.iter().map(|t| t.class.clone()).collect();
    let tests: Vec<_> = f.tasks.iter().map(|t| t.test_images.clone()).collect();
    let registry = fit_sequential(&classes, &f.vocab, &continual_config())?;
    for (entry, result) in registry.entries().iter().zip(classify_cumulative(&registry, &tests)?) {
        println!(
            "after {:>6}: {} classes, cumulative accuracy {:5.1}%  (provenance {}..)",
            entry.embedding.name,
            result.per_class.len(),
            result.accuracy,
            &entry.provenance[..12]
        );
    }
    Ok(())
}
