//! Rank fine-negative candidates by closeness to the exemplar images and
//! build a class neighborhood.

use subspace_embed::fixtures::collapse;
use subspace_embed::neighborhood::{build_neighborhood, rank_fine_negatives};

fn main() -> subspace_embed::Result<()> {
    let f = collapse();
    let target = &f.targets[0];
    println!("class {}: {} exemplars", target.name(), target.exemplars.len());

    let candidates = f.vocab.select(
        f.vocab
            .names()
            .filter(|n| *n != target.name() && !target.spec.coarse.iter().any(|c| c == n)),
    )?;
    for c in rank_fine_negatives(&candidates, &target.exemplars, candidates.len())? {
        println!("  {:>12}  mean image similarity {:.3}", c.name, c.score);
    }

    let hood = build_neighborhood(&target.spec, &f.vocab, &target.exemplars, 2)?;
    let names = |s: &subspace_embed::emb::EmbeddingSet| s.names().map(str::to_string).collect::<Vec<_>>();
    println!("coarse: {:?}", names(&hood.coarse));
    println!("fine:   {:?}", names(&hood.fine));
    Ok(())
}
