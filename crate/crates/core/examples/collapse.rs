//! Two classes with near-identical exemplars: alignment alone collapses them
//! onto one direction; the subspace terms keep them apart.

use subspace_embed::fixtures::{collapse, collapse_config};
use subspace_embed::objective::LossWeights;

fn main() -> subspace_embed::Result<()> {
    let f = collapse();
    let names: Vec<&str> = f.targets.iter().map(|t| t.name()).collect();
    println!("targets {names:?}, {} held-out images", f.held_out.len());
    for (label, weights) in [
        ("alignment only", LossWeights::align_only()),
        ("+ coarse", LossWeights::new(1.0, 0.0)?),
        ("+ coarse + fine", LossWeights::default()),
    ] {
        let o = f.run(&collapse_config(weights))?;
        println!(
            "{label:>16}: mutual cosine {:.3}, accuracy {:5.1}%, image-text cosine {:.3}, max vocab sim {:.3?}",
            o.mutual_cosine, o.accuracy, o.mean_image_text_cosine, o.max_vocab_sim
        );
    }
    Ok(())
}
