//! Optimize one class embedding and follow its loss terms.

use subspace_embed::emb::cosine_sim;
use subspace_embed::eval::nearest_neighbors;
use subspace_embed::fixtures::{collapse, collapse_config};
use subspace_embed::objective::LossWeights;
use subspace_embed::optim::fit_class;

fn main() -> subspace_embed::Result<()> {
    let f = collapse();
    let t = &f.targets[0];
    let config = collapse_config(LossWeights::default());
    let report = fit_class(&t.exemplars, &t.z0, &t.spec, &f.vocab, &config)?;

    println!(
        "class {} fitted over {} steps, basis rank {}",
        report.class_name, report.steps, report.basis_rank
    );
    for p in report.trajectory.iter().step_by(20) {
        let l = p.loss;
        println!(
            "step {:5}: total {:+.4}  align {:+.4}  coarse {:.4}  fine {:+.4}",
            p.step, l.total, l.img_align, l.coarse, l.fine
        );
    }
    let z = &report.embedding.vector;
    println!(
        "drift from start: cos = {:.3}",
        cosine_sim(z, &report.initial_embedding)?
    );
    for n in nearest_neighbors(z, &f.vocab, 4)? {
        println!("  near {:>12} {:.3}", n.name, n.similarity);
    }
    Ok(())
}
