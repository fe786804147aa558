//! Fit through a small frozen text encoder: only the placeholder token moves.

use subspace_embed::emb::cosine_sim;
use subspace_embed::encoder::{PromptTemplate, ToyConfig, ToyTextEncoder};
use subspace_embed::fixtures::{collapse, collapse_config, COLLAPSE_DIM};
use subspace_embed::objective::LossWeights;
use subspace_embed::optim::{fit_class, EncoderMode, FitConfig};

fn main() -> subspace_embed::Result<()> {
    let encoder = ToyTextEncoder::init_frozen(9, ToyConfig::with_out_dim(COLLAPSE_DIM));
    let template = PromptTemplate::photo_of();
    let z = encoder.encode(&template, &encoder.mean_token())?;
    println!(
        "encoder {}.., prompt of {} slots -> dim {}",
        &encoder.checksum()[..12],
        template.len(),
        z.len()
    );

    let f = collapse();
    let t = &f.targets[0];
    let config = FitConfig {
        mode: EncoderMode::Toy,
        seed: 9,
        eta: 1e-2,
        warmup_steps: 50,
        total_steps: 500,
        ..collapse_config(LossWeights::default())
    };
    let report = fit_class(&t.exemplars, &t.z0, &t.spec, &f.vocab, &config)?;
    let first = report.trajectory.first().expect("nonempty").loss;
    println!("loss {:+.4} -> {:+.4}", first.total, report.final_loss().total);
    let mean_image: Vec<f64> = (0..COLLAPSE_DIM)
        .map(|i| t.exemplars.vectors().map(|v| v[i]).sum::<f64>() / t.exemplars.len() as f64)
        .collect();
    println!(
        "cos to mean exemplar: {:.3} -> {:.3}",
        cosine_sim(&report.initial_embedding, &mean_image)?,
        cosine_sim(&report.embedding.vector, &mean_image)?
    );
    Ok(())
}
