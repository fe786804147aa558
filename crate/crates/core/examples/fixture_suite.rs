//! Write the fixture files the `subembed` CLI runs on.
//!
//! ```text
//! cargo run --example fixture_suite -- /tmp/suite
//! subembed fit --config /tmp/suite/anarsa_run.json
//! ```

use subspace_embed::fixtures::write_suite;

fn main() -> subspace_embed::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixture-suite".to_string());
    std::fs::create_dir_all(&dir).map_err(|e| subspace_embed::Error::Format(format!("{dir}: {e}")))?;
    let s = write_suite(&dir)?;
    println!("vocabulary      {}", s.vocab.display());
    for c in &s.run_configs {
        println!("run config      {}", c.display());
    }
    println!("sequence config {}", s.seq_config.display());
    println!(
        "held-out images {} + {}",
        s.held_out.display(),
        s.held_out_labels.display()
    );
    println!(
        "three-class     {} / {}",
        s.three_class_classes.display(),
        s.three_class_images.display()
    );
    println!(
        "hierarchical    {} + {}",
        s.hierarchical.display(),
        s.hierarchical_labels.display()
    );
    Ok(())
}
