//! Write a small embedding set as EMB1, inspect the bytes and read it back.

use subspace_embed::emb::{cosine_sim, EmbeddingSet};
use subspace_embed::io::{encode_emb1, read_emb1, write_emb1};

fn main() -> subspace_embed::Result<()> {
    let single = EmbeddingSet::from_pairs([("a", vec![1.0, -2.0])])?;
    let bytes = encode_emb1(&single)?;
    println!("single record, {} bytes: {}", bytes.len(), hex::encode(&bytes));

    let set = EmbeddingSet::from_pairs([
        ("dog", vec![0.9, 0.1, 0.0]),
        ("puppy", vec![0.8, 0.3, 0.1]),
        ("cat", vec![0.2, 0.9, 0.1]),
    ])?;
    let path = std::env::temp_dir().join("subembed-example.emb1");
    write_emb1(&set, &path)?;
    let back = read_emb1(&path)?;
    println!(
        "read {} records of dim {} from {}",
        back.len(),
        back.dim(),
        path.display()
    );
    let dog = &back.get("dog").expect("written above").vector;
    for e in back.iter() {
        println!("  cos(dog, {}) = {:.4}", e.name, cosine_sim(dog, &e.vector)?);
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
