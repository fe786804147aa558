//! Zero-shot classification, Precision@K retrieval and the mean-image
//! baseline on a tiny labelled set.

use subspace_embed::eval::{classify, mean_image_baseline, precision_at_k};
use subspace_embed::fixtures::three_class;

fn main() -> subspace_embed::Result<()> {
    let (classes, images) = three_class();
    let result = classify(&images, &classes)?;
    println!("classification accuracy {:.2}%", result.accuracy);
    for c in &result.per_class {
        println!("  {:>5}: {}/{}", c.class, c.correct, c.total);
    }

    for class in classes.iter() {
        let r = precision_at_k(&class.vector, &images, 3, &class.name)?;
        println!("P@3 for {:>5}: {:.3}", class.name, r.precision);
    }

    let means = mean_image_baseline(&images)?;
    println!(
        "mean-image baseline accuracy {:.2}%",
        classify(&images, &means)?.accuracy
    );
    Ok(())
}
