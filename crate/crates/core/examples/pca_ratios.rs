//! Fit PCA on a hierarchical point cloud and see which components separate
//! categories rather than individual classes.

use subspace_embed::fixtures::{hierarchical, HIERARCHICAL_SEED};
use subspace_embed::subspace::{fit_pca, pc_ratio_report, suggest_k, DEFAULT_RATIO_THRESHOLD};

fn main() -> subspace_embed::Result<()> {
    let (set, labels) = hierarchical(HIERARCHICAL_SEED, 5, 15, 16);
    let basis = fit_pca(&set, true)?;
    let report = pc_ratio_report(&set, &labels, &basis)?;
    println!("rank {} of {} points in dim {}", basis.rank(), set.len(), set.dim());
    for (i, (lambda, ratio)) in basis.eigenvalues.iter().zip(&report.ratios).take(6).enumerate() {
        println!("PC{}: eigenvalue {lambda:7.3}  cross/within ratio {ratio:5.2}", i + 1);
    }
    let k = suggest_k(&report, DEFAULT_RATIO_THRESHOLD);
    println!("suggested coarse size k = {k}");
    let (coarse, fine) = basis.split(k)?;
    println!(
        "coarse subspace: {} components, fine subspace: {}",
        coarse.len(),
        fine.len()
    );
    Ok(())
}
