//! Compare analytic gradients of every loss term, and of the toy encoder's
//! vector-Jacobian product, against central finite differences.

use subspace_embed::fixtures::{gradcheck_suite, LOSS_GRAD_TOL, VJP_GRAD_TOL};

fn main() -> subspace_embed::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let s = gradcheck_suite(seed, 100)?;
    println!("seed {seed}, {} random instances, worst relative error:", s.instances);
    for (name, err, tol) in [
        ("image alignment", s.img_align, LOSS_GRAD_TOL),
        ("coarse", s.coarse, LOSS_GRAD_TOL),
        ("fine", s.fine, LOSS_GRAD_TOL),
        ("total", s.total, LOSS_GRAD_TOL),
        ("encoder vjp", s.encoder_vjp, VJP_GRAD_TOL),
    ] {
        println!("  {name:>15}: {err:.2e} (tolerance {tol:.0e})");
    }
    println!("{}", if s.passed() { "all within tolerance" } else { "FAILED" });
    Ok(())
}
