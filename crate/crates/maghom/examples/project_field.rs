//! Leray projection of a periodic vector field: make an arbitrary field
//! divergence-free and mean-free, and verify the projection error bound
//! `||B - P B|| <= sqrt(1 + 4 pi^2) * ||div B||_{H^-1}`.
//!
//! Run with: cargo run --example project_field

use maghom::fields::{
    divergence, dual_norm_div, project_div_free_zero_mean, projection_error_constant, Boundary,
    GridVectorField, SpectralWorkspace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> maghom::Result<()> {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut field = GridVectorField::zeros(n, Boundary::Periodic);
    for x in field.data.iter_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }

    let mut ws = SpectralWorkspace::new(n);
    let div_before = divergence(&field, &mut ws)?.max_abs();
    let projected = project_div_free_zero_mean(&field, &mut ws)?;
    let div_after = divergence(&projected, &mut ws)?.max_abs();

    let mut diff = field.clone();
    for (d, p) in diff.data.iter_mut().zip(projected.data.iter()) {
        *d -= p;
    }
    let err = diff.l2_norm();
    let bound = projection_error_constant() * dual_norm_div(&field, &mut ws)?;

    println!("resolution                 : {n}^3");
    println!("max |div B|  before        : {div_before:.6e}");
    println!("max |div B|  after         : {div_after:.6e}");
    println!("mean component after       : {:.3e}", projected.mean().iter().fold(0.0f64, |m, &x| m.max(x.abs())));
    println!("||B - P B||_L2             : {err:.6e}");
    println!("projection error bound     : {bound:.6e}");
    assert!(div_after <= 1e-10);
    assert!(err <= bound * (1.0 + 1e-12));
    println!("bound holds: projection removed only the curl-free excess.");
    Ok(())
}
