//! Tabulate the effective energy over a product grid of macroscopic states
//! and print the CSV that the command-line tool would write.
//!
//! Run with: cargo run --example effective_table

use maghom::cell::{FHomOpts, SolverOpts};
use maghom::geometry::{InclusionMask, InclusionSpec};
use maghom::material::{make_example1, ModelParams};
use maghom::surface::tabulate;
use nalgebra::{Matrix3, Vector3};
use std::sync::Arc;

fn main() -> maghom::Result<()> {
    let n = 16;
    let mask = Arc::new(InclusionMask::build(
        &InclusionSpec::ball([0.5, 0.5, 0.5], 0.25),
        n,
    )?);
    let model = make_example1(ModelParams::default(), mask)?;

    let mut e11 = Matrix3::zeros();
    e11[(0, 0)] = 1.0;
    let g_samples: Vec<Matrix3<f64>> = [-0.2, 0.0, 0.2].iter().map(|&t| e11 * t).collect();
    let b_samples = vec![
        Vector3::zeros(),
        Vector3::new(0.5, 0.0, 0.0),
        Vector3::new(0.0, 0.5, 0.0),
    ];

    let table = tabulate(
        &model,
        &g_samples,
        &b_samples,
        &FHomOpts::default(),
        &SolverOpts::default(),
    )?;

    println!("model {} at n = {}, digest {}", table.model_id, table.n, &table.config_digest[..16]);
    println!("{}", table.to_csv());
    assert_eq!(table.points.len(), 9);
    assert!(table.failures.is_empty());

    // The zero state costs nothing; every other state costs something.
    let zero = &table.points[3 * 1 + 0]; // g index 1 (t = 0), b index 0
    println!("value at (0, 0): {:.3e}", zero.value);
    assert!(zero.value.abs() <= 1e-10);
    Ok(())
}
