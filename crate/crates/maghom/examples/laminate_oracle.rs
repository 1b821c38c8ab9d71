//! Closed-form validation: a half/half laminate of permeabilities mu1 = 1
//! and mu2 = 3. Flux normal to the layers homogenizes to the harmonic-type
//! mean (energy <1/(2 mu)> = 1/3), tangential flux to the arithmetic mean
//! (energy 1/(2 <mu>) = 1/4).
//!
//! Run with: cargo run --example laminate_oracle

use maghom::cell::{solve_cell, CellProblemSpec, SolverOpts};
use maghom::geometry::{InclusionMask, InclusionSpec};
use maghom::material::make_two_phase_magnetic;
use nalgebra::{Matrix3, Vector3};
use std::sync::Arc;

fn main() -> maghom::Result<()> {
    let n = 32;
    let mask = Arc::new(InclusionMask::build(&InclusionSpec::empty(), n)?);
    let model = make_two_phase_magnetic(1.0, 3.0, mask)?;

    for (label, b0, exact) in [
        ("normal (B || e1)    ", Vector3::new(1.0, 0.0, 0.0), 1.0 / 3.0),
        ("tangential (B || e2)", Vector3::new(0.0, 1.0, 0.0), 0.25),
    ] {
        let spec = CellProblemSpec::new(Matrix3::zeros(), b0, 1, n, SolverOpts::default());
        let sol = solve_cell(&model, &spec)?;
        println!(
            "{label}: energy = {:.10}  exact = {:.10}  |diff| = {:.2e}  (div residual {:.1e})",
            sol.energy,
            exact,
            (sol.energy - exact).abs(),
            sol.div_residual
        );
        assert!((sol.energy - exact).abs() <= 1e-3);
    }
    println!("both laminate energies match the closed forms.");
    Ok(())
}
