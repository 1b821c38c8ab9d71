//! Audit the structural assumptions of the shipped constitutive models:
//! two-sided quadratic growth off the inclusions, the rigid energy
//! dichotomy on them, frame reduction, and weighted Lipschitz bounds —
//! plus the same growth bounds on actual homogenized values.
//!
//! Run with: cargo run --example assumption_audit

use maghom::cell::{FHomOpts, SolverOpts};
use maghom::geometry::{InclusionMask, InclusionSpec};
use maghom::material::{audit_assumptions, make_example1, make_example2, make_example3, ModelParams};
use maghom::surface::{audit_growth_coercivity, audit_lipschitz, tabulate};
use nalgebra::{Matrix3, Vector3};
use std::sync::Arc;

fn main() -> maghom::Result<()> {
    let n = 8;
    let mask = Arc::new(InclusionMask::build(
        &InclusionSpec::ball([0.5, 0.5, 0.5], 0.25),
        n,
    )?);

    for (label, model) in [
        ("uncoupled      ", make_example1(ModelParams::default(), mask.clone())?),
        ("prestrain      ", make_example2(ModelParams::default(), mask.clone())?),
        ("magnetostrictive", make_example3(ModelParams::default(), mask.clone())?),
    ] {
        let report = audit_assumptions(&model, 300, 3.0, 99);
        println!(
            "{label}: C = {:.3}, growth ratios lo {:.3} hi {:.3}, Lipschitz ratio {:.3}, dichotomy {}, all pass: {}",
            report.declared_c,
            report.growth_lower.ratio,
            report.growth_upper.ratio,
            report.lipschitz_soft.ratio,
            report.rigid_dichotomy_ok,
            report.all_pass()
        );
        assert!(report.all_pass());
    }

    // The same two-sided bounds hold for homogenized values.
    let model = make_example1(ModelParams::default(), mask)?;
    let mut e11 = Matrix3::zeros();
    e11[(0, 0)] = 1.0;
    let gs: Vec<Matrix3<f64>> = [0.0, 0.4, 0.8].iter().map(|&t| e11 * t).collect();
    let bs = vec![Vector3::zeros(), Vector3::new(0.7, 0.0, 0.0)];
    let table = tabulate(&model, &gs, &bs, &FHomOpts::default(), &SolverOpts::default())?;
    let growth = audit_growth_coercivity(&table, &model)?;
    let lipschitz = audit_lipschitz(&table)?;
    println!(
        "homogenized table: growth margins lo {:.3e} hi {:.3e} (pass: {}), empirical 2-Lipschitz L = {:.4}",
        growth.worst_lower_margin,
        growth.worst_upper_margin,
        growth.passes(),
        lipschitz.empirical_l
    );
    assert!(growth.passes());
    Ok(())
}
