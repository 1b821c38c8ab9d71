//! Finite-strain bookkeeping and dual potentials: push the referential
//! induction forward through a deformation, recover the magnetic field, and
//! pass between the magnetization potential and its induction-based dual.
//!
//! Run with: cargo run --example finite_strain_transforms

use maghom::fenchel::{
    builtin_theta, dual_h_potential, magnetization_from_b, phi_from_psi_hat,
};
use maghom::material::{eulerian_induction, lagrangian_h};
use nalgebra::{Matrix3, Vector3};

fn main() -> maghom::Result<()> {
    // Volumetric expansion F = 2 I: the Eulerian induction scales by
    // F / det F = 1/4.
    let f = Matrix3::identity() * 2.0;
    let b_ref = Vector3::new(1.0, 0.0, 0.0);
    let b_cur = eulerian_induction(&f, &b_ref)?;
    println!("F = 2I, B_ref = e1  ->  B_cur = {:?}  (expected e1/4)", b_cur.as_slice());
    assert!((b_cur - b_ref / 4.0).norm() <= 1e-14);

    // Uniaxial stretch diag(2,1,1): H = F^T F B / (mu0 J) - M.
    let f = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
    let h = lagrangian_h(&f, &b_ref, &Vector3::zeros(), 1.0)?;
    println!("F = diag(2,1,1), M = 0  ->  H = {:?}  (expected 2 e1)", h.as_slice());
    assert!((h - Vector3::new(2.0, 0.0, 0.0)).norm() <= 1e-14);

    // Dual potentials: for the quadratic magnetization energy
    // psi_hat(M) = (a/2)|M|^2 the excess induction potential is
    //   Phi(B) = -( psi_hat + (mu0/2)|.|^2 )*(B) = -|B|^2 / (2 (a + mu0));
    // adding the vacuum term gives the full linear response
    //   |B|^2/(2 mu0) - |B|^2/(2 (a + mu0)).
    let a = 3.0;
    let mu0 = 1.0;
    let psi_hat = builtin_theta("quadratic", &serde_json::json!({"c": a}))?;
    let b = [0.8, 0.0, 0.6];
    let value = phi_from_psi_hat(psi_hat.as_ref(), mu0, &[], &b)?;
    let b2: f64 = b.iter().map(|x| x * x).sum();
    let exact = -b2 / (2.0 * (a + mu0));
    println!("Phi(B) from psi_hat: {value:.10}  closed form {exact:.10}  |diff| = {:.2e}",
        (value - exact).abs());
    assert!((value - exact).abs() <= 1e-6);
    let full = b2 / (2.0 * mu0) + value;
    println!("full potential |B|^2/(2 mu0) + Phi(B) = {full:.10}");

    // Constitutive maps from the potentials. The magnetization map takes
    // the excess over the vacuum energy; the field map takes the full
    // potential. With mu0 = 1 they must satisfy H = B - M.
    struct Full;
    impl maghom::fenchel::ParamFunction for Full {
        fn param_dim(&self) -> usize { 0 }
        fn eval(&self, _g: &[f64], b: &[f64; 3]) -> f64 {
            let r2: f64 = b.iter().map(|x| x * x).sum();
            r2 / 2.0 - r2 / 8.0
        }
        fn growth(&self) -> Option<maghom::fenchel::GrowthConstants> { None }
    }
    struct Excess;
    impl maghom::fenchel::ParamFunction for Excess {
        fn param_dim(&self) -> usize { 0 }
        fn eval(&self, _g: &[f64], b: &[f64; 3]) -> f64 {
            -b.iter().map(|x| x * x).sum::<f64>() / 8.0
        }
        fn growth(&self) -> Option<maghom::fenchel::GrowthConstants> { None }
    }
    let m = magnetization_from_b(&Excess, &[], &b);
    let h = dual_h_potential(&Full, &[], &b);
    println!("M(B) = {m:?}  (expected B/4)");
    println!("H(B) = {h:?}  (expected 3B/4)");
    for i in 0..3 {
        assert!((h[i] - (b[i] - m[i])).abs() <= 1e-6, "H = B - M must hold at mu0 = 1");
    }
    println!("transforms agree with the closed forms.");
    Ok(())
}
