//! Convex conjugation of magnetization potentials: closed-form checks for
//! quadratic and power laws, and the Young-Fenchel inequality on random
//! pairs.
//!
//! Run with: cargo run --example fenchel_conjugate

use maghom::fenchel::{builtin_theta, conjugate, ConjugateOpts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> maghom::Result<()> {
    let opts = ConjugateOpts::default();

    // (c/2)|M|^2 conjugates to |B|^2/(2c).
    let quad = builtin_theta("quadratic", &serde_json::json!({"c": 2.0}))?;
    let b = [1.0, -0.5, 0.25];
    let r = conjugate(quad.as_ref(), &[], &b, &opts)?;
    let exact = b.iter().map(|x| x * x).sum::<f64>() / 4.0;
    println!("quadratic  : theta*(B) = {:.8}  closed form {:.8}  |diff| = {:.2e}",
        r.value, exact, (r.value - exact).abs());

    // (c^p/p)|M|^p conjugates to (c^{-p'}/p')|B|^{p'} with 1/p + 1/p' = 1.
    let c = 1.3f64;
    let p = 4.0f64;
    let pc = p / (p - 1.0);
    let pow = builtin_theta("power", &serde_json::json!({"c": c, "p": p}))?;
    let b = [0.0, 2.0, 0.0];
    let r = conjugate(pow.as_ref(), &[], &b, &opts)?;
    let bn = 2.0f64;
    let exact = c.powf(-pc) / pc * bn.powf(pc);
    println!("power p=4  : theta*(B) = {:.8}  closed form {:.8}  |diff| = {:.2e}",
        r.value, exact, (r.value - exact).abs());

    // Young-Fenchel: theta(M) + theta*(B) >= <B, M> for every pair.
    let proto = builtin_theta("prototype", &serde_json::json!({"p": 4.0, "q": 2.0}))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let g = [rng.gen_range(-2.0..2.0)];
        let m: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let b: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let lhs = proto.eval(&g, &m) + conjugate(proto.as_ref(), &g, &b, &opts)?.value;
        let rhs: f64 = b.iter().zip(m.iter()).map(|(x, y)| x * y).sum();
        worst = worst.min(lhs - rhs);
    }
    println!("Young-Fenchel worst margin over 1000 random triples: {worst:.3e} (>= 0 required)");
    assert!(worst >= -1e-9);
    Ok(())
}
