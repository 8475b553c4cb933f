//! Simulates the two benchmark models and prints a short summary.
//!
//! `cargo run --example simulate_models -- [steps] [seed]`

use dbsmooth::model::{simulate, ClgModel, Ssm1, Ssm1Params, Ssm2, Ssm2Params};

fn describe(name: &str, model: &dyn ClgModel, t: usize, seed: u64) -> dbsmooth::error::Result<()> {
    let tr = simulate(model, t, seed)?;
    let d = model.dims();
    println!("{name}: D_L = {}, D_N = {}, P = {}, {} steps", d.d_l, d.d_n, d.p, tr.len());
    for k in [0, tr.len() / 2, tr.len() - 1] {
        let x = &tr.states[k];
        let n = &x.as_slice()[d.d_l..d.d_l + d.d_n.min(2)];
        println!("  k = {k:3}: first nonlinear components {:.4?}, |y| = {:.3}", n, tr.measurements[k].norm());
    }
    Ok(())
}

fn main() -> dbsmooth::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let t = args.first().and_then(|s| s.parse().ok()).unwrap_or(60);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);

    describe("single target", &Ssm1::new(Ssm1Params::default())?, t, seed)?;
    // target placement is drawn from its own seed
    describe("three targets", &Ssm2::new(Ssm2Params::default(), seed)?, t, seed)?;
    Ok(())
}
