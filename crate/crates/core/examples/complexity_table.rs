//! Memory and flop estimates for the filters and smoothers, plus the
//! task-by-task backward cost of one recursion.

use dbsmooth::complexity::{cost_breakdown, flops_estimate, memory_estimate, Algorithm, BreakdownOptions, Dims};

fn main() -> dbsmooth::error::Result<()> {
    let dims = Dims { d_l: 2, d_n: 2, p: 2, n_p: 100, m: 100, n_i: 1, t: 200 };
    println!("{:<7} {:>12} {:>16}", "alg", "memory", "flops");
    for alg in Algorithm::ALL {
        let flops = flops_estimate(alg, &dims).map_or("-".to_string(), |f| f.to_string());
        println!("{:<7} {:>12} {:>16}", alg.name(), memory_estimate(alg, &dims)?, flops);
    }

    println!("\nbackward recursion cost, joint smoother:");
    let r = cost_breakdown(Algorithm::Dbsa, &dims, &BreakdownOptions::default())?;
    println!("{:#?}", r.per_recursion);

    println!("\njoint smoother flops as M grows:");
    for m in [10, 50, 100, 500] {
        println!("  M = {m:4}: {}", flops_estimate(Algorithm::Dbsa, &Dims { m, ..dims })?);
    }
    Ok(())
}
