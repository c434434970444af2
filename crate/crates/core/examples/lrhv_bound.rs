//! Exhaustive enumeration of the 16 deterministic local strategies, and a
//! sampled mixture that never exceeds the bound.
//!
//!     cargo run --example lrhv_bound

use chvlab::engine::{enumerate_lrhv_chsh, mixture_chsh, DeterministicStrategy};
use chvlab::model::Setting;
use rand::{Rng, SeedableRng};

fn main() -> chvlab::Result<()> {
    let s = |l: &str, t: f64| Setting::new(l, t, 0.0);
    let bound = enumerate_lrhv_chsh(&s("a", 0.0)?, &s("a'", 1.0)?, &s("b", 2.0)?, &s("b'", 3.0)?);
    println!(
        "max |S| = {} over {} strategies, attained by {:?}",
        bound.max_abs_s, bound.strategies_checked, bound.strategy
    );
    for (k, st) in DeterministicStrategy::all().iter().enumerate().take(4) {
        println!("  strategy {k}: {:?}  S = {:+}", st, st.chsh());
    }
    let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(1);
    let worst = (0..10_000)
        .map(|_| {
            let w: [f64; 16] = std::array::from_fn(|_| rng.random::<f64>());
            let total: f64 = w.iter().sum();
            mixture_chsh(&w.map(|x| x / total)).abs()
        })
        .fold(0.0, f64::max);
    println!("largest |S| over 10^4 random mixtures: {worst:.6}");
    Ok(())
}
