//! Local marginals of every shipped discrete model, exact and sampled,
//! across the remote setting choices.
//!
//!     cargo run --release --example parameter_independence

use std::collections::BTreeMap;

use chvlab::engine::library::{discrete_models, CHSH_LABELS_A, CHSH_LABELS_B};
use chvlab::engine::{exact_joint, simulate_table};
use chvlab::model::{Outcome, Setting};
use chvlab::stats::nosignaling_audit;

fn main() -> chvlab::Result<()> {
    let a = [Setting::new(CHSH_LABELS_A[0], 0.0, 0.0)?, Setting::new(CHSH_LABELS_A[1], 1.0, 0.0)?];
    let b = [Setting::new(CHSH_LABELS_B[0], 0.5, 0.0)?, Setting::new(CHSH_LABELS_B[1], 2.0, 0.0)?];
    for model in discrete_models() {
        println!("{}", model.name);
        for x in &a {
            let p: Vec<String> = b
                .iter()
                .map(|y| {
                    let j = exact_joint(&model, x, y).expect("valid");
                    format!("{}: p(+)={:.4} p(0)={:.4}", y.label(), j.marginal_a(Outcome::Plus), j.marginal_a(Outcome::None))
                })
                .collect();
            println!("  A@{}  {}", x.label(), p.join("  "));
        }
        let mut tables = BTreeMap::new();
        for x in &a {
            for y in &b {
                let t = simulate_table(&model, x, y, 200_000, 3)?;
                tables.insert(t.pair_key(), t);
            }
        }
        println!("  sampled worst z = {:.2}", nosignaling_audit(&tables)?.worst_z);
    }
    Ok(())
}
