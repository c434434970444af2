//! Post-selected CHSH value of the reference threshold model compared with
//! the quantum prediction and the local bound.
//!
//!     cargo run --release --example chsh_violation

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chvlab::engine::{simulate_table, ModelPlugin, ThresholdDetectionModel};
use chvlab::model::Setting;
use chvlab::qm::chsh_prediction;
use chvlab::stats::{chsh_from_tables, ChshLabels};

fn main() -> chvlab::Result<()> {
    let model = ThresholdDetectionModel::singlet_reference();
    let a = [Setting::new("a", 0.0, 0.0)?, Setting::new("a'", PI / 2.0, 0.0)?];
    let b = [Setting::new("b", PI / 4.0, 0.0)?, Setting::new("b'", 3.0 * PI / 4.0, 0.0)?];

    let mut tables = BTreeMap::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let t = simulate_table(&model, x, y, 1_000_000, (2 * i + j) as u64)?;
            tables.insert(t.pair_key(), t);
        }
    }
    let labels = ChshLabels::new("a", "a'", "b", "b'");
    let (s, parts) = chsh_from_tables(&tables, &labels)?;
    for (pair, e) in labels.pairs().iter().zip(&parts) {
        println!("E({}) = {:+.4} ± {:.4}  ({} of 1e6 trials kept)", pair, e.e_hat, e.std_err, e.n_used);
    }
    let qm = chsh_prediction(&a[0], &a[1], &b[0], &b[1], 1.0)?;
    println!("S = {:.4} ± {:.4}   quantum {:.4}   local bound 2", s.s, s.sigma, qm);
    println!("model `{}` visibility {}", model.name(), model.visibility());
    Ok(())
}
