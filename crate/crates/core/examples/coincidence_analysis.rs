//! Turns two raw click logs into coincidence trials and a statistics
//! report. Uses the sample logs shipped in `configs/`.
//!
//!     cargo run --example coincidence_analysis

use std::path::Path;

use chvlab::model::Setting;
use chvlab::stats::{coincidence_match, post_selected_correlation, read_events, tabulate};

fn main() -> chvlab::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let a = read_events(&dir.join("events_a.csv"))?;
    let b = read_events(&dir.join("events_b.csv"))?;
    let matched = coincidence_match(&a, &b, 100, |label| Setting::new(label, 0.0, 0.0))?;
    println!("{} windows with clicks, {} + {} extra clicks rejected", matched.trials.len(), matched.rejected_a, matched.rejected_b);
    for t in &matched.trials {
        println!(
            "  window {:>2}: A {}@{:<2}  B {}@{}",
            t.window_index,
            t.outcome_a.value(),
            t.setting_a.label(),
            t.outcome_b.value(),
            t.setting_b.label()
        );
    }
    for (pair, table) in tabulate(&matched.trials) {
        match post_selected_correlation(&table) {
            Ok(c) => println!("E({pair}) = {:+.3} from {} coincidences, {} discarded", c.e_hat, c.n_used, c.n_discarded),
            Err(e) => println!("E({pair}): {e}"),
        }
    }
    Ok(())
}
