//! Finite analyzer apertures: closed-form singlet correlations against
//! direct averaging, and the hidden-variable model with jittered settings.
//!
//!     cargo run --release --example aperture_smearing

use chvlab::engine::{simulate_table, ThresholdDetectionModel};
use chvlab::model::Setting;
use chvlab::qm::singlet_correlation;
use chvlab::quadrature::GaussLegendre;
use chvlab::stats::post_selected_correlation;

fn main() -> chvlab::Result<()> {
    let gl = GaussLegendre::new(20);
    let model = ThresholdDetectionModel::singlet_reference();
    println!("{:>6} {:>6} {:>11} {:>11} {:>11}", "Δ", "w", "closed", "averaged", "model MC");
    for &(delta, w) in &[(0.0, 0.1), (0.5, 0.2), (1.0, 0.4), (2.0, 0.785)] {
        let closed = singlet_correlation(delta, w, w, 1.0)?;
        let averaged = -gl.integrate(-w, w, |u| gl.integrate(-w, w, |v| (delta + u - v).cos())) / (4.0 * w * w);
        let a = Setting::new("a", delta, w)?;
        let b = Setting::new("b", 0.0, w)?;
        let mc = post_selected_correlation(&simulate_table(&model, &a, &b, 400_000, 1)?)?;
        println!("{delta:>6.3} {w:>6.3} {closed:>11.7} {averaged:>11.7} {:>11.4}", mc.e_hat);
    }
    Ok(())
}
