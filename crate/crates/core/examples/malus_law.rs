//! Photon-counting polarizer chains: R10, R21 and a C3 sweep against
//! cos²(θ − θ′).
//!
//!     cargo run --release --example malus_law

use chvlab::beam::{default_deltas, malus_sweep, BeamConfig, BeamRuns};

fn main() -> chvlab::Result<()> {
    let config = BeamConfig {
        detector_efficiency: 0.7,
        polarizer_extinction: 0.01,
        ..BeamConfig::new(100.0, 10_000, 5)
    };
    let runs = BeamRuns::run(&config, 0.0, std::f64::consts::PI / 6.0)?;
    let s = runs.summary(&config, true)?;
    let fmt = |r: chvlab::beam::Ratio| format!("{:.4} ± {:.4}", r.r, r.sigma.unwrap_or(f64::NAN));
    println!("<I0> = {:.2}  <I1> = {:.2}  <I2> = {:.2}  <I3> = {:.2}", s.i0.mean, s.i1.mean, s.i2.mean, s.i3.mean);
    println!("R10 = {}   R21 = {}   R31 = {} (cos² = {:.4})", fmt(s.r10), fmt(s.r21), fmt(s.r31), s.malus_r31);
    println!("{:>8} {:>8} {:>8} {:>8}", "Δθ", "R31", "σ", "cos²");
    for row in malus_sweep(&config, 0.0, &default_deltas())? {
        println!("{:>8.4} {:>8.4} {:>8.4} {:>8.4}", row.delta, row.r31, row.sigma.unwrap_or(f64::NAN), row.malus);
    }
    Ok(())
}
