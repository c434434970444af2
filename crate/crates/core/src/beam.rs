//! Photon-counting simulation of polarizer chains.
//!
//! Photons are independent classical carriers of a polarization angle. Each
//! window draws a Poisson number of photons; a polarizer at `α` transmits a
//! photon at `φ` with probability `(1−ε)cos²(φ−α) + ε sin²(φ−α)` and resets
//! its angle to `α`. Detection with efficiency `η` happens independently at
//! every recorded stage and never alters the photon.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::rng::{trial_rng, Stream};
use crate::error::{Error, Result};
use crate::qm::malus_ratio;

pub const MAX_EXTINCTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Polarization {
    #[default]
    Unpolarized,
    Linear { angle: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    /// Expected photons per window.
    pub mean_rate: f64,
    #[serde(default)]
    pub input_polarization: Polarization,
    #[serde(default = "unit")]
    pub detector_efficiency: f64,
    #[serde(default)]
    pub polarizer_extinction: f64,
    pub window_count: u64,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

impl BeamConfig {
    pub fn new(mean_rate: f64, window_count: u64, seed: u64) -> Self {
        BeamConfig {
            mean_rate,
            input_polarization: Polarization::Unpolarized,
            detector_efficiency: 1.0,
            polarizer_extinction: 0.0,
            window_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_rate.is_finite() && self.mean_rate > 0.0) {
            return Err(Error::param("mean_rate", "must be positive and finite"));
        }
        let eta = self.detector_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param("detector_efficiency", format!("{eta} outside (0, 1]")));
        }
        let eps = self.polarizer_extinction;
        if !(0.0..=MAX_EXTINCTION).contains(&eps) {
            return Err(Error::param("polarizer_extinction", format!("{eps} outside [0, {MAX_EXTINCTION}]")));
        }
        if self.window_count == 0 {
            return Err(Error::param("window_count", "must be at least 1"));
        }
        if let Polarization::Linear { angle } = self.input_polarization {
            if !angle.is_finite() {
                return Err(Error::NonFinite("input_polarization.angle"));
            }
        }
        Ok(())
    }
}

/// Measurement contexts. Input and output stages are, respectively:
/// C1 source and after P1(θ); C2 after P1(θ) and after P2(θ);
/// C3 after P1(θ) and after P2(θ′).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Context {
    C1 { theta: f64 },
    C2 { theta: f64 },
    C3 { theta: f64, theta_prime: f64 },
}

impl Context {
    /// Stage indices `(input, output)` used in the count CSV.
    pub fn stages(&self) -> (u8, u8) {
        match self {
            Context::C1 { .. } => (0, 1),
            Context::C2 { .. } => (1, 2),
            Context::C3 { .. } => (1, 3),
        }
    }

    /// P1 angle when the input stage sits behind a polarizer.
    fn preparer(&self) -> Option<f64> {
        match *self {
            Context::C1 { .. } => None,
            Context::C2 { theta } | Context::C3 { theta, .. } => Some(theta),
        }
    }

    fn analyzer(&self) -> f64 {
        match *self {
            Context::C1 { theta } | Context::C2 { theta } => theta,
            Context::C3 { theta_prime, .. } => theta_prime,
        }
    }
}

/// Per-window intensities with the window length normalized to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityRun {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// `None` with a single window.
    pub std_err: Option<f64>,
}

impl IntensityRun {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = if samples.is_empty() { 0.0 } else { samples.iter().sum::<f64>() / n };
        let std_err = (samples.len() > 1).then(|| (sample_variance(&samples, mean) / n).sqrt());
        IntensityRun { samples, mean, std_err }
    }

    /// Variance over mean; 1 for Poisson counts.
    pub fn dispersion_index(&self) -> Option<f64> {
        (self.samples.len() > 1 && self.mean > 0.0)
            .then(|| sample_variance(&self.samples, self.mean) / self.mean)
    }
}

fn sample_variance(x: &[f64], mean: f64) -> f64 {
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub r: f64,
    /// `None` when either run has no standard error.
    pub sigma: Option<f64>,
}

/// `⟨I_num⟩/⟨I_den⟩` with first-order error propagation.
pub fn intensity_ratio(numer: &IntensityRun, denom: &IntensityRun) -> Result<Ratio> {
    if denom.mean <= 0.0 {
        return Err(Error::param("denominator", "mean intensity must be positive"));
    }
    let r = numer.mean / denom.mean;
    // σ_R = R·√((σn/n)² + (σd/d)²), written to stay finite when n = 0
    let sigma = match (numer.std_err, denom.std_err) {
        (Some(sn), Some(sd)) => Some(((sn / denom.mean).powi(2) + (r * sd / denom.mean).powi(2)).sqrt()),
        _ => None,
    };
    Ok(Ratio { r, sigma })
}

fn transmit(rng: &mut impl Rng, phi: f64, alpha: f64, eps: f64) -> bool {
    let c2 = (phi - alpha).cos().powi(2);
    rng.random::<f64>() < (1.0 - eps) * c2 + eps * (1.0 - c2)
}

/// Counts at the input and output stage of one window.
fn simulate_window(config: &BeamConfig, context: &Context, window: u64) -> (u64, u64) {
    let mut rng = trial_rng(config.seed, window, Stream::Source);
    let mut det = trial_rng(config.seed, window, Stream::InstrumentA);
    let n = Poisson::new(config.mean_rate).expect("validated rate").sample(&mut rng) as u64;
    let eta = config.detector_efficiency;
    let eps = config.polarizer_extinction;
    let (mut input, mut output) = (0, 0);
    for _ in 0..n {
        let mut phi = match config.input_polarization {
            Polarization::Unpolarized => rng.random::<f64>() * PI,
            Polarization::Linear { angle } => angle,
        };
        if let Some(theta) = context.preparer() {
            if !transmit(&mut rng, phi, theta, eps) {
                continue;
            }
            phi = theta;
        }
        if det.random::<f64>() < eta {
            input += 1;
        }
        if transmit(&mut rng, phi, context.analyzer(), eps) && det.random::<f64>() < eta {
            output += 1;
        }
    }
    (input, output)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRun {
    pub context: Context,
    pub input: IntensityRun,
    pub output: IntensityRun,
}

impl ContextRun {
    pub fn ratio(&self) -> Result<Ratio> {
        intensity_ratio(&self.output, &self.input)
    }

    /// Writes `window_index,stage,count` rows, input stage first.
    pub fn write_counts<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["window_index", "stage", "count"])?;
        let (si, so) = self.context.stages();
        for (i, (a, b)) in self.input.samples.iter().zip(&self.output.samples).enumerate() {
            w.write_record([i.to_string(), si.to_string(), (*a as u64).to_string()])?;
            w.write_record([i.to_string(), so.to_string(), (*b as u64).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_context(config: &BeamConfig, context: Context) -> Result<ContextRun> {
    config.validate()?;
    let counts: Vec<(u64, u64)> = (0..config.window_count)
        .into_par_iter()
        .map(|w| simulate_window(config, &context, w))
        .collect();
    let (input, output): (Vec<f64>, Vec<f64>) =
        counts.into_iter().map(|(a, b)| (a as f64, b as f64)).unzip();
    Ok(ContextRun {
        context,
        input: IntensityRun::from_samples(input),
        output: IntensityRun::from_samples(output),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub r31: f64,
    pub sigma: Option<f64>,
    pub malus: f64,
}

/// C3 ratio at each `θ′ = θ + Δ`.
pub fn malus_sweep(config: &BeamConfig, theta: f64, deltas: &[f64]) -> Result<Vec<SweepRow>> {
    deltas
        .iter()
        .map(|&delta| {
            let run = run_context(config, Context::C3 { theta, theta_prime: theta + delta })?;
            let r = run.ratio()?;
            Ok(SweepRow { delta, r31: r.r, sigma: r.sigma, malus: malus_ratio(theta, theta + delta)? })
        })
        .collect()
}

/// Eight analyzer offsets `kπ/8`.
pub fn default_deltas() -> Vec<f64> {
    (0..8).map(|k| k as f64 * PI / 8.0).collect()
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["delta", "r31", "sigma", "malus"])?;
    for r in rows {
        let sigma = r.sigma.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([r.delta.to_string(), r.r31.to_string(), sigma, r.malus.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean: f64,
    pub std_err: Option<f64>,
}

impl From<&IntensityRun> for StageSummary {
    fn from(r: &IntensityRun) -> Self {
        StageSummary { mean: r.mean, std_err: r.std_err }
    }
}

/// Intensities and ratios for the three contexts at one `(θ, θ′)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSummary {
    pub input_polarization: Polarization,
    /// Set when the input polarization was left at its default.
    pub polarization_assumed: bool,
    pub i0: StageSummary,
    pub i1: StageSummary,
    pub i2: StageSummary,
    pub i3: StageSummary,
    pub r10: Ratio,
    pub r21: Ratio,
    pub r31: Ratio,
    pub malus_r31: f64,
}

pub struct BeamRuns {
    pub c1: ContextRun,
    pub c2: ContextRun,
    pub c3: ContextRun,
}

impl BeamRuns {
    pub fn run(config: &BeamConfig, theta: f64, theta_prime: f64) -> Result<Self> {
        Ok(BeamRuns {
            c1: run_context(config, Context::C1 { theta })?,
            c2: run_context(config, Context::C2 { theta })?,
            c3: run_context(config, Context::C3 { theta, theta_prime })?,
        })
    }

    pub fn summary(&self, config: &BeamConfig, polarization_assumed: bool) -> Result<BeamSummary> {
        let Context::C3 { theta, theta_prime } = self.c3.context else {
            return Err(Error::param("c3", "expected a C3 context"));
        };
        Ok(BeamSummary {
            input_polarization: config.input_polarization,
            polarization_assumed,
            i0: (&self.c1.input).into(),
            i1: (&self.c1.output).into(),
            i2: (&self.c2.output).into(),
            i3: (&self.c3.output).into(),
            r10: self.c1.ratio()?,
            r21: self.c2.ratio()?,
            r31: self.c3.ratio()?,
            malus_r31: malus_ratio(theta, theta_prime)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn within(r: &Ratio, expected: f64, k: f64) -> bool {
        (r.r - expected).abs() <= k * r.sigma.unwrap()
    }

    #[test]
    fn aligned_analyzer_passes_everything() {
        let c = BeamConfig::new(50.0, 200, 1);
        let run = run_context(&c, Context::C2 { theta: 0.4 }).unwrap();
        assert_eq!(run.input.samples, run.output.samples);
        assert_eq!(run.ratio().unwrap().r, 1.0);
    }

    #[test]
    fn unpolarized_half_transmission() {
        let c = BeamConfig::new(100.0, 10_000, 2);
        let r = run_context(&c, Context::C1 { theta: 0.0 }).unwrap().ratio().unwrap();
        assert!((r.r - 0.5).abs() < 0.01, "{r:?}");
    }

    #[test]
    fn malus_at_thirty_degrees() {
        let c = BeamConfig::new(100.0, 10_000, 3);
        let r = run_context(&c, Context::C3 { theta: 0.2, theta_prime: 0.2 + PI / 6.0 })
            .unwrap()
            .ratio()
            .unwrap();
        assert!(within(&r, 0.75, 3.0), "{r:?}");
    }

    #[test]
    fn extinction_bounds_r21() {
        for eps in [0.005, 0.02] {
            let c = BeamConfig { polarizer_extinction: eps, ..BeamConfig::new(100.0, 10_000, 4) };
            let r = run_context(&c, Context::C2 { theta: 1.0 }).unwrap().ratio().unwrap();
            let s = r.sigma.unwrap();
            assert!(r.r >= 1.0 - 2.0 * eps - 3.0 * s && r.r < 1.0, "{eps}: {r:?}");
        }
    }

    #[test]
    fn efficiency_cancels() {
        let base = BeamConfig::new(100.0, 10_000, 5);
        let ctx = Context::C3 { theta: 0.0, theta_prime: 0.7 };
        let r1 = run_context(&base, ctx).unwrap().ratio().unwrap();
        let r2 = run_context(&BeamConfig { detector_efficiency: 0.3, ..base }, ctx)
            .unwrap()
            .ratio()
            .unwrap();
        let s = (r1.sigma.unwrap().powi(2) + r2.sigma.unwrap().powi(2)).sqrt();
        assert!((r1.r - r2.r).abs() <= 3.0 * s);
    }

    #[test]
    fn counts_are_poisson() {
        let c = BeamConfig { detector_efficiency: 0.6, ..BeamConfig::new(40.0, 10_000, 6) };
        let run = run_context(&c, Context::C1 { theta: 0.3 }).unwrap();
        for stage in [&run.input, &run.output] {
            let d = stage.dispersion_index().unwrap();
            assert!((0.95..=1.05).contains(&d), "{d}");
        }
    }

    #[test]
    fn ratio_propagation() {
        let run = |mean: f64, se: f64| IntensityRun { samples: vec![], mean, std_err: Some(se) };
        let r = intensity_ratio(&run(75.0, 0.5), &run(100.0, 0.5)).unwrap();
        assert_eq!(r.r, 0.75);
        let expected = 0.75 * ((0.5f64 / 75.0).powi(2) + (0.5f64 / 100.0).powi(2)).sqrt();
        assert!((r.sigma.unwrap() - expected).abs() < 1e-15);
        assert!((r.sigma.unwrap() - 0.00625).abs() < 1e-9);
        let same = intensity_ratio(&run(10.0, 1.0), &run(10.0, 1.0)).unwrap();
        assert_eq!(same.r, 1.0);
        assert!((same.sigma.unwrap() - 2f64.sqrt() * 0.1).abs() < 1e-15);
        assert_eq!(intensity_ratio(&run(0.0, 0.1), &run(10.0, 1.0)).unwrap().r, 0.0);
        assert!(intensity_ratio(&run(1.0, 0.1), &run(0.0, 1.0)).is_err());
    }

    #[test]
    fn single_window_has_no_error() {
        let c = BeamConfig::new(100.0, 1, 0);
        let run = run_context(&c, Context::C1 { theta: 0.0 }).unwrap();
        assert!(run.input.std_err.is_none());
        assert!(run.ratio().unwrap().sigma.is_none());
    }

    #[test]
    fn config_validation() {
        let ok = BeamConfig::new(1.0, 1, 0);
        assert!(BeamConfig { detector_efficiency: 0.0, ..ok.clone() }.validate().is_err());
        assert!(BeamConfig { polarizer_extinction: 0.06, ..ok.clone() }.validate().is_err());
        assert!(BeamConfig { mean_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(BeamConfig { window_count: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let c = BeamConfig::new(5.0, 2, 0);
        let run = run_context(&c, Context::C3 { theta: 0.0, theta_prime: 0.5 }).unwrap();
        let mut buf = Vec::new();
        run.write_counts(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "window_index,stage,count");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,1,") && lines[2].starts_with("0,3,"));
    }
}
