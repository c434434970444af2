//! Shared-orientation model with random per-station detection thresholds.
//!
//! The source emits one orientation `φ ~ U[0, 2π)` to both stations. Each
//! instrument draws a threshold `τ` from a density `g` on `[0, 1]` and a
//! misalignment within the setting's aperture. Station A clicks with
//! `sign(cos(φ − θa))` when `|cos(φ − θa)| ≥ τx` and is silent otherwise;
//! station B answers with the opposite sign under the same rule.
//!
//! Two optional source imperfections are exposed: a wrapped Gaussian
//! perturbation of B's copy of `φ` (`source_noise`, its standard deviation
//! in radians) and a shared flip bit that inverts B's answer with
//! probability `(1 − visibility)/2`, which scales every post-selected
//! correlation by `visibility`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{JointDistribution, ModelPlugin, NamedParam, TrialRng};
use crate::error::{Error, Result};
use crate::model::{check_visibility, Outcome, Setting};
use crate::quadrature::gl16;

pub const DEFAULT_BINS: usize = 8;

/// Largest accepted `source_noise`, radians.
pub const MAX_SOURCE_NOISE: f64 = PI;

/// Gaussian tails beyond this many standard deviations are dropped.
const NOISE_SPAN: f64 = 8.0;

/// Density of detection thresholds on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdDensity {
    /// Equal-width bins over `[0, 1]`; weights are normalized on construction.
    PiecewiseConstant { weights: Vec<f64> },
    PointMass { tau: f64 },
}

impl ThresholdDensity {
    pub fn uniform(bins: usize) -> Self {
        ThresholdDensity::PiecewiseConstant {
            weights: vec![1.0 / bins as f64; bins],
        }
    }

    fn normalized(self) -> Result<Self> {
        match self {
            ThresholdDensity::PiecewiseConstant { weights } => {
                if weights.is_empty() {
                    return Err(Error::param("density.weights", "at least one bin"));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::param("density.weights", "weights must be finite and non-negative"));
                }
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(Error::param("density.weights", "weights sum to zero"));
                }
                Ok(ThresholdDensity::PiecewiseConstant {
                    weights: weights.iter().map(|w| w / total).collect(),
                })
            }
            ThresholdDensity::PointMass { tau } => {
                if !(0.0..=1.0).contains(&tau) {
                    return Err(Error::param("density.tau", format!("{tau} outside [0, 1]")));
                }
                Ok(ThresholdDensity::PointMass { tau })
            }
        }
    }

    /// `G(c) = P(τ ≤ c)`: the detection probability at `|cos| = c`.
    pub fn cdf(&self, c: f64) -> f64 {
        match self {
            ThresholdDensity::PiecewiseConstant { weights } => {
                let k = weights.len();
                let x = c.clamp(0.0, 1.0) * k as f64;
                let bin = (x as usize).min(k - 1);
                let below: f64 = weights[..bin].iter().sum();
                (below + (x - bin as f64) * weights[bin]).min(1.0)
            }
            ThresholdDensity::PointMass { tau } => {
                if c >= *tau {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse-CDF sampling from one uniform draw.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            ThresholdDensity::PiecewiseConstant { weights } => {
                let k = weights.len() as f64;
                let mut acc = 0.0;
                for (i, &w) in weights.iter().enumerate() {
                    if w > 0.0 && u < acc + w {
                        return ((i as f64 + (u - acc) / w) / k).min(1.0);
                    }
                    acc += w;
                }
                // u landed in rounding slack above the last positive bin
                let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (last as f64 + 1.0) / k
            }
            ThresholdDensity::PointMass { tau } => *tau,
        }
    }

    /// Values of `|cos|` at which `G` is not smooth.
    fn knots(&self) -> Vec<f64> {
        match self {
            ThresholdDensity::PiecewiseConstant { weights } => {
                let k = weights.len();
                (1..k).map(|i| i as f64 / k as f64).collect()
            }
            ThresholdDensity::PointMass { tau } => vec![*tau],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdSpec", into = "ThresholdSpec")]
pub struct ThresholdDetectionModel {
    density: ThresholdDensity,
    source_noise: f64,
    visibility: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub density: ThresholdDensity,
    #[serde(default)]
    pub source_noise: f64,
    #[serde(default = "one")]
    pub visibility: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ThresholdSpec> for ThresholdDetectionModel {
    type Error = Error;

    fn try_from(s: ThresholdSpec) -> Result<Self> {
        ThresholdDetectionModel::new(s.density, s.source_noise, s.visibility)
    }
}

impl From<ThresholdDetectionModel> for ThresholdSpec {
    fn from(m: ThresholdDetectionModel) -> Self {
        ThresholdSpec {
            density: m.density,
            source_noise: m.source_noise,
            visibility: m.visibility,
        }
    }
}

/// Hidden orientation delivered to station A.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalA {
    pub phi: f64,
}

/// Hidden orientation delivered to station B, with the shared flip bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalB {
    pub phi: f64,
    pub flip: bool,
}

/// Instrument variable: detection threshold and a misalignment in `[-1, 1]`
/// that is scaled by the setting's aperture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstrumentState {
    pub tau: f64,
    pub jitter: f64,
}

impl Default for ThresholdDetectionModel {
    fn default() -> Self {
        ThresholdDetectionModel {
            density: ThresholdDensity::uniform(DEFAULT_BINS),
            source_noise: 0.0,
            visibility: 1.0,
        }
    }
}

fn local_answer(phi: f64, inst: &InstrumentState, setting: &Setting) -> Option<bool> {
    let angle = setting.theta() + inst.jitter * setting.aperture();
    let c = (phi - angle).cos();
    // cos = 0 is measure zero; it resolves to +1
    (c.abs() >= inst.tau).then_some(c >= 0.0)
}

impl ThresholdDetectionModel {
    pub fn new(density: ThresholdDensity, source_noise: f64, visibility: f64) -> Result<Self> {
        if !source_noise.is_finite() {
            return Err(Error::NonFinite("source_noise"));
        }
        if !(0.0..=MAX_SOURCE_NOISE).contains(&source_noise) {
            return Err(Error::param("source_noise", format!("{source_noise} outside [0, π]")));
        }
        check_visibility(visibility)?;
        Ok(ThresholdDetectionModel {
            density: density.normalized()?,
            source_noise,
            visibility,
        })
    }

    pub fn with_weights(weights: Vec<f64>) -> Result<Self> {
        Self::new(ThresholdDensity::PiecewiseConstant { weights }, 0.0, 1.0)
    }

    /// Eight-bin density whose post-selected correlations reproduce
    /// `−cos Δ` at every multiple of π/8.
    pub fn singlet_reference() -> Self {
        Self::with_weights(SINGLET_WEIGHTS.to_vec()).expect("reference weights are valid")
    }

    /// Rebuilds a model from the names reported by `params()`. Missing
    /// `source_noise` and `visibility` default to 0 and 1.
    pub fn from_params(params: &[NamedParam]) -> Result<Self> {
        let get = |name: &str| params.iter().find(|p| p.name == name).map(|p| p.value);
        let mut weights = Vec::new();
        while let Some(w) = get(&format!("w{}", weights.len())) {
            weights.push(w);
        }
        let density = match (weights.is_empty(), get("tau")) {
            (false, None) => ThresholdDensity::PiecewiseConstant { weights },
            (true, Some(tau)) => ThresholdDensity::PointMass { tau },
            _ => return Err(Error::param("params", "expected either w0.. or tau")),
        };
        Self::new(density, get("source_noise").unwrap_or(0.0), get("visibility").unwrap_or(1.0))
    }

    pub fn density(&self) -> &ThresholdDensity {
        &self.density
    }

    pub fn source_noise(&self) -> f64 {
        self.source_noise
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    fn flip_probability(&self) -> f64 {
        0.5 * (1.0 - self.visibility)
    }

    /// Non-smooth points of a station response, in `ψ = φ − θ ∈ [0, 2π)`.
    fn response_breaks(&self) -> Vec<f64> {
        let mut v = vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
        for t in self.density.knots() {
            let c = t.clamp(0.0, 1.0).acos();
            v.extend([c, PI - c, PI + c, TAU - c]);
        }
        v
    }

    /// Outcome probabilities at A for relative angle ψ, by outcome index.
    fn response_a(&self, psi: f64) -> [f64; 3] {
        let c = psi.cos();
        let g = self.density.cdf(c.abs());
        if c >= 0.0 {
            [0.0, 1.0 - g, g]
        } else {
            [g, 1.0 - g, 0.0]
        }
    }

    fn response_b(&self, psi: f64) -> [f64; 3] {
        let c = psi.cos();
        let g = self.density.cdf(c.abs());
        let q = self.flip_probability();
        // unflipped answer is −sign(cos)
        let (minus, plus) = if c >= 0.0 { (1.0 - q, q) } else { (q, 1.0 - q) };
        [g * minus, 1.0 - g, g * plus]
    }

    /// B's response averaged over the source perturbation.
    fn smoothed_response_b(&self, psi: f64, breaks: &[f64]) -> [f64; 3] {
        let sigma = self.source_noise;
        if sigma == 0.0 {
            return self.response_b(psi);
        }
        let span = NOISE_SPAN * sigma;
        let mut eps_breaks = Vec::new();
        let periods = (span / TAU).ceil() as i64 + 1;
        for &beta in breaks {
            for m in -periods..=periods {
                eps_breaks.push(beta - psi + m as f64 * TAU);
            }
        }
        let mut out = [0.0; 3];
        let mut weight = 0.0;
        for (e, w) in gl16().piecewise_nodes(-span, span, &eps_breaks) {
            let g = w * (-0.5 * (e / sigma).powi(2)).exp();
            let r = self.response_b(psi + e);
            for k in 0..3 {
                out[k] += g * r[k];
            }
            weight += g;
        }
        out.map(|v| v / weight)
    }

    /// Full 3×3 joint distribution by deterministic quadrature over the
    /// shared orientation, split at every point where a station response is
    /// discontinuous or kinked. Requires zero apertures.
    pub fn quadrature_joint(&self, a: &Setting, b: &Setting) -> Result<JointDistribution> {
        if a.aperture() != 0.0 || b.aperture() != 0.0 {
            return Err(Error::Unsupported(
                "quadrature path requires zero apertures".into(),
            ));
        }
        let base = self.response_breaks();
        let mut breaks: Vec<f64> = base
            .iter()
            .map(|psi| (psi + a.theta()).rem_euclid(TAU))
            .collect();
        // with source noise B's averaged response is smooth
        if self.source_noise == 0.0 {
            breaks.extend(base.iter().map(|psi| (psi + b.theta()).rem_euclid(TAU)));
        }
        let mut p = [[0.0; 3]; 3];
        for (phi, w) in gl16().piecewise_nodes(0.0, TAU, &breaks) {
            let ra = self.response_a(phi - a.theta());
            let rb = self.smoothed_response_b(phi - b.theta(), &base);
            for (row, &x) in p.iter_mut().zip(&ra) {
                for (cell, &y) in row.iter_mut().zip(&rb) {
                    *cell += w * x * y;
                }
            }
        }
        Ok(JointDistribution { p: p.map(|row| row.map(|v| v / TAU)) })
    }
}

impl ModelPlugin for ThresholdDetectionModel {
    type Lambda1 = SignalA;
    type Lambda2 = SignalB;
    type LambdaX = InstrumentState;
    type LambdaY = InstrumentState;

    fn name(&self) -> &str {
        "threshold_detection"
    }

    fn params(&self) -> Vec<NamedParam> {
        let mut out = match &self.density {
            ThresholdDensity::PiecewiseConstant { weights } => weights
                .iter()
                .enumerate()
                .map(|(i, &w)| NamedParam::new(format!("w{i}"), w))
                .collect(),
            ThresholdDensity::PointMass { tau } => vec![NamedParam::new("tau", *tau)],
        };
        out.push(NamedParam::new("source_noise", self.source_noise));
        out.push(NamedParam::new("visibility", self.visibility));
        out
    }

    fn sample_source(&self, rng: &mut TrialRng) -> (SignalA, SignalB) {
        // fixed draw count per trial so nearby parameters share randomness
        let phi = rng.random::<f64>() * TAU;
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let phi_b = (phi + self.source_noise * z).rem_euclid(TAU);
        (
            SignalA { phi },
            SignalB {
                phi: phi_b,
                flip: u < self.flip_probability(),
            },
        )
    }

    fn sample_instrument_a(&self, rng: &mut TrialRng) -> InstrumentState {
        draw_instrument(&self.density, rng)
    }

    fn sample_instrument_b(&self, rng: &mut TrialRng) -> InstrumentState {
        draw_instrument(&self.density, rng)
    }

    fn outcome_a(&self, lambda1: &SignalA, lambda_x: &InstrumentState, setting: &Setting) -> Outcome {
        match local_answer(lambda1.phi, lambda_x, setting) {
            Some(positive) => Outcome::from_sign(positive),
            None => Outcome::None,
        }
    }

    fn outcome_b(&self, lambda2: &SignalB, lambda_y: &InstrumentState, setting: &Setting) -> Outcome {
        match local_answer(lambda2.phi, lambda_y, setting) {
            Some(positive) => Outcome::from_sign(positive == lambda2.flip),
            None => Outcome::None,
        }
    }

    fn exact_joint(&self, a: &Setting, b: &Setting) -> Option<Result<JointDistribution>> {
        Some(self.quadrature_joint(a, b))
    }
}

fn draw_instrument(density: &ThresholdDensity, rng: &mut TrialRng) -> InstrumentState {
    let tau = density.quantile(rng.random());
    let jitter = rng.random::<f64>() * 2.0 - 1.0;
    InstrumentState { tau, jitter }
}

/// Weights behind [`ThresholdDetectionModel::singlet_reference`].
pub const SINGLET_WEIGHTS: [f64; DEFAULT_BINS] = [
    0.429976232728065, 0.221995775016033, 0.057683935708598, 0.032235165943454,
    0.087122059388634, 0.082180968966650, 0.044658744953779, 0.044147117294787,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate_table;

    fn s(label: &str, t: f64) -> Setting {
        Setting::new(label, t, 0.0).unwrap()
    }

    #[test]
    fn density_cdf_and_quantile() {
        let d = ThresholdDensity::PiecewiseConstant {
            weights: vec![0.5, 0.0, 0.5],
        }
        .normalized()
        .unwrap();
        assert_eq!(d.cdf(0.0), 0.0);
        assert!((d.cdf(1.0) - 1.0).abs() < 1e-15);
        assert!((d.cdf(0.5) - 0.5).abs() < 1e-15);
        assert!((d.quantile(0.25) - 1.0 / 6.0).abs() < 1e-15);
        assert!((d.quantile(0.75) - 5.0 / 6.0).abs() < 1e-15);
        for i in 0..100 {
            let u = i as f64 / 100.0;
            let t = d.quantile(u);
            assert!((d.cdf(t) - u).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ThresholdDetectionModel::with_weights(vec![0.0; 8]).is_err());
        assert!(ThresholdDetectionModel::with_weights(vec![-1.0, 2.0]).is_err());
        assert!(ThresholdDetectionModel::new(ThresholdDensity::uniform(4), -0.1, 1.0).is_err());
        assert!(ThresholdDetectionModel::new(ThresholdDensity::uniform(4), 0.0, 1.1).is_err());
        assert!(ThresholdDetectionModel::new(ThresholdDensity::PointMass { tau: 1.5 }, 0.0, 1.0).is_err());
    }

    #[test]
    fn weights_are_normalized() {
        let m = ThresholdDetectionModel::with_weights(vec![2.0, 2.0]).unwrap();
        let ThresholdDensity::PiecewiseConstant { weights } = m.density() else {
            unreachable!()
        };
        assert_eq!(weights, &vec![0.5, 0.5]);
    }

    #[test]
    fn always_detecting_equal_settings_anticorrelate() {
        let m = ThresholdDetectionModel::new(ThresholdDensity::PointMass { tau: 0.0 }, 0.0, 1.0).unwrap();
        let a = s("a", 0.7);
        let t = simulate_table(&m, &a, &a, 50_000, 11).unwrap();
        assert_eq!(t.count(Outcome::Plus, Outcome::Minus) + t.count(Outcome::Minus, Outcome::Plus), 50_000);
        let j = m.quadrature_joint(&a, &a).unwrap();
        assert!((j.post_selected_expectation().unwrap() + 1.0).abs() < 1e-12);
        assert!(j.get(Outcome::None, Outcome::None).abs() < 1e-15);
    }

    #[test]
    fn always_detecting_gives_sawtooth() {
        // with τ ≡ 0 the shared-orientation model is the deterministic
        // sawtooth E = −(1 − 2|Δ|/π) on [0, π]
        let m = ThresholdDetectionModel::new(ThresholdDensity::PointMass { tau: 0.0 }, 0.0, 1.0).unwrap();
        for k in 0..=8 {
            let d = k as f64 * PI / 8.0;
            let e = m.quadrature_joint(&s("a", d), &s("b", 0.0)).unwrap().post_selected_expectation().unwrap();
            assert!((e + 1.0 - 2.0 * d / PI).abs() < 1e-12, "Δ={d}: {e}");
        }
    }

    #[test]
    fn quadrature_sums_to_one() {
        let m = ThresholdDetectionModel::new(ThresholdDensity::uniform(8), 0.3, 0.8).unwrap();
        let j = m.quadrature_joint(&s("a", 0.4), &s("b", 2.1)).unwrap();
        assert!((j.total() - 1.0).abs() < 1e-12, "{}", j.total());
    }

    #[test]
    fn visibility_scales_correlations() {
        let base = ThresholdDetectionModel::singlet_reference();
        let scaled = ThresholdDetectionModel::new(base.density().clone(), 0.0, 0.7).unwrap();
        for k in 0..8 {
            let (a, b) = (s("a", k as f64 * PI / 8.0), s("b", 0.0));
            let e0 = base.quadrature_joint(&a, &b).unwrap().post_selected_expectation().unwrap();
            let e1 = scaled.quadrature_joint(&a, &b).unwrap().post_selected_expectation().unwrap();
            assert!((e1 - 0.7 * e0).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_weights_reproduce_singlet_on_grid() {
        let m = ThresholdDetectionModel::singlet_reference();
        for k in 0..16 {
            let d = k as f64 * PI / 8.0;
            let e = m.quadrature_joint(&s("a", d), &s("b", 0.0)).unwrap().post_selected_expectation().unwrap();
            assert!((e + d.cos()).abs() < 1e-12, "Δ={d}: {e}");
        }
    }

    /// Independent oracle: midpoint rule over φ with the threshold CDF
    /// written out directly.
    #[test]
    fn quadrature_matches_midpoint_sum() {
        let m = ThresholdDetectionModel::singlet_reference();
        let w = SINGLET_WEIGHTS;
        let cdf = |c: f64| {
            let x = c * 8.0;
            let k = (x.floor() as usize).min(8);
            w[..k].iter().sum::<f64>() + if k < 8 { w[k] * (x - k as f64) } else { 0.0 }
        };
        let n = 200_000;
        for d in [0.3, 1.0, 2.2] {
            let (mut same, mut coinc) = (0.0, 0.0);
            for i in 0..n {
                let phi = (i as f64 + 0.5) / n as f64 * TAU;
                let (ca, cb) = (phi.cos(), (phi - d).cos());
                let p = cdf(ca.abs()) * cdf(cb.abs());
                coinc += p;
                // B answers −sign(cos), so equal signs of cos mean E contribution −1
                same += if ca * cb >= 0.0 { -p } else { p };
            }
            let e = m.quadrature_joint(&s("a", d), &s("b", 0.0)).unwrap().post_selected_expectation().unwrap();
            assert!((same / coinc - e).abs() < 1e-6, "Δ={d}: {} vs {e}", same / coinc);
        }
    }

    #[test]
    fn params_round_trip() {
        let m = ThresholdDetectionModel::new(ThresholdDensity::uniform(4), 0.2, 0.9).unwrap();
        assert_eq!(ThresholdDetectionModel::from_params(&m.params()).unwrap(), m);
        let p = ThresholdDetectionModel::new(ThresholdDensity::PointMass { tau: 0.3 }, 0.0, 1.0).unwrap();
        assert_eq!(ThresholdDetectionModel::from_params(&p.params()).unwrap(), p);
        assert!(ThresholdDetectionModel::from_params(&[]).is_err());
    }

    #[test]
    fn aperture_rejected_on_quadrature_path() {
        let m = ThresholdDetectionModel::default();
        let a = Setting::new("a", 0.0, 0.1).unwrap();
        assert!(matches!(m.quadrature_joint(&a, &s("b", 0.0)), Err(Error::Unsupported(_))));
    }
}
