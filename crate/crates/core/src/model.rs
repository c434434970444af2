//! Domain types shared by the engine, the oracle and the analysis code.
//!
//! Everything here is an immutable value once constructed. Constructors
//! validate their inputs, so a `Setting` or an `Outcome` in hand is always
//! well formed.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible aperture half-width.
pub const MAX_APERTURE: f64 = PI / 4.0;

/// Reduces a polarizer angle to `[0, π)`; polarizer axes are identified mod π.
pub fn normalize_setting(theta_raw: f64) -> Result<f64> {
    reduce(theta_raw, PI)
}

/// Reduces an analyzer angle to `[0, 2π)`.
pub fn normalize_direction(theta_raw: f64) -> Result<f64> {
    reduce(theta_raw, TAU)
}

fn reduce(theta: f64, period: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    let r = theta.rem_euclid(period);
    // rem_euclid can round up to exactly `period` for tiny negative inputs
    Ok(if r >= period { 0.0 } else { r })
}

/// A measurement context: an analyzer orientation with a finite aperture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SettingSpec", into = "SettingSpec")]
pub struct Setting {
    label: Arc<str>,
    theta: f64,
    aperture: f64,
    axis_mod_pi: bool,
}

/// Wire form of a [`Setting`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub label: String,
    pub theta: f64,
    #[serde(default)]
    pub aperture: f64,
    #[serde(default)]
    pub axis_mod_pi: bool,
}

impl TryFrom<SettingSpec> for Setting {
    type Error = Error;

    fn try_from(spec: SettingSpec) -> Result<Self> {
        Setting::with_convention(spec.label, spec.theta, spec.aperture, spec.axis_mod_pi)
    }
}

impl From<Setting> for SettingSpec {
    fn from(s: Setting) -> Self {
        SettingSpec {
            label: s.label.to_string(),
            theta: s.theta,
            aperture: s.aperture,
            axis_mod_pi: s.axis_mod_pi,
        }
    }
}

impl Setting {
    /// Spin-analyzer setting, angle identified mod 2π.
    pub fn new(label: impl Into<String>, theta: f64, aperture: f64) -> Result<Self> {
        Self::with_convention(label, theta, aperture, false)
    }

    /// Polarizer setting, angle identified mod π.
    pub fn polarizer(label: impl Into<String>, theta: f64, aperture: f64) -> Result<Self> {
        Self::with_convention(label, theta, aperture, true)
    }

    pub fn with_convention(
        label: impl Into<String>,
        theta: f64,
        aperture: f64,
        axis_mod_pi: bool,
    ) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::param("label", "must not be empty"));
        }
        if label.contains(',') || label.contains('\n') {
            return Err(Error::param("label", "must not contain commas or newlines"));
        }
        if !aperture.is_finite() {
            return Err(Error::NonFinite("aperture"));
        }
        if !(0.0..=MAX_APERTURE).contains(&aperture) {
            return Err(Error::param(
                "aperture",
                format!("{aperture} outside [0, π/4]"),
            ));
        }
        let theta = if axis_mod_pi {
            normalize_setting(theta)?
        } else {
            normalize_direction(theta)?
        };
        Ok(Setting {
            label: label.into(),
            theta,
            aperture,
            axis_mod_pi,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn axis_mod_pi(&self) -> bool {
        self.axis_mod_pi
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:.6})", self.label, self.theta)
    }
}

/// A single station's result in one window. `None` is the absence of a click.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Outcome {
    Minus,
    None,
    Plus,
}

impl Outcome {
    /// All outcomes in table order.
    pub const ALL: [Outcome; 3] = [Outcome::Minus, Outcome::None, Outcome::Plus];
    /// Click outcomes only.
    pub const CLICKS: [Outcome; 2] = [Outcome::Minus, Outcome::Plus];

    pub fn value(self) -> i8 {
        match self {
            Outcome::Minus => -1,
            Outcome::None => 0,
            Outcome::Plus => 1,
        }
    }

    /// Row/column index in a 3×3 table (−1 → 0, 0 → 1, +1 → 2).
    pub fn index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn from_index(i: usize) -> Outcome {
        Outcome::ALL[i]
    }

    pub fn is_click(self) -> bool {
        self != Outcome::None
    }

    pub fn from_sign(positive: bool) -> Outcome {
        if positive {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Minus => Outcome::Plus,
            Outcome::None => Outcome::None,
            Outcome::Plus => Outcome::Minus,
        }
    }
}

impl TryFrom<i64> for Outcome {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Outcome::Minus),
            0 => Ok(Outcome::None),
            1 => Ok(Outcome::Plus),
            other => Err(Error::InvalidOutcome(other)),
        }
    }
}

impl From<Outcome> for i64 {
    fn from(o: Outcome) -> i64 {
        o.value() as i64
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// One synchronized-window outcome pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub setting_a: Setting,
    pub setting_b: Setting,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
    pub window_index: u64,
}

/// One draw of the hidden variables: source variables for each signal and
/// the instrument variables of each station.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<L1, L2, LX, LY> {
    pub lambda1: L1,
    pub lambda2: L2,
    pub lambda_x: LX,
    pub lambda_y: LY,
}

/// Counts over the 3×3 outcome grid for one setting pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: [[u64; 3]; 3],
    n_total: u64,
    setting_a: Setting,
    setting_b: Setting,
}

impl ContingencyTable {
    pub fn new(setting_a: Setting, setting_b: Setting) -> Self {
        ContingencyTable {
            counts: [[0; 3]; 3],
            n_total: 0,
            setting_a,
            setting_b,
        }
    }

    /// `counts[i][j]` is indexed by `Outcome::index` of Alice then Bob.
    pub fn from_counts(setting_a: Setting, setting_b: Setting, counts: [[u64; 3]; 3]) -> Self {
        let n_total = counts.iter().flatten().sum();
        ContingencyTable {
            counts,
            n_total,
            setting_a,
            setting_b,
        }
    }

    pub fn record(&mut self, a: Outcome, b: Outcome) {
        self.counts[a.index()][b.index()] += 1;
        self.n_total += 1;
    }

    /// Cell-wise addition. Both tables must describe the same setting pair.
    pub fn merge(&mut self, other: &ContingencyTable) {
        debug_assert_eq!(self.setting_a.label(), other.setting_a.label());
        debug_assert_eq!(self.setting_b.label(), other.setting_b.label());
        for (row, orow) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (c, o) in row.iter_mut().zip(orow.iter()) {
                *c += o;
            }
        }
        self.n_total += other.n_total;
    }

    pub fn count(&self, a: Outcome, b: Outcome) -> u64 {
        self.counts[a.index()][b.index()]
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn setting_a(&self) -> &Setting {
        &self.setting_a
    }

    pub fn setting_b(&self) -> &Setting {
        &self.setting_b
    }

    pub fn pair_key(&self) -> SettingPair {
        SettingPair::of(&self.setting_a, &self.setting_b)
    }

    pub fn marginal_a(&self, a: Outcome) -> u64 {
        self.counts[a.index()].iter().sum()
    }

    pub fn marginal_b(&self, b: Outcome) -> u64 {
        self.counts.iter().map(|row| row[b.index()]).sum()
    }

    /// Empirical joint frequencies. All zero when the table is empty.
    pub fn probabilities(&self) -> [[f64; 3]; 3] {
        let mut p = [[0.0; 3]; 3];
        if self.n_total == 0 {
            return p;
        }
        let n = self.n_total as f64;
        for (prow, crow) in p.iter_mut().zip(self.counts.iter()) {
            for (pc, &c) in prow.iter_mut().zip(crow.iter()) {
                *pc = c as f64 / n;
            }
        }
        p
    }
}

/// Key identifying a setting pair by labels; ordered so reports are stable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingPair {
    pub a: String,
    pub b: String,
}

impl SettingPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        SettingPair {
            a: a.into(),
            b: b.into(),
        }
    }

    pub fn of(a: &Setting, b: &Setting) -> Self {
        SettingPair::new(a.label(), b.label())
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Names the prepared state and the scalar visibility applied to its ideal
/// correlations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateLabelSpec")]
pub struct StateLabel {
    mu: String,
    visibility: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StateLabelSpec {
    mu: String,
    visibility: f64,
}

impl TryFrom<StateLabelSpec> for StateLabel {
    type Error = Error;

    fn try_from(s: StateLabelSpec) -> Result<Self> {
        StateLabel::new(s.mu, s.visibility)
    }
}

impl StateLabel {
    pub fn new(mu: impl Into<String>, visibility: f64) -> Result<Self> {
        check_visibility(visibility)?;
        Ok(StateLabel {
            mu: mu.into(),
            visibility,
        })
    }

    pub fn singlet() -> Self {
        StateLabel {
            mu: "singlet".into(),
            visibility: 1.0,
        }
    }

    pub fn mu(&self) -> &str {
        &self.mu
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }
}

pub(crate) fn check_visibility(v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite("visibility"));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param("visibility", format!("{v} outside [0, 1]")));
    }
    Ok(())
}
