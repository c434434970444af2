//! Generative hidden-variable engine.
//!
//! A model is a [`ModelPlugin`]: it samples source variables for the two
//! signals and instrument variables for each station from a factorized
//! distribution `P(λ₁, λ₂)·Px(λx)·Py(λy)`, and maps them to outcomes with
//! two local deterministic functions. The trait shape enforces locality:
//! Alice's outcome function never sees Bob's setting or variables.

mod discrete;
pub mod library;
mod lrhv;
pub mod rng;
mod threshold;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use discrete::{exact_expectation, exact_joint, DiscreteModel, OutcomeTable, SourceAtom};
pub use lrhv::{enumerate_lrhv_chsh, mixture_chsh, DeterministicStrategy, LrhvBound};
pub use rng::{trial_rng, Stream, TrialRng};
pub use threshold::{
    InstrumentState, SignalA, SignalB, ThresholdDensity, ThresholdDetectionModel, DEFAULT_BINS,
    MAX_SOURCE_NOISE, SINGLET_WEIGHTS,
};

use crate::error::{Error, Result};
use crate::model::{ContingencyTable, HiddenState, Outcome, Setting, TrialRecord};

/// Named model parameter, used for reporting and serialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub value: f64,
}

impl NamedParam {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        NamedParam {
            name: name.into(),
            value,
        }
    }
}

pub trait ModelPlugin: Send + Sync {
    type Lambda1: Send;
    type Lambda2: Send;
    type LambdaX: Send;
    type LambdaY: Send;

    fn name(&self) -> &str;

    fn params(&self) -> Vec<NamedParam>;

    fn validate(&self) -> Result<()> {
        Ok(())
    }

    /// Rejects settings the model cannot evaluate at station A.
    fn check_setting_a(&self, _setting: &Setting) -> Result<()> {
        Ok(())
    }

    fn check_setting_b(&self, _setting: &Setting) -> Result<()> {
        Ok(())
    }

    fn sample_source(&self, rng: &mut TrialRng) -> (Self::Lambda1, Self::Lambda2);

    fn sample_instrument_a(&self, rng: &mut TrialRng) -> Self::LambdaX;

    fn sample_instrument_b(&self, rng: &mut TrialRng) -> Self::LambdaY;

    fn outcome_a(&self, lambda1: &Self::Lambda1, lambda_x: &Self::LambdaX, setting: &Setting)
        -> Outcome;

    fn outcome_b(&self, lambda2: &Self::Lambda2, lambda_y: &Self::LambdaY, setting: &Setting)
        -> Outcome;

    /// Full-event joint distribution without sampling, when the model can
    /// provide one.
    fn exact_joint(&self, _a: &Setting, _b: &Setting) -> Option<Result<JointDistribution>> {
        None
    }
}

pub type HiddenOf<M> = HiddenState<
    <M as ModelPlugin>::Lambda1,
    <M as ModelPlugin>::Lambda2,
    <M as ModelPlugin>::LambdaX,
    <M as ModelPlugin>::LambdaY,
>;

/// Draws the hidden state of one trial. Depends only on `(seed, trial_id)`.
pub fn draw_hidden<M: ModelPlugin>(model: &M, seed: u64, trial_id: u64) -> HiddenOf<M> {
    let (lambda1, lambda2) = model.sample_source(&mut trial_rng(seed, trial_id, Stream::Source));
    let lambda_x = model.sample_instrument_a(&mut trial_rng(seed, trial_id, Stream::InstrumentA));
    let lambda_y = model.sample_instrument_b(&mut trial_rng(seed, trial_id, Stream::InstrumentB));
    HiddenState {
        lambda1,
        lambda2,
        lambda_x,
        lambda_y,
    }
}

pub fn simulate_trial<M: ModelPlugin>(
    model: &M,
    a: &Setting,
    b: &Setting,
    seed: u64,
    trial_id: u64,
) -> (Outcome, Outcome) {
    let h = draw_hidden(model, seed, trial_id);
    (
        model.outcome_a(&h.lambda1, &h.lambda_x, a),
        model.outcome_b(&h.lambda2, &h.lambda_y, b),
    )
}

fn prepare<M: ModelPlugin>(model: &M, a: &Setting, b: &Setting, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "at least one trial is required"));
    }
    model.validate()?;
    model.check_setting_a(a)?;
    model.check_setting_b(b)
}

/// Runs `n` trials with ids `0..n`. The record stream is identical for any
/// number of rayon workers.
pub fn run_trials<M: ModelPlugin>(
    model: &M,
    a: &Setting,
    b: &Setting,
    n: u64,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    prepare(model, a, b, n)?;
    Ok((0..n)
        .into_par_iter()
        .map(|trial_id| {
            let (outcome_a, outcome_b) = simulate_trial(model, a, b, seed, trial_id);
            TrialRecord {
                trial_id,
                setting_a: a.clone(),
                setting_b: b.clone(),
                outcome_a,
                outcome_b,
                window_index: trial_id,
            }
        })
        .collect())
}

/// Same trials as [`run_trials`], reduced directly into a contingency table.
pub fn simulate_table<M: ModelPlugin>(
    model: &M,
    a: &Setting,
    b: &Setting,
    n: u64,
    seed: u64,
) -> Result<ContingencyTable> {
    prepare(model, a, b, n)?;
    let counts = (0..n)
        .into_par_iter()
        .fold(
            || [[0u64; 3]; 3],
            |mut acc, trial_id| {
                let (x, y) = simulate_trial(model, a, b, seed, trial_id);
                acc[x.index()][y.index()] += 1;
                acc
            },
        )
        .reduce(
            || [[0u64; 3]; 3],
            |mut l, r| {
                for (lr, rr) in l.iter_mut().zip(r.iter()) {
                    for (lc, rc) in lr.iter_mut().zip(rr.iter()) {
                        *lc += rc;
                    }
                }
                l
            },
        );
    Ok(ContingencyTable::from_counts(a.clone(), b.clone(), counts))
}

/// Probabilities over the full 3×3 outcome grid, indexed by
/// [`Outcome::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub p: [[f64; 3]; 3],
}

impl JointDistribution {
    pub fn get(&self, a: Outcome, b: Outcome) -> f64 {
        self.p[a.index()][b.index()]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    pub fn marginal_a(&self, a: Outcome) -> f64 {
        self.p[a.index()].iter().sum()
    }

    pub fn marginal_b(&self, b: Outcome) -> f64 {
        self.p.iter().map(|row| row[b.index()]).sum()
    }

    /// Probability that both stations click.
    pub fn coincidence(&self) -> f64 {
        Outcome::CLICKS
            .iter()
            .flat_map(|&a| Outcome::CLICKS.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.get(a, b))
            .sum()
    }

    /// Correlation over trials where both stations clicked.
    pub fn post_selected_expectation(&self) -> Result<f64> {
        let mass = self.coincidence();
        if mass <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        let mut num = 0.0;
        for a in Outcome::CLICKS {
            for b in Outcome::CLICKS {
                num += f64::from(a.value() * b.value()) * self.get(a, b);
            }
        }
        Ok(num / mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_distribution_views() {
        let mut p = [[0.0; 3]; 3];
        p[2][0] = 0.3;
        p[0][2] = 0.3;
        p[1][1] = 0.4;
        let j = JointDistribution { p };
        assert!((j.total() - 1.0).abs() < 1e-15);
        assert!((j.coincidence() - 0.6).abs() < 1e-15);
        assert!((j.post_selected_expectation().unwrap() + 1.0).abs() < 1e-15);
        assert!((j.marginal_a(Outcome::Plus) - 0.3).abs() < 1e-15);
        let empty = JointDistribution { p: [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]] };
        assert!(matches!(empty.post_selected_expectation(), Err(Error::DegenerateModel)));
    }
}
