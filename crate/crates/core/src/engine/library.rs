//! Hand-built discrete models shipped with the crate.
//!
//! Setting-dependent models key their outcome tables on the labels in
//! [`CHSH_LABELS_A`] and [`CHSH_LABELS_B`].

use super::discrete::{DiscreteModel, OutcomeTable, SourceAtom};
use super::lrhv::DeterministicStrategy;
use crate::model::Outcome;

pub const CHSH_LABELS_A: [&str; 2] = ["a0", "a1"];
pub const CHSH_LABELS_B: [&str; 2] = ["b0", "b1"];

const P: Outcome = Outcome::Plus;
const M: Outcome = Outcome::Minus;
const Z: Outcome = Outcome::None;

fn atom(lambda1: usize, lambda2: usize, probability: f64) -> SourceAtom {
    SourceAtom {
        lambda1,
        lambda2,
        probability,
    }
}

/// A ≡ `a`, B ≡ `b` for every trial.
pub fn constant(a: Outcome, b: Outcome) -> DiscreteModel {
    DiscreteModel {
        name: "constant".into(),
        source: vec![atom(0, 0, 1.0)],
        instrument_a: vec![1.0],
        instrument_b: vec![1.0],
        outcomes_a: OutcomeTable::uniform(vec![vec![a]]),
        outcomes_b: OutcomeTable::uniform(vec![vec![b]]),
    }
}

/// λ₁ = ±1 equiprobable, λ₂ = −λ₁, A = λ₁, B = λ₂.
pub fn anti_correlated_coin() -> DiscreteModel {
    DiscreteModel {
        name: "anti_correlated_coin".into(),
        source: vec![atom(0, 1, 0.5), atom(1, 0, 0.5)],
        instrument_a: vec![1.0],
        instrument_b: vec![1.0],
        outcomes_a: OutcomeTable::uniform(vec![vec![P], vec![M]]),
        outcomes_b: OutcomeTable::uniform(vec![vec![P], vec![M]]),
    }
}

/// Two independent fair coins.
pub fn independent_coins() -> DiscreteModel {
    DiscreteModel {
        name: "independent_coins".into(),
        source: vec![
            atom(0, 0, 0.25),
            atom(0, 1, 0.25),
            atom(1, 0, 0.25),
            atom(1, 1, 0.25),
        ],
        instrument_a: vec![1.0],
        instrument_b: vec![1.0],
        outcomes_a: OutcomeTable::uniform(vec![vec![P], vec![M]]),
        outcomes_b: OutcomeTable::uniform(vec![vec![P], vec![M]]),
    }
}

/// Four source atoms realizing p(+,+) = p(−,−) = 0.4, p(+,−) = p(−,+) = 0.1.
pub fn biased_cells() -> DiscreteModel {
    DiscreteModel {
        name: "biased_cells".into(),
        source: vec![
            atom(0, 0, 0.4),
            atom(0, 1, 0.1),
            atom(1, 0, 0.1),
            atom(1, 1, 0.4),
        ],
        instrument_a: vec![1.0],
        instrument_b: vec![1.0],
        outcomes_a: OutcomeTable::uniform(vec![vec![P], vec![M]]),
        outcomes_b: OutcomeTable::uniform(vec![vec![P], vec![M]]),
    }
}

/// Three-valued source, non-trivial instrument variables and no-click
/// outcomes that depend on the local setting.
pub fn lossy_contextual() -> DiscreteModel {
    DiscreteModel {
        name: "lossy_contextual".into(),
        source: vec![
            atom(0, 0, 0.3),
            atom(0, 1, 0.1),
            atom(1, 1, 0.25),
            atom(2, 0, 0.15),
            atom(2, 2, 0.2),
        ],
        instrument_a: vec![0.6, 0.3, 0.1],
        instrument_b: vec![0.7, 0.3],
        outcomes_a: OutcomeTable::default()
            .with_setting("a0", vec![vec![P, P, Z], vec![M, P, M], vec![Z, M, P]])
            .with_setting("a1", vec![vec![M, Z, P], vec![P, P, Z], vec![M, M, M]]),
        outcomes_b: OutcomeTable::default()
            .with_setting("b0", vec![vec![M, Z], vec![P, M], vec![P, P]])
            .with_setting("b1", vec![vec![P, M], vec![Z, M], vec![M, P]]),
    }
}

/// Mixture of all 16 deterministic CHSH strategies with unequal weights;
/// λ₁ = λ₂ = strategy index.
pub fn deterministic_mixture() -> DiscreteModel {
    let strategies = DeterministicStrategy::all();
    let raw: Vec<f64> = (0..strategies.len()).map(|i| 1.0 + (i % 5) as f64).collect();
    let total: f64 = raw.iter().sum();
    let source = raw
        .iter()
        .enumerate()
        .map(|(i, w)| atom(i, i, w / total))
        .collect();
    let column = |f: &dyn Fn(&DeterministicStrategy) -> Outcome| -> Vec<Vec<Outcome>> {
        strategies.iter().map(|s| vec![f(s)]).collect()
    };
    let mut outcomes_a = OutcomeTable::default();
    let mut outcomes_b = OutcomeTable::default();
    for k in 0..2 {
        outcomes_a = outcomes_a.with_setting(CHSH_LABELS_A[k], column(&|s| s.alice(k)));
        outcomes_b = outcomes_b.with_setting(CHSH_LABELS_B[k], column(&|s| s.bob(k)));
    }
    DiscreteModel {
        name: "deterministic_mixture".into(),
        source,
        instrument_a: vec![1.0],
        instrument_b: vec![1.0],
        outcomes_a,
        outcomes_b,
    }
}

/// Every shipped discrete model.
pub fn discrete_models() -> Vec<DiscreteModel> {
    vec![
        constant(Outcome::Plus, Outcome::Minus),
        anti_correlated_coin(),
        independent_coins(),
        biased_cells(),
        lossy_contextual(),
        deterministic_mixture(),
    ]
}

pub fn by_name(name: &str) -> Option<DiscreteModel> {
    discrete_models().into_iter().find(|m| m.name == name)
}
