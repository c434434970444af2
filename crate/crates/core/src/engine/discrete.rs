//! Hidden-variable models over finite parameter spaces, with exact
//! probabilities by full summation over all atoms.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{JointDistribution, ModelPlugin, NamedParam, TrialRng};
use crate::error::{Error, Result};
use crate::model::{Outcome, Setting};

const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// One joint atom of the source distribution `P(λ₁, λ₂)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceAtom {
    pub lambda1: usize,
    pub lambda2: usize,
    pub probability: f64,
}

/// Outcomes indexed `[source value][instrument atom]`, one table per setting
/// label with an optional fallback.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeTable {
    #[serde(default)]
    pub by_setting: BTreeMap<String, Vec<Vec<Outcome>>>,
    #[serde(default)]
    pub default: Option<Vec<Vec<Outcome>>>,
}

impl OutcomeTable {
    /// Same table for every setting.
    pub fn uniform(table: Vec<Vec<Outcome>>) -> Self {
        OutcomeTable {
            by_setting: BTreeMap::new(),
            default: Some(table),
        }
    }

    pub fn with_setting(mut self, label: impl Into<String>, table: Vec<Vec<Outcome>>) -> Self {
        self.by_setting.insert(label.into(), table);
        self
    }

    fn table(&self, setting: &Setting) -> Option<&Vec<Vec<Outcome>>> {
        self.by_setting
            .get(setting.label())
            .or(self.default.as_ref())
    }

    fn lookup(&self, setting: &Setting, lambda: usize, instrument: usize) -> Outcome {
        self.table(setting)
            .and_then(|t| t.get(lambda))
            .and_then(|row| row.get(instrument))
            .copied()
            .unwrap_or(Outcome::None)
    }

    fn check(&self, side: &str, n_lambda: usize, n_instrument: usize) -> Result<()> {
        let all = self.by_setting.iter().map(|(k, v)| (k.as_str(), v));
        let all = all.chain(self.default.iter().map(|v| ("default", v)));
        for (label, t) in all {
            if t.len() != n_lambda || t.iter().any(|row| row.len() != n_instrument) {
                return Err(Error::param(
                    format!("outcomes_{side}.{label}"),
                    format!("expected a {n_lambda}×{n_instrument} table"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteModel {
    pub name: String,
    pub source: Vec<SourceAtom>,
    pub instrument_a: Vec<f64>,
    pub instrument_b: Vec<f64>,
    pub outcomes_a: OutcomeTable,
    pub outcomes_b: OutcomeTable,
}

fn check_distribution(name: &str, p: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut len = 0;
    for v in p {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::param(name, format!("invalid probability {v}")));
        }
        total += v;
        len += 1;
    }
    if len == 0 {
        return Err(Error::param(name, "no atoms"));
    }
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::param(name, format!("probabilities sum to {total}")));
    }
    Ok(())
}

fn pick(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

impl DiscreteModel {
    pub fn n_lambda1(&self) -> usize {
        self.source.iter().map(|s| s.lambda1 + 1).max().unwrap_or(0)
    }

    pub fn n_lambda2(&self) -> usize {
        self.source.iter().map(|s| s.lambda2 + 1).max().unwrap_or(0)
    }

    /// Distribution of Alice's outcome for a source value, summed over her
    /// instrument atoms.
    fn local_a(&self, lambda1: usize, setting: &Setting) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (x, &px) in self.instrument_a.iter().enumerate() {
            p[self.outcomes_a.lookup(setting, lambda1, x).index()] += px;
        }
        p
    }

    fn local_b(&self, lambda2: usize, setting: &Setting) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (y, &py) in self.instrument_b.iter().enumerate() {
            p[self.outcomes_b.lookup(setting, lambda2, y).index()] += py;
        }
        p
    }
}

impl ModelPlugin for DiscreteModel {
    type Lambda1 = usize;
    type Lambda2 = usize;
    type LambdaX = usize;
    type LambdaY = usize;

    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> Vec<NamedParam> {
        let mut out: Vec<NamedParam> = self
            .source
            .iter()
            .map(|s| NamedParam::new(format!("p_source[{},{}]", s.lambda1, s.lambda2), s.probability))
            .collect();
        out.extend(
            self.instrument_a
                .iter()
                .enumerate()
                .map(|(i, &p)| NamedParam::new(format!("p_x[{i}]"), p)),
        );
        out.extend(
            self.instrument_b
                .iter()
                .enumerate()
                .map(|(i, &p)| NamedParam::new(format!("p_y[{i}]"), p)),
        );
        out
    }

    fn validate(&self) -> Result<()> {
        check_distribution("source", self.source.iter().map(|s| s.probability))?;
        check_distribution("instrument_a", self.instrument_a.iter().copied())?;
        check_distribution("instrument_b", self.instrument_b.iter().copied())?;
        self.outcomes_a
            .check("a", self.n_lambda1(), self.instrument_a.len())?;
        self.outcomes_b
            .check("b", self.n_lambda2(), self.instrument_b.len())
    }

    fn check_setting_a(&self, setting: &Setting) -> Result<()> {
        self.outcomes_a
            .table(setting)
            .map(|_| ())
            .ok_or_else(|| Error::param("setting_a", format!("no outcome table for `{}`", setting.label())))
    }

    fn check_setting_b(&self, setting: &Setting) -> Result<()> {
        self.outcomes_b
            .table(setting)
            .map(|_| ())
            .ok_or_else(|| Error::param("setting_b", format!("no outcome table for `{}`", setting.label())))
    }

    fn sample_source(&self, rng: &mut TrialRng) -> (usize, usize) {
        let i = pick(self.source.iter().map(|s| s.probability), rng.random());
        (self.source[i].lambda1, self.source[i].lambda2)
    }

    fn sample_instrument_a(&self, rng: &mut TrialRng) -> usize {
        pick(self.instrument_a.iter().copied(), rng.random())
    }

    fn sample_instrument_b(&self, rng: &mut TrialRng) -> usize {
        pick(self.instrument_b.iter().copied(), rng.random())
    }

    fn outcome_a(&self, lambda1: &usize, lambda_x: &usize, setting: &Setting) -> Outcome {
        self.outcomes_a.lookup(setting, *lambda1, *lambda_x)
    }

    fn outcome_b(&self, lambda2: &usize, lambda_y: &usize, setting: &Setting) -> Outcome {
        self.outcomes_b.lookup(setting, *lambda2, *lambda_y)
    }

    fn exact_joint(&self, a: &Setting, b: &Setting) -> Option<Result<JointDistribution>> {
        Some(exact_joint(self, a, b))
    }
}

/// `p(a, b) = Σ P(λ₁,λ₂)·Px(λx)·Py(λy)·[A = a]·[B = b]` over every atom.
pub fn exact_joint(model: &DiscreteModel, a: &Setting, b: &Setting) -> Result<JointDistribution> {
    model.validate()?;
    model.check_setting_a(a)?;
    model.check_setting_b(b)?;
    let mut p = [[0.0; 3]; 3];
    for atom in &model.source {
        let pa = model.local_a(atom.lambda1, a);
        let pb = model.local_b(atom.lambda2, b);
        for (i, row) in p.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += atom.probability * pa[i] * pb[j];
            }
        }
    }
    Ok(JointDistribution { p })
}

/// Post-selected expectation `Σ a·b·p(a,b) / Σ_{a,b≠0} p(a,b)`.
pub fn exact_expectation(model: &DiscreteModel, a: &Setting, b: &Setting) -> Result<f64> {
    exact_joint(model, a, b)?.post_selected_expectation()
}
