//! Derivative-free fitting of hidden-variable model parameters to quantum
//! correlation targets over a grid of setting pairs.
//!
//! The objective compares post-selected model correlations with the target
//! at every grid point. Sampled evaluation uses a fixed seed per grid point
//! for all parameter vectors (common random numbers), so the objective is a
//! deterministic function of the parameters. The search is a bounded
//! Nelder–Mead simplex with randomized restarts around the incumbent.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::rng::{derive_seed, TrialRng};
use crate::engine::{
    simulate_table, ModelPlugin, NamedParam, ThresholdDensity, ThresholdDetectionModel,
    MAX_SOURCE_NOISE,
};
use crate::error::{Error, Result};
use crate::model::Setting;
use crate::qm::{setting_correlation, Convention};
use crate::stats::post_selected_correlation;

pub const MIN_TRIALS_PER_EVAL: u64 = 10_000;

/// A parameterized set of models the fitter can search over.
pub trait ModelFamily: Sync {
    type Model: ModelPlugin;

    fn parameter_names(&self) -> Vec<String>;

    fn bounds(&self) -> Vec<(f64, f64)>;

    fn initial(&self) -> Vec<f64>;

    fn build(&self, params: &[f64]) -> Result<Self::Model>;

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Weights,
    SourceNoise,
    Visibility,
}

/// Threshold-detection models with a chosen subset of parameters free.
/// Fixed parameters come from `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdFamily {
    pub free: Vec<FreeParam>,
    #[serde(default)]
    pub base: ThresholdDetectionModel,
    #[serde(default = "default_noise_bound")]
    pub max_source_noise: f64,
}

fn default_noise_bound() -> f64 {
    1.0
}

impl ThresholdFamily {
    pub fn new(free: Vec<FreeParam>, base: ThresholdDetectionModel) -> Self {
        ThresholdFamily {
            free,
            base,
            max_source_noise: default_noise_bound(),
        }
    }

    fn has(&self, p: FreeParam) -> bool {
        self.free.contains(&p)
    }

    fn base_weights(&self) -> Vec<f64> {
        match self.base.density() {
            ThresholdDensity::PiecewiseConstant { weights } => weights.clone(),
            ThresholdDensity::PointMass { .. } => Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Config("family.free: no free parameters".into()));
        }
        if self.has(FreeParam::Weights) && self.base_weights().is_empty() {
            return Err(Error::Config(
                "family.free: weights require a piecewise-constant base density".into(),
            ));
        }
        if !(0.0..=MAX_SOURCE_NOISE).contains(&self.max_source_noise) {
            return Err(Error::Config("family.max_source_noise out of range".into()));
        }
        Ok(())
    }
}

impl ModelFamily for ThresholdFamily {
    type Model = ThresholdDetectionModel;

    fn validate(&self) -> Result<()> {
        self.check()
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.has(FreeParam::Weights) {
            names.extend((0..self.base_weights().len()).map(|i| format!("w{i}")));
        }
        if self.has(FreeParam::SourceNoise) {
            names.push("source_noise".into());
        }
        if self.has(FreeParam::Visibility) {
            names.push("visibility".into());
        }
        names
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = Vec::new();
        if self.has(FreeParam::Weights) {
            b.extend(std::iter::repeat_n((0.0, 1.0), self.base_weights().len()));
        }
        if self.has(FreeParam::SourceNoise) {
            b.push((0.0, self.max_source_noise));
        }
        if self.has(FreeParam::Visibility) {
            b.push((0.0, 1.0));
        }
        b
    }

    fn initial(&self) -> Vec<f64> {
        let mut x = Vec::new();
        if self.has(FreeParam::Weights) {
            x.extend(self.base_weights());
        }
        if self.has(FreeParam::SourceNoise) {
            x.push(self.base.source_noise());
        }
        if self.has(FreeParam::Visibility) {
            x.push(self.base.visibility());
        }
        x
    }

    fn build(&self, params: &[f64]) -> Result<ThresholdDetectionModel> {
        let mut rest = params;
        let mut take = |n: usize| -> Result<&[f64]> {
            if rest.len() < n {
                return Err(Error::param("params", "too few values"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let density = if self.has(FreeParam::Weights) {
            ThresholdDensity::PiecewiseConstant {
                weights: take(self.base_weights().len())?.to_vec(),
            }
        } else {
            self.base.density().clone()
        };
        let noise = if self.has(FreeParam::SourceNoise) {
            take(1)?[0]
        } else {
            self.base.source_noise()
        };
        let visibility = if self.has(FreeParam::Visibility) {
            take(1)?[0]
        } else {
            self.base.visibility()
        };
        if !rest.is_empty() {
            return Err(Error::param("params", "too many values"));
        }
        ThresholdDetectionModel::new(density, noise, visibility)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub a: Setting,
    pub b: Setting,
}

/// Eight points `Δ = kπ/8`, `k = 0..8`, with Bob fixed at angle 0.
pub fn default_grid() -> Vec<GridPoint> {
    let b = Setting::new("ref", 0.0, 0.0).expect("valid");
    (0..8)
        .map(|k| GridPoint {
            a: Setting::new(format!("d{k}"), k as f64 * PI / 8.0, 0.0).expect("valid"),
            b: b.clone(),
        })
        .collect()
}

/// Full `n × n` grid with both stations at angles `kπ/n`.
pub fn square_grid(n: usize) -> Vec<GridPoint> {
    let angle = |k: usize| k as f64 * PI / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(GridPoint {
                a: Setting::new(format!("a{i}"), angle(i), 0.0).expect("valid"),
                b: Setting::new(format!("b{j}"), angle(j), 0.0).expect("valid"),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// Singlet correlations from the quantum oracle.
    Singlet {
        #[serde(default = "unit")]
        visibility: f64,
        #[serde(default)]
        convention: Convention,
    },
    /// Explicit expectations, one per grid point.
    Values { values: Vec<f64> },
}

fn unit() -> f64 {
    1.0
}

impl Target {
    pub fn resolve(&self, grid: &[GridPoint]) -> Result<Vec<f64>> {
        match self {
            Target::Singlet {
                visibility,
                convention,
            } => grid
                .iter()
                .map(|p| setting_correlation(*convention, &p.a, &p.b, *visibility))
                .collect(),
            Target::Values { values } => {
                if values.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "target.values has {} entries for {} grid points",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    MaxAbs,
    MeanSquare,
}

impl Loss {
    fn aggregate(self, residuals: &[f64]) -> f64 {
        match self {
            Loss::MaxAbs => residuals.iter().map(|r| r.abs()).fold(0.0, f64::max),
            Loss::MeanSquare => {
                residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Evaluation {
    /// Exact or quadrature joint distributions; no sampling noise.
    Exact,
    /// Monte Carlo with a fixed per-point seed.
    Sampled { trials_per_eval: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProblem<F = ThresholdFamily> {
    pub family: F,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default = "default_grid")]
    pub grid: Vec<GridPoint>,
    pub target: Target,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    pub evaluation: Evaluation,
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_loss() -> Loss {
    Loss::MaxAbs
}

fn default_restarts() -> usize {
    3
}

fn default_tol() -> f64 {
    1e-3
}

impl<F: ModelFamily> FitProblem<F> {
    pub fn new(family: F, target: Target, evaluation: Evaluation, budget: usize) -> Self {
        FitProblem {
            family,
            initial: None,
            grid: default_grid(),
            target,
            loss: Loss::MaxAbs,
            evaluation,
            budget,
            restarts: default_restarts(),
            tol: default_tol(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.grid.is_empty() {
            return Err(Error::Config("grid must not be empty".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if let Evaluation::Sampled { trials_per_eval } = self.evaluation {
            if trials_per_eval < MIN_TRIALS_PER_EVAL {
                return Err(Error::Config(format!(
                    "trials_per_eval must be at least {MIN_TRIALS_PER_EVAL}"
                )));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        let dim = self.family.bounds().len();
        if let Some(x) = &self.initial {
            if x.len() != dim {
                return Err(Error::Config(format!(
                    "initial has {} values, family has {dim} parameters",
                    x.len()
                )));
            }
        }
        self.target.resolve(&self.grid)?;
        Ok(())
    }

    fn start(&self) -> Vec<f64> {
        self.initial.clone().unwrap_or_else(|| self.family.initial())
    }
}

/// Per-point outcome of one objective evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub loss: f64,
    pub estimates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub std_errs: Vec<f64>,
}

fn point_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64, 0xf1f1)
}

fn check_bounds(params: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if params.len() != bounds.len() {
        return Err(Error::param(
            "params",
            format!("expected {} values, got {}", bounds.len(), params.len()),
        ));
    }
    for (i, (&x, &(lo, hi))) in params.iter().zip(bounds).enumerate() {
        if !(lo..=hi).contains(&x) {
            return Err(Error::param(format!("params[{i}]"), format!("{x} outside [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// Evaluates the loss at `params`. A model without coincidences at some
/// grid point scores `+∞`.
pub fn evaluate<F: ModelFamily>(params: &[f64], problem: &FitProblem<F>) -> Result<GridEvaluation> {
    check_bounds(params, &problem.family.bounds())?;
    let target = problem.target.resolve(&problem.grid)?;
    let degenerate = || GridEvaluation {
        loss: f64::INFINITY,
        estimates: vec![f64::NAN; problem.grid.len()],
        residuals: vec![f64::NAN; problem.grid.len()],
        std_errs: vec![f64::NAN; problem.grid.len()],
    };
    let model = match problem.family.build(params) {
        Ok(m) => m,
        // e.g. all-zero weights: no valid density, hence no clicks
        Err(Error::InvalidParameter { .. }) => return Ok(degenerate()),
        Err(e) => return Err(e),
    };
    let per_point: Vec<Result<Option<(f64, f64)>>> = problem
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, p)| match problem.evaluation {
            Evaluation::Exact => {
                let joint = model.exact_joint(&p.a, &p.b).ok_or_else(|| {
                    Error::Unsupported(format!("model `{}` has no exact path", model.name()))
                })??;
                match joint.post_selected_expectation() {
                    Ok(e) => Ok(Some((e, 0.0))),
                    Err(Error::DegenerateModel) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            Evaluation::Sampled { trials_per_eval } => {
                let table = simulate_table(&model, &p.a, &p.b, trials_per_eval, point_seed(problem.seed, i))?;
                match post_selected_correlation(&table) {
                    Ok(c) => Ok(Some((c.e_hat, c.std_err))),
                    Err(Error::EmptyPostSelection) => Ok(None),
                    Err(e) => Err(e),
                }
            }
        })
        .collect();
    let mut estimates = Vec::with_capacity(target.len());
    let mut std_errs = Vec::with_capacity(target.len());
    for r in per_point {
        match r? {
            Some((e, se)) => {
                estimates.push(e);
                std_errs.push(se);
            }
            None => return Ok(degenerate()),
        }
    }
    let residuals: Vec<f64> = estimates.iter().zip(&target).map(|(e, t)| e - t).collect();
    Ok(GridEvaluation {
        loss: problem.loss.aggregate(&residuals),
        estimates,
        residuals,
        std_errs,
    })
}

pub fn evaluate_loss<F: ModelFamily>(params: &[f64], problem: &FitProblem<F>) -> Result<f64> {
    Ok(evaluate(params, problem)?.loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best_params: Vec<NamedParam>,
    pub achieved_loss: f64,
    pub residuals: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
    /// Every parameter of the model built from `best_params`.
    pub model_params: Vec<NamedParam>,
    /// Convergence tolerance after clamping to the sampling noise floor.
    pub effective_tol: f64,
    /// Best-so-far loss after each evaluation.
    pub loss_trace: Vec<f64>,
}

impl FitResult {
    pub fn values(&self) -> Vec<f64> {
        self.best_params.iter().map(|p| p.value).collect()
    }
}

struct Search<'a, F: ModelFamily> {
    problem: &'a FitProblem<F>,
    bounds: Vec<(f64, f64)>,
    evaluations: usize,
    best: (Vec<f64>, f64),
    trace: Vec<f64>,
}

impl<F: ModelFamily> Search<'_, F> {
    /// `None` once the budget is spent.
    fn eval(&mut self, x: &[f64]) -> Result<Option<f64>> {
        if self.evaluations >= self.problem.budget {
            return Ok(None);
        }
        let loss = evaluate_loss(x, self.problem)?;
        self.evaluations += 1;
        if loss < self.best.1 || self.trace.is_empty() {
            self.best = (x.to_vec(), loss);
        }
        self.trace.push(self.best.1);
        Ok(Some(loss))
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }

    /// One Nelder–Mead run. Returns whether it stopped on the convergence
    /// test (as opposed to the budget).
    fn nelder_mead(&mut self, start: Vec<f64>, start_loss: f64, tol: f64) -> Result<bool> {
        let n = start.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), start_loss)];
        for i in 0..n {
            let (lo, hi) = self.bounds[i];
            let step = 0.1 * (hi - lo);
            let mut x = start.clone();
            x[i] = if x[i] + step <= hi { x[i] + step } else { x[i] - step };
            let Some(f) = self.eval(&x)? else {
                return Ok(false);
            };
            simplex.push((x, f));
        }
        let cycle = n + 1;
        let mut history: Vec<f64> = Vec::new();
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            history.push(best);
            if history.len() > cycle {
                let before = history[history.len() - 1 - cycle];
                let improvement = before - best;
                if improvement.is_finite() && improvement < tol && (worst - best) < tol {
                    return Ok(true);
                }
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let mut xr = along(1.0);
            self.clamp(&mut xr);
            let Some(fr) = self.eval(&xr)? else {
                return Ok(false);
            };
            if fr < best {
                let mut xe = along(2.0);
                self.clamp(&mut xe);
                let Some(fe) = self.eval(&xe)? else {
                    return Ok(false);
                };
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (mut xc, outside) = if fr < worst { (along(0.5), true) } else { (along(-0.5), false) };
            self.clamp(&mut xc);
            let Some(fc) = self.eval(&xc)? else {
                return Ok(false);
            };
            if (outside && fc <= fr) || (!outside && fc < worst) {
                simplex[n] = (xc, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let mut x: Vec<f64> = anchor
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + 0.5 * (v - b))
                    .collect();
                self.clamp(&mut x);
                let Some(f) = self.eval(&x)? else {
                    return Ok(false);
                };
                *vertex = (x, f);
            }
        }
    }
}

/// Minimizes the loss by bounded Nelder–Mead from the initial parameters,
/// followed by `restarts` runs started from random perturbations of the
/// best point found so far.
pub fn fit<F: ModelFamily>(problem: &FitProblem<F>) -> Result<FitResult> {
    problem.validate()?;
    let bounds = problem.family.bounds();
    let start = problem.start();
    check_bounds(&start, &bounds)?;
    let mut search = Search {
        problem,
        bounds: bounds.clone(),
        evaluations: 0,
        best: (start.clone(), f64::INFINITY),
        trace: Vec::new(),
    };
    let first = evaluate(&start, problem)?;
    search.evaluations = 1;
    search.best = (start.clone(), first.loss);
    search.trace.push(first.loss);

    let mut effective_tol = problem.tol;
    if matches!(problem.evaluation, Evaluation::Sampled { .. }) {
        let finite: Vec<f64> = first.std_errs.iter().copied().filter(|s| s.is_finite()).collect();
        if !finite.is_empty() {
            let mean = finite.iter().sum::<f64>() / finite.len() as f64;
            effective_tol = effective_tol.max(2.0 * mean);
        }
    }

    let mut converged = search.nelder_mead(start, first.loss, effective_tol)?;
    let mut rng = TrialRng::seed_from_u64(derive_seed(problem.seed, u64::MAX, 0x5eed));
    for _ in 0..problem.restarts {
        if !converged {
            break;
        }
        let mut x = search.best.0.clone();
        for (v, &(lo, hi)) in x.iter_mut().zip(&bounds) {
            *v += (rng.random::<f64>() - 0.5) * 0.4 * (hi - lo);
        }
        search.clamp(&mut x);
        let Some(fx) = search.eval(&x)? else {
            converged = false;
            break;
        };
        converged = search.nelder_mead(x, fx, effective_tol)?;
    }

    let (best, _) = search.best.clone();
    let check = evaluate(&best, problem)?;
    let names = problem.family.parameter_names();
    let model_params = problem.family.build(&best).map(|m| m.params()).unwrap_or_default();
    Ok(FitResult {
        best_params: names
            .into_iter()
            .zip(&best)
            .map(|(n, &v)| NamedParam::new(n, v))
            .collect(),
        achieved_loss: check.loss,
        residuals: check.residuals,
        evaluations: search.evaluations,
        converged,
        model_params,
        effective_tol,
        loss_trace: search.trace,
    })
}
