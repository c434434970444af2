//! Fits the eight threshold-density weights so that post-selected
//! correlations follow the singlet curve, then checks the result on the
//! full 8×8 grid by Monte Carlo.
//!
//!     cargo run --release --example singlet_fit

use chvlab::engine::ThresholdDetectionModel;
use chvlab::fit::{evaluate, fit, square_grid, Evaluation, FitProblem, FreeParam, Target, ThresholdFamily};
use chvlab::qm::Convention;

fn main() -> chvlab::Result<()> {
    let family = ThresholdFamily::new(vec![FreeParam::Weights], ThresholdDetectionModel::default());
    let target = Target::Singlet { visibility: 1.0, convention: Convention::Spin };
    let mut problem = FitProblem::new(family, target, Evaluation::Sampled { trials_per_eval: 100_000 }, 3000);
    problem.seed = 7;

    let result = fit(&problem)?;
    println!("evaluations {}  converged {}  loss {:.5}", result.evaluations, result.converged, result.achieved_loss);
    for p in &result.best_params {
        println!("  {:<3} {:.5}", p.name, p.value);
    }

    let mut check = problem.clone();
    check.grid = square_grid(8);
    check.evaluation = Evaluation::Sampled { trials_per_eval: 1_000_000 };
    check.seed = 99;
    let eval = evaluate(&result.values(), &check)?;
    println!("8x8 grid, 1e6 trials per point: max |E + cos Δ| = {:.5}", eval.loss);
    Ok(())
}
