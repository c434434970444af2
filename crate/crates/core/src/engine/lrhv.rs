//! Exhaustive enumeration of deterministic local strategies for CHSH.

use serde::{Deserialize, Serialize};

use crate::model::{Outcome, Setting};
use crate::qm::chsh_combination;

/// Predetermined ±1 answers for two settings per station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub a: [i8; 2],
    pub b: [i8; 2],
}

impl DeterministicStrategy {
    /// All 16 assignments, ordered by their bit pattern.
    pub fn all() -> Vec<DeterministicStrategy> {
        let bit = |code: u8, k: u8| if code >> k & 1 == 1 { 1 } else { -1 };
        (0u8..16)
            .map(|code| DeterministicStrategy {
                a: [bit(code, 0), bit(code, 1)],
                b: [bit(code, 2), bit(code, 3)],
            })
            .collect()
    }

    pub fn alice(&self, k: usize) -> Outcome {
        Outcome::from_sign(self.a[k] > 0)
    }

    pub fn bob(&self, k: usize) -> Outcome {
        Outcome::from_sign(self.b[k] > 0)
    }

    /// Correlations `E(x, y) = a(x)·b(y)` in CHSH order.
    pub fn correlations(&self) -> [f64; 4] {
        let e = |x: usize, y: usize| f64::from(self.a[x] * self.b[y]);
        [e(0, 0), e(0, 1), e(1, 0), e(1, 1)]
    }

    pub fn chsh(&self) -> f64 {
        let [e1, e2, e3, e4] = self.correlations();
        chsh_combination(e1, e2, e3, e4)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrhvBound {
    pub max_abs_s: f64,
    pub strategy: DeterministicStrategy,
    pub strategies_checked: usize,
}

/// Maximum CHSH value over all deterministic strategies. A deterministic
/// strategy fixes an answer per setting, so the angles only name the
/// settings; the bound holds for every choice of angles.
pub fn enumerate_lrhv_chsh(
    _a: &Setting,
    _a_prime: &Setting,
    _b: &Setting,
    _b_prime: &Setting,
) -> LrhvBound {
    let all = DeterministicStrategy::all();
    let mut best = all[0];
    let mut best_s = f64::NEG_INFINITY;
    for s in &all {
        let v = s.chsh();
        if v > best_s {
            best_s = v;
            best = *s;
        }
    }
    LrhvBound {
        max_abs_s: best_s,
        strategy: best,
        strategies_checked: all.len(),
    }
}

/// CHSH value of a convex mixture of the 16 strategies. Weights are
/// normalized; they must be non-negative with a positive sum.
pub fn mixture_chsh(weights: &[f64; 16]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut e = [0.0; 4];
    for (s, w) in DeterministicStrategy::all().iter().zip(weights) {
        for (acc, c) in e.iter_mut().zip(s.correlations()) {
            *acc += w / total * c;
        }
    }
    chsh_combination(e[0], e[1], e[2], e[3])
}
