use serde::{Deserialize, Serialize};

use crate::model::{ContingencyTable, Outcome};

/// Residual of `p(a,b) = p(a)·p(b|a) = p(b)·p(a|b)` evaluated on one table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub max_residual: f64,
    /// Alice outcomes with zero count; `p(b|a)` is undefined for them.
    pub undefined_a: Vec<Outcome>,
    /// Bob outcomes with zero count; `p(a|b)` is undefined for them.
    pub undefined_b: Vec<Outcome>,
}

/// Computes the joint frequencies and both conditional factorizations from
/// the same counts and returns the largest pairwise difference. Conditionals
/// on zero-count events are skipped and listed.
pub fn decomposition_check(table: &ContingencyTable) -> DecompositionCheck {
    let n = table.n_total();
    let mut undefined_a = Vec::new();
    let mut undefined_b = Vec::new();
    if n == 0 {
        return DecompositionCheck {
            max_residual: 0.0,
            undefined_a: Outcome::ALL.to_vec(),
            undefined_b: Outcome::ALL.to_vec(),
        };
    }
    let n = n as f64;
    for o in Outcome::ALL {
        if table.marginal_a(o) == 0 {
            undefined_a.push(o);
        }
        if table.marginal_b(o) == 0 {
            undefined_b.push(o);
        }
    }
    let mut max_residual: f64 = 0.0;
    for a in Outcome::ALL {
        for b in Outcome::ALL {
            let n_ab = table.count(a, b) as f64;
            let joint = n_ab / n;
            let mut routes = vec![joint];
            let n_a = table.marginal_a(a) as f64;
            if n_a > 0.0 {
                routes.push((n_a / n) * (n_ab / n_a));
            }
            let n_b = table.marginal_b(b) as f64;
            if n_b > 0.0 {
                routes.push((n_b / n) * (n_ab / n_b));
            }
            for (i, x) in routes.iter().enumerate() {
                for y in &routes[i + 1..] {
                    max_residual = max_residual.max((x - y).abs());
                }
            }
        }
    }
    DecompositionCheck {
        max_residual,
        undefined_a,
        undefined_b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Setting;
    use proptest::prelude::*;

    fn table(counts: [[u64; 3]; 3]) -> ContingencyTable {
        ContingencyTable::from_counts(
            Setting::new("a", 0.0, 0.0).unwrap(),
            Setting::new("b", 0.0, 0.0).unwrap(),
            counts,
        )
    }

    #[test]
    fn populated_table_is_an_identity() {
        let r = decomposition_check(&table([[3, 1, 4], [1, 5, 9], [2, 6, 5]]));
        assert!(r.max_residual <= 1e-12);
        assert!(r.undefined_a.is_empty() && r.undefined_b.is_empty());
    }

    #[test]
    fn zero_row_is_flagged() {
        let r = decomposition_check(&table([[3, 1, 4], [0, 0, 0], [2, 6, 5]]));
        assert_eq!(r.undefined_a, vec![Outcome::None]);
        assert!(r.undefined_b.is_empty());
        assert!(r.max_residual <= 1e-12);
    }

    proptest! {
        #[test]
        fn fuzzed_tables(counts in proptest::array::uniform3(proptest::array::uniform3(0u64..10_000_000))) {
            let r = decomposition_check(&table(counts));
            prop_assert!(r.max_residual <= 1e-12);
        }
    }
}
