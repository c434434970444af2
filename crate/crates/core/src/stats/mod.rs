//! Estimators over contingency tables: post-selected correlations, CHSH,
//! conditional-probability decomposition and no-signaling audits, plus
//! coincidence matching of raw per-station click logs.

mod coincidence;
mod decomposition;
mod nosignaling;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use coincidence::{
    coincidence_match, read_events, read_events_from, write_events, write_trials, CoincidenceResult,
    EventRecord, Station, EVENT_HEADER, TRIAL_HEADER,
};
pub use decomposition::{decomposition_check, DecompositionCheck};
pub use nosignaling::{nosignaling_audit, z_score, MarginalDeviation, NoSignalingReport};

use crate::error::{Error, Result};
use crate::model::{ContingencyTable, Outcome, SettingPair, TrialRecord};

/// Counts every trial once, in the table of its setting pair.
pub fn tabulate<'a, I>(trials: I) -> BTreeMap<SettingPair, ContingencyTable>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut tables: BTreeMap<SettingPair, ContingencyTable> = BTreeMap::new();
    for t in trials {
        tables
            .entry(SettingPair::of(&t.setting_a, &t.setting_b))
            .or_insert_with(|| ContingencyTable::new(t.setting_a.clone(), t.setting_b.clone()))
            .record(t.outcome_a, t.outcome_b);
    }
    tables
}

/// Merges per-worker partial tabulations cell by cell.
pub fn merge_tables(
    into: &mut BTreeMap<SettingPair, ContingencyTable>,
    from: &BTreeMap<SettingPair, ContingencyTable>,
) {
    for (k, t) in from {
        match into.get_mut(k) {
            Some(existing) => existing.merge(t),
            None => {
                into.insert(k.clone(), t.clone());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub e_hat: f64,
    pub std_err: f64,
    pub n_used: u64,
    pub n_discarded: u64,
}

/// Correlation over trials in which both stations clicked. The standard
/// error is the plug-in binomial estimate `√((1 − Ê²)/n_used)`.
pub fn post_selected_correlation(table: &ContingencyTable) -> Result<CorrelationEstimate> {
    let pp = table.count(Outcome::Plus, Outcome::Plus);
    let mm = table.count(Outcome::Minus, Outcome::Minus);
    let pm = table.count(Outcome::Plus, Outcome::Minus);
    let mp = table.count(Outcome::Minus, Outcome::Plus);
    let n_used = pp + mm + pm + mp;
    if n_used == 0 {
        return Err(Error::EmptyPostSelection);
    }
    let n = n_used as f64;
    let e_hat = ((pp + mm) as f64 - (pm + mp) as f64) / n;
    let std_err = ((1.0 - e_hat * e_hat).max(0.0) / n).sqrt();
    Ok(CorrelationEstimate {
        e_hat,
        std_err,
        n_used,
        n_discarded: table.n_total() - n_used,
    })
}

/// The four setting pairs entering a CHSH combination, in order
/// `(a,b), (a,b′), (a′,b), (a′,b′)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshLabels {
    pub a: String,
    pub a_prime: String,
    pub b: String,
    pub b_prime: String,
}

impl ChshLabels {
    pub fn new(a: &str, a_prime: &str, b: &str, b_prime: &str) -> Self {
        ChshLabels {
            a: a.into(),
            a_prime: a_prime.into(),
            b: b.into(),
            b_prime: b_prime.into(),
        }
    }

    pub fn pairs(&self) -> [SettingPair; 4] {
        [
            SettingPair::new(&self.a, &self.b),
            SettingPair::new(&self.a, &self.b_prime),
            SettingPair::new(&self.a_prime, &self.b),
            SettingPair::new(&self.a_prime, &self.b_prime),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub s: f64,
    pub sigma: f64,
}

/// `S = |E₁ − E₂| + |E₃ + E₄|` with errors added in quadrature.
pub fn chsh_estimate(estimates: &[CorrelationEstimate; 4]) -> ChshEstimate {
    let e: Vec<f64> = estimates.iter().map(|c| c.e_hat).collect();
    let s = crate::qm::chsh_combination(e[0], e[1], e[2], e[3]);
    let sigma = estimates.iter().map(|c| c.std_err.powi(2)).sum::<f64>().sqrt();
    ChshEstimate { s, sigma }
}

pub fn chsh_from_tables(
    tables: &BTreeMap<SettingPair, ContingencyTable>,
    labels: &ChshLabels,
) -> Result<(ChshEstimate, [CorrelationEstimate; 4])> {
    let mut est = Vec::with_capacity(4);
    for pair in labels.pairs() {
        let table = tables
            .get(&pair)
            .ok_or_else(|| Error::MissingSettingPair(pair.a.clone(), pair.b.clone()))?;
        est.push(post_selected_correlation(table)?);
    }
    let est: [CorrelationEstimate; 4] = est.try_into().expect("four pairs");
    Ok((chsh_estimate(&est), est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Setting;

    fn table(cells: &[((Outcome, Outcome), u64)]) -> ContingencyTable {
        let mut counts = [[0u64; 3]; 3];
        for ((a, b), n) in cells {
            counts[a.index()][b.index()] = *n;
        }
        ContingencyTable::from_counts(
            Setting::new("a", 0.0, 0.0).unwrap(),
            Setting::new("b", 0.0, 0.0).unwrap(),
            counts,
        )
    }

    fn trial(id: u64, a: Outcome, b: Outcome) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            setting_a: Setting::new("a", 0.0, 0.0).unwrap(),
            setting_b: Setting::new("b", 1.0, 0.0).unwrap(),
            outcome_a: a,
            outcome_b: b,
            window_index: id,
        }
    }

    use Outcome::{Minus as M, None as Z, Plus as P};

    #[test]
    fn tabulate_examples() {
        assert!(tabulate(&[]).is_empty());
        let trials = [trial(0, P, M), trial(1, P, M), trial(2, Z, P)];
        let t = tabulate(&trials);
        assert_eq!(t.len(), 1);
        let t = &t[&SettingPair::new("a", "b")];
        assert_eq!(t.count(P, M), 2);
        assert_eq!(t.count(Z, P), 1);
        assert_eq!(t.n_total(), 3);
    }

    #[test]
    fn merge_is_cellwise() {
        let trials: Vec<_> = (0..10).map(|i| trial(i, if i % 3 == 0 { P } else { Z }, M)).collect();
        let whole = tabulate(&trials);
        let mut left = tabulate(&trials[..4]);
        merge_tables(&mut left, &tabulate(&trials[4..]));
        assert_eq!(left, whole);
    }

    #[test]
    fn correlation_examples() {
        let c = post_selected_correlation(&table(&[((P, M), 50), ((M, P), 50)])).unwrap();
        assert_eq!((c.e_hat, c.std_err), (-1.0, 0.0));
        let c = post_selected_correlation(&table(&[((P, P), 25), ((M, M), 25), ((P, M), 25), ((M, P), 25)])).unwrap();
        assert_eq!(c.e_hat, 0.0);
        assert!((c.std_err - 0.1).abs() < 1e-15);
        let c = post_selected_correlation(&table(&[((P, P), 80), ((P, M), 20), ((Z, P), 7)])).unwrap();
        assert!((c.e_hat - 0.6).abs() < 1e-15);
        assert_eq!((c.n_used, c.n_discarded), (100, 7));
        assert!(matches!(
            post_selected_correlation(&table(&[((Z, P), 3)])),
            Err(Error::EmptyPostSelection)
        ));
    }

    fn est(e: f64) -> CorrelationEstimate {
        CorrelationEstimate { e_hat: e, std_err: 0.01, n_used: 1, n_discarded: 0 }
    }

    #[test]
    fn chsh_examples() {
        let r = chsh_estimate(&[est(-0.7071), est(0.7071), est(-0.7071), est(-0.7071)]);
        assert!((r.s - 2.8284).abs() < 1e-12);
        assert!((r.sigma - 0.02).abs() < 1e-15);
        assert_eq!(chsh_estimate(&[est(0.0), est(0.0), est(0.0), est(0.0)]).s, 0.0);
        assert_eq!(chsh_estimate(&[est(1.0), est(-1.0), est(1.0), est(1.0)]).s, 4.0);
    }

    #[test]
    fn chsh_missing_pair() {
        let mut tables = BTreeMap::new();
        let t = table(&[((P, M), 5)]);
        tables.insert(t.pair_key(), t);
        let err = chsh_from_tables(&tables, &ChshLabels::new("a", "a'", "b", "b'")).unwrap_err();
        assert!(matches!(err, Error::MissingSettingPair(_, _)));
    }
}
