use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::coincidence::Station;
use crate::error::{Error, Result};
use crate::model::{ContingencyTable, Outcome, SettingPair};

/// Largest deviation of one local marginal across the remote settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalDeviation {
    pub station: Station,
    pub local_setting: String,
    pub outcome: Outcome,
    /// Marginal estimate per remote setting label.
    pub marginals: BTreeMap<String, f64>,
    pub max_abs_diff: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoSignalingReport {
    /// Full-event marginals, no-click outcomes included.
    pub entries: Vec<MarginalDeviation>,
    pub worst_z: f64,
    /// Marginals restricted to trials where both stations clicked. Not an
    /// invariant of local models; reported for inspection only.
    pub post_selected: Vec<MarginalDeviation>,
    pub post_selected_worst_z: f64,
}

/// Two-proportion z statistic using unpooled variances. When both sample
/// variances vanish but the proportions differ, the pooled variance is used
/// instead so the statistic stays finite.
pub fn z_score(p1: f64, n1: u64, p2: f64, n2: u64) -> f64 {
    let diff = (p1 - p2).abs();
    if diff == 0.0 || n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let var = p1 * (1.0 - p1) / n1f + p2 * (1.0 - p2) / n2f;
    if var > 0.0 {
        return diff / var.sqrt();
    }
    let pooled = (p1 * n1f + p2 * n2f) / (n1f + n2f);
    diff / (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt()
}

struct Sample {
    remote: String,
    p: f64,
    n: u64,
}

fn deviation(station: Station, local: &str, outcome: Outcome, samples: &[Sample]) -> MarginalDeviation {
    let mut max_abs_diff: f64 = 0.0;
    let mut z: f64 = 0.0;
    for (i, s1) in samples.iter().enumerate() {
        for s2 in &samples[i + 1..] {
            max_abs_diff = max_abs_diff.max((s1.p - s2.p).abs());
            z = z.max(z_score(s1.p, s1.n, s2.p, s2.n));
        }
    }
    MarginalDeviation {
        station,
        local_setting: local.to_string(),
        outcome,
        marginals: samples.iter().map(|s| (s.remote.clone(), s.p)).collect(),
        max_abs_diff,
        z,
    }
}

fn post_selected_counts(t: &ContingencyTable, station: Station, o: Outcome) -> (u64, u64) {
    let mut hit = 0;
    let mut used = 0;
    for a in Outcome::CLICKS {
        for b in Outcome::CLICKS {
            let c = t.count(a, b);
            used += c;
            let local = if station == Station::A { a } else { b };
            if local == o {
                hit += c;
            }
        }
    }
    (hit, used)
}

fn audit_station(
    tables: &BTreeMap<SettingPair, ContingencyTable>,
    station: Station,
    full: &mut Vec<MarginalDeviation>,
    post: &mut Vec<MarginalDeviation>,
) -> Result<()> {
    let mut by_local: BTreeMap<&str, Vec<&ContingencyTable>> = BTreeMap::new();
    for (pair, t) in tables {
        let local = if station == Station::A { &pair.a } else { &pair.b };
        by_local.entry(local.as_str()).or_default().push(t);
    }
    for (local, group) in by_local {
        if group.len() < 2 {
            return Err(Error::InsufficientGrid(format!(
                "station {station} setting `{local}` has {} remote setting(s); at least 2 required",
                group.len()
            )));
        }
        let remote = |t: &ContingencyTable| {
            if station == Station::A {
                t.setting_b().label().to_string()
            } else {
                t.setting_a().label().to_string()
            }
        };
        for o in Outcome::ALL {
            let samples: Vec<Sample> = group
                .iter()
                .filter(|t| t.n_total() > 0)
                .map(|t| {
                    let hit = if station == Station::A { t.marginal_a(o) } else { t.marginal_b(o) };
                    Sample {
                        remote: remote(t),
                        p: hit as f64 / t.n_total() as f64,
                        n: t.n_total(),
                    }
                })
                .collect();
            full.push(deviation(station, local, o, &samples));
        }
        for o in Outcome::CLICKS {
            let samples: Vec<Sample> = group
                .iter()
                .filter_map(|t| {
                    let (hit, used) = post_selected_counts(t, station, o);
                    (used > 0).then(|| Sample {
                        remote: remote(t),
                        p: hit as f64 / used as f64,
                        n: used,
                    })
                })
                .collect();
            post.push(deviation(station, local, o, &samples));
        }
    }
    Ok(())
}

/// Compares each station's outcome marginals across the remote settings it
/// was paired with.
pub fn nosignaling_audit(
    tables: &BTreeMap<SettingPair, ContingencyTable>,
) -> Result<NoSignalingReport> {
    let mut entries = Vec::new();
    let mut post_selected = Vec::new();
    audit_station(tables, Station::A, &mut entries, &mut post_selected)?;
    audit_station(tables, Station::B, &mut entries, &mut post_selected)?;
    let worst = |v: &[MarginalDeviation]| v.iter().map(|e| e.z).fold(0.0, f64::max);
    Ok(NoSignalingReport {
        worst_z: worst(&entries),
        post_selected_worst_z: worst(&post_selected),
        entries,
        post_selected,
    })
}
