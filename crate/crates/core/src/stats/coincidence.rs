//! Fixed-grid coincidence matching of per-station click logs, and the CSV
//! formats for click events and trial records.
//!
//! Window `k` covers `[k·W, (k+1)·W)` nanoseconds on a clock shared by both
//! stations. A station keeps only its first click in a window; later clicks
//! are rejected and counted. A station without a click in a window reports
//! outcome 0 and is attributed the setting of its most recent click (or of
//! its first click, before any click has been seen).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Outcome, Setting, TrialRecord};

pub const EVENT_HEADER: [&str; 4] = ["station", "timestamp_ns", "setting_label", "outcome"];
pub const TRIAL_HEADER: [&str; 6] = [
    "trial_id",
    "window_index",
    "setting_a",
    "setting_b",
    "outcome_a",
    "outcome_b",
];

/// Label attributed to a station that never clicked.
pub const UNKNOWN_SETTING: &str = "unknown";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Station {
    A,
    B,
}

impl Station {
    fn letter(self) -> char {
        match self {
            Station::A => 'A',
            Station::B => 'B',
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One click. The absence of a record means no click.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub station: Station,
    pub timestamp_ns: u64,
    pub setting_label: String,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceResult {
    pub trials: Vec<TrialRecord>,
    pub rejected_a: u64,
    pub rejected_b: u64,
}

struct Click<'a> {
    window: u64,
    label: &'a str,
    outcome: Outcome,
}

fn first_clicks(events: &[EventRecord], station: Station, window_ns: u64) -> Result<(Vec<Click<'_>>, u64)> {
    let mut clicks: Vec<Click<'_>> = Vec::with_capacity(events.len());
    let mut rejected = 0;
    let mut last_ts = None;
    for (index, e) in events.iter().enumerate() {
        if e.station != station {
            return Err(Error::param(
                format!("events_{}", station.letter().to_ascii_lowercase()),
                format!("record {index} belongs to station {}", e.station),
            ));
        }
        if !e.outcome.is_click() {
            return Err(Error::param("outcome", format!("record {index} has outcome 0")));
        }
        if last_ts.is_some_and(|t| e.timestamp_ns < t) {
            return Err(Error::UnsortedEvents {
                station: station.letter(),
                index,
            });
        }
        last_ts = Some(e.timestamp_ns);
        let window = e.timestamp_ns / window_ns;
        if clicks.last().is_some_and(|c| c.window == window) {
            rejected += 1;
            continue;
        }
        clicks.push(Click {
            window,
            label: &e.setting_label,
            outcome: e.outcome,
        });
    }
    Ok((clicks, rejected))
}

/// Pairs the two click streams into trials, one per window in which at
/// least one station clicked. `resolve` maps a setting label to a setting.
pub fn coincidence_match<F>(
    events_a: &[EventRecord],
    events_b: &[EventRecord],
    window_ns: u64,
    mut resolve: F,
) -> Result<CoincidenceResult>
where
    F: FnMut(&str) -> Result<Setting>,
{
    if window_ns == 0 {
        return Err(Error::param("window_ns", "must be positive"));
    }
    let (clicks_a, rejected_a) = first_clicks(events_a, Station::A, window_ns)?;
    let (clicks_b, rejected_b) = first_clicks(events_b, Station::B, window_ns)?;

    let mut cache: BTreeMap<String, Setting> = BTreeMap::new();
    let mut setting = |label: &str| -> Result<Setting> {
        if let Some(s) = cache.get(label) {
            return Ok(s.clone());
        }
        let s = resolve(label)?;
        cache.insert(label.to_string(), s.clone());
        Ok(s)
    };

    let mut carry_a = clicks_a.first().map_or(UNKNOWN_SETTING, |c| c.label);
    let mut carry_b = clicks_b.first().map_or(UNKNOWN_SETTING, |c| c.label);
    let (mut i, mut j) = (0, 0);
    let mut trials = Vec::with_capacity(clicks_a.len().max(clicks_b.len()));
    while i < clicks_a.len() || j < clicks_b.len() {
        let wa = clicks_a.get(i).map_or(u64::MAX, |c| c.window);
        let wb = clicks_b.get(j).map_or(u64::MAX, |c| c.window);
        let window = wa.min(wb);
        let mut outcome_a = Outcome::None;
        let mut outcome_b = Outcome::None;
        if wa == window {
            carry_a = clicks_a[i].label;
            outcome_a = clicks_a[i].outcome;
            i += 1;
        }
        if wb == window {
            carry_b = clicks_b[j].label;
            outcome_b = clicks_b[j].outcome;
            j += 1;
        }
        trials.push(TrialRecord {
            trial_id: trials.len() as u64,
            setting_a: setting(carry_a)?,
            setting_b: setting(carry_b)?,
            outcome_a,
            outcome_b,
            window_index: window,
        });
    }
    Ok(CoincidenceResult {
        trials,
        rejected_a,
        rejected_b,
    })
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<EventRecord, String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, found {}", record.len()));
    }
    let station = match &record[0] {
        "A" => Station::A,
        "B" => Station::B,
        other => return Err(format!("invalid station `{other}`")),
    };
    let timestamp_ns = record[1]
        .parse::<u64>()
        .map_err(|e| format!("invalid timestamp_ns `{}`: {e}", &record[1]))?;
    let setting_label = record[2].to_string();
    if setting_label.is_empty() {
        return Err("empty setting_label".into());
    }
    let outcome = match &record[3] {
        "1" | "+1" => Outcome::Plus,
        "-1" => Outcome::Minus,
        other => return Err(format!("invalid outcome `{other}`; expected -1 or 1")),
    };
    Ok(EventRecord {
        station,
        timestamp_ns,
        setting_label,
        outcome,
    })
}

/// Reads an event CSV. `source` names the input in error messages.
pub fn read_events_from<R: Read>(reader: R, source: &str) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let malformed = |line: u64, reason: String| Error::MalformedRow {
        path: source.to_string(),
        line,
        reason,
    };
    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => {
            let header = header?;
            if header.iter().ne(EVENT_HEADER.iter().copied()) {
                return Err(malformed(1, format!("expected header `{}`", EVENT_HEADER.join(","))));
            }
        }
    }
    let mut out = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(parse_row(&record).map_err(|reason| malformed(line, reason))?);
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let file = File::open(path)?;
    read_events_from(file, &path.display().to_string())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_events<W: Write>(writer: W, events: &[EventRecord]) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(EVENT_HEADER)?;
    for e in events {
        w.write_record([
            e.station.to_string(),
            e.timestamp_ns.to_string(),
            e.setting_label.clone(),
            e.outcome.value().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials<W: Write>(writer: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv_writer(writer);
    w.write_record(TRIAL_HEADER)?;
    for t in trials {
        w.write_record([
            t.trial_id.to_string(),
            t.window_index.to_string(),
            t.setting_a.label().to_string(),
            t.setting_b.label().to_string(),
            t.outcome_a.value().to_string(),
            t.outcome_b.value().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
