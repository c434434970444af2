//! Config-driven runner behind the `chvlab` binary.
//!
//! One JSON config selects an experiment kind. Every output embeds the tool
//! version, a SHA-256 of the effective config and the seed; outputs carry no
//! timestamps or thread counts, so equal configs give byte-identical files.
//!
//! Exit codes: 0 success, 2 invalid config or input data, 3 runtime failure.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beam::{self, BeamConfig, BeamRuns, SweepRow};
use crate::engine::rng::derive_seed;
use crate::engine::{
    library, simulate_table, simulate_trial, DiscreteModel, ModelPlugin, NamedParam,
    ThresholdDetectionModel,
};
use crate::error::{Error, Result};
use crate::fit::{fit, FitProblem, FitResult, ModelFamily};
use crate::model::{ContingencyTable, Outcome, Setting, SettingPair};
use crate::qm::{setting_correlation, Convention};
use crate::stats::{
    chsh_from_tables, coincidence_match, decomposition_check, nosignaling_audit,
    post_selected_correlation, read_events, tabulate, write_events, ChshLabels,
    CorrelationEstimate, DecompositionCheck, EventRecord, NoSignalingReport, Station,
};

pub const TOOL: &str = "chvlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Trials simulated per parallel batch when exporting record streams.
const EXPORT_CHUNK: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Spce(SpceConfig),
    Beam(BeamExperiment),
    Fit(FitProblem),
    Analyze(AnalyzeConfig),
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Spce(c) => c.seed,
            ExperimentConfig::Beam(c) => c.beam.seed,
            ExperimentConfig::Fit(c) => c.seed,
            ExperimentConfig::Analyze(_) => 0,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Spce(c) => c.seed = seed,
            ExperimentConfig::Beam(c) => c.beam.seed = seed,
            ExperimentConfig::Fit(c) => c.seed = seed,
            ExperimentConfig::Analyze(_) => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Spce(c) => c.validate(),
            ExperimentConfig::Beam(c) => c.beam.validate(),
            ExperimentConfig::Fit(c) => c.validate(),
            ExperimentConfig::Analyze(c) => c.validate(),
        }
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Hidden-variable model selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    ThresholdDetection { model: ThresholdDetectionModel },
    /// Shipped singlet-fitting weights.
    ThresholdReference {
        #[serde(default = "unit")]
        visibility: f64,
    },
    /// Threshold model rebuilt from a `run_fit` output file.
    ThresholdFromFit { fit_result: PathBuf },
    Discrete { model: DiscreteModel },
    /// A model from the built-in discrete library, by name.
    Library { name: String },
}

fn unit() -> f64 {
    1.0
}

enum LoadedModel {
    Threshold(ThresholdDetectionModel),
    Discrete(DiscreteModel),
}

impl ModelSpec {
    fn load(&self, base: &Path) -> Result<LoadedModel> {
        Ok(match self {
            ModelSpec::ThresholdDetection { model } => LoadedModel::Threshold(model.clone()),
            ModelSpec::ThresholdReference { visibility } => {
                let r = ThresholdDetectionModel::singlet_reference();
                LoadedModel::Threshold(ThresholdDetectionModel::new(
                    r.density().clone(),
                    0.0,
                    *visibility,
                )?)
            }
            ModelSpec::ThresholdFromFit { fit_result } => {
                let path = base.join(fit_result);
                let text = fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let out: FitOutput = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                LoadedModel::Threshold(ThresholdDetectionModel::from_params(&out.result.model_params)?)
            }
            ModelSpec::Discrete { model } => {
                model.validate()?;
                LoadedModel::Discrete(model.clone())
            }
            ModelSpec::Library { name } => LoadedModel::Discrete(
                library::by_name(name)
                    .ok_or_else(|| Error::Config(format!("unknown library model `{name}`")))?,
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventExport {
    /// Window width used for the synthetic click timestamps.
    pub window_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpceConfig {
    pub model: ModelSpec,
    pub settings_a: Vec<Setting>,
    pub settings_b: Vec<Setting>,
    /// `[label_a, label_b]` pairs; all combinations when omitted.
    #[serde(default)]
    pub pairs: Option<Vec<[String; 2]>>,
    pub trials_per_pair: u64,
    /// Defaults to the first two settings at each station.
    #[serde(default)]
    pub chsh: Option<ChshLabels>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub write_trials: bool,
    #[serde(default)]
    pub export_events: Option<EventExport>,
}

impl SpceConfig {
    fn validate(&self) -> Result<()> {
        if self.trials_per_pair == 0 {
            return Err(Error::Config("trials_per_pair must be at least 1".into()));
        }
        if self.settings_a.is_empty() || self.settings_b.is_empty() {
            return Err(Error::Config("settings_a and settings_b must be non-empty".into()));
        }
        for (station, list) in [("settings_a", &self.settings_a), ("settings_b", &self.settings_b)] {
            let mut seen = std::collections::BTreeSet::new();
            for s in list {
                if !seen.insert(s.label()) {
                    return Err(Error::Config(format!("{station}: duplicate label `{}`", s.label())));
                }
            }
        }
        let pairs = self.resolved_pairs()?;
        if let Some(c) = &self.chsh {
            for p in c.pairs() {
                if !pairs.iter().any(|(a, b)| a.label() == p.a && b.label() == p.b) {
                    return Err(Error::Config(format!("chsh pair ({}, {}) is not simulated", p.a, p.b)));
                }
            }
        }
        if let Some(e) = &self.export_events {
            if e.window_ns == 0 {
                return Err(Error::Config("export_events.window_ns must be positive".into()));
            }
        }
        Ok(())
    }

    fn resolved_pairs(&self) -> Result<Vec<(Setting, Setting)>> {
        let find = |list: &[Setting], label: &str, station: &str| {
            list.iter()
                .find(|s| s.label() == label)
                .cloned()
                .ok_or_else(|| Error::Config(format!("pairs: unknown {station} label `{label}`")))
        };
        match &self.pairs {
            Some(p) => p
                .iter()
                .map(|[a, b]| Ok((find(&self.settings_a, a, "A")?, find(&self.settings_b, b, "B")?)))
                .collect(),
            None => Ok(self
                .settings_a
                .iter()
                .flat_map(|a| self.settings_b.iter().map(move |b| (a.clone(), b.clone())))
                .collect()),
        }
    }

    fn chsh_labels(&self) -> Option<ChshLabels> {
        self.chsh.clone().or_else(|| {
            (self.settings_a.len() >= 2 && self.settings_b.len() >= 2).then(|| {
                ChshLabels::new(
                    self.settings_a[0].label(),
                    self.settings_a[1].label(),
                    self.settings_b[0].label(),
                    self.settings_b[1].label(),
                )
            })
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamExperiment {
    pub beam: BeamConfig,
    /// P1 angle.
    #[serde(default)]
    pub theta: f64,
    /// P2 angle in context C3.
    #[serde(default = "default_theta_prime")]
    pub theta_prime: f64,
    /// Analyzer offsets for the C3 sweep; eight multiples of π/8 by default.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
}

fn default_theta_prime() -> f64 {
    std::f64::consts::PI / 6.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub events_a: PathBuf,
    pub events_b: PathBuf,
    pub window_ns: u64,
    /// Known settings by label. When omitted, labels map to placeholder
    /// settings at angle 0.
    #[serde(default)]
    pub settings: Option<Vec<Setting>>,
    #[serde(default)]
    pub chsh: Option<ChshLabels>,
}

impl AnalyzeConfig {
    fn validate(&self) -> Result<()> {
        if self.window_ns == 0 {
            return Err(Error::Config("window_ns must be positive".into()));
        }
        Ok(())
    }
}

/// Reproducibility stamp carried by every output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn of(config: &ExperimentConfig) -> Self {
        Meta {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_sha256: config.hash(),
            seed: config.seed(),
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# {} {} config_sha256={} seed={}\n",
            self.tool, self.version, self.config_sha256, self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub params: Vec<NamedParam>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: String,
    pub b: String,
    pub theta_a: f64,
    pub theta_b: f64,
    pub n_total: u64,
    /// `None` when no trial had both stations clicking.
    pub correlation: Option<CorrelationEstimate>,
    pub decomposition: DecompositionCheck,
    /// Ideal singlet value for these settings.
    pub singlet_reference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub labels: ChshLabels,
    pub s: f64,
    pub sigma: f64,
    pub correlations: Vec<CorrelationEstimate>,
    pub lrhv_bound: f64,
    pub singlet_reference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub model: Option<ModelSummary>,
    pub pairs: Vec<PairReport>,
    pub chsh: Option<ChshReport>,
    pub nosignaling: Option<NoSignalingReport>,
    /// Parts of the report that could not be computed, and why.
    pub notes: Vec<String>,
    /// Extra clicks dropped by coincidence matching, per station.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_clicks: Option<[u64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencyOutput {
    pub meta: Meta,
    pub tables: Vec<ContingencyTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub meta: Meta,
    pub parameter_names: Vec<String>,
    pub result: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamOutput {
    pub meta: Meta,
    pub summary: beam::BeamSummary,
    pub dispersion_index: BTreeMap<String, Option<f64>>,
    pub sweep: Vec<SweepRow>,
}

/// Builds the statistics report for a set of tables.
pub fn build_report(
    meta: Meta,
    model: Option<ModelSummary>,
    tables: &BTreeMap<SettingPair, ContingencyTable>,
    chsh: Option<&ChshLabels>,
    with_reference: bool,
) -> Report {
    let mut notes = Vec::new();
    let reference = |a: &Setting, b: &Setting| {
        with_reference
            .then(|| setting_correlation(Convention::Spin, a, b, 1.0).ok())
            .flatten()
    };
    let pairs = tables
        .values()
        .map(|t| PairReport {
            a: t.setting_a().label().into(),
            b: t.setting_b().label().into(),
            theta_a: t.setting_a().theta(),
            theta_b: t.setting_b().theta(),
            n_total: t.n_total(),
            correlation: post_selected_correlation(t).ok(),
            decomposition: decomposition_check(t),
            singlet_reference: reference(t.setting_a(), t.setting_b()),
        })
        .collect();
    let chsh = chsh.and_then(|labels| match chsh_from_tables(tables, labels) {
        Ok((est, corr)) => {
            let singlet = with_reference
                .then(|| {
                    let values: Option<Vec<f64>> = labels
                        .pairs()
                        .iter()
                        .map(|p| {
                            let t = &tables[p];
                            reference(t.setting_a(), t.setting_b())
                        })
                        .collect();
                    values.map(|e| crate::qm::chsh_combination(e[0], e[1], e[2], e[3]))
                })
                .flatten();
            Some(ChshReport {
                labels: labels.clone(),
                s: est.s,
                sigma: est.sigma,
                correlations: corr.to_vec(),
                lrhv_bound: 2.0,
                singlet_reference: singlet,
            })
        }
        Err(e) => {
            notes.push(format!("chsh: {e}"));
            None
        }
    });
    let nosignaling = match nosignaling_audit(tables) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("nosignaling: {e}"));
            None
        }
    };
    Report {
        meta,
        model,
        pairs,
        chsh,
        nosignaling,
        notes,
        rejected_clicks: None,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Per-pair seed, keyed by position in the run order.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64, 0x5bce)
}

struct SpceRun<'a> {
    config: &'a SpceConfig,
    meta: Meta,
    out: &'a Path,
}

impl SpceRun<'_> {
    fn execute<M: ModelPlugin>(&self, model: &M) -> Result<Vec<PathBuf>> {
        let pairs = self.config.resolved_pairs()?;
        let n = self.config.trials_per_pair;
        let mut tables = BTreeMap::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            let t = simulate_table(model, a, b, n, pair_seed(self.config.seed, i))?;
            tables.insert(t.pair_key(), t);
        }
        let mut written = Vec::new();
        if self.config.write_trials || self.config.export_events.is_some() {
            written.extend(self.export(model, &pairs)?);
        }
        let summary = ModelSummary {
            name: model.name().into(),
            params: model.params(),
        };
        let report = build_report(
            self.meta.clone(),
            Some(summary),
            &tables,
            self.config.chsh_labels().as_ref(),
            true,
        );
        let path = self.out.join("report.json");
        write_json(&path, &report)?;
        written.push(path);
        let path = self.out.join("contingency.json");
        write_json(
            &path,
            &ContingencyOutput {
                meta: self.meta.clone(),
                tables: tables.into_values().collect(),
            },
        )?;
        written.push(path);
        Ok(written)
    }

    /// Streams trial records and click events. Pairs run back to back; the
    /// global window index is the pair offset plus the trial id.
    fn export<M: ModelPlugin>(&self, model: &M, pairs: &[(Setting, Setting)]) -> Result<Vec<PathBuf>> {
        let n = self.config.trials_per_pair;
        let comment = self.meta.csv_comment();
        let mut paths = Vec::new();
        let mut trials_w = if self.config.write_trials {
            let p = self.out.join("trials.csv");
            let mut w = create(&p)?;
            w.write_all(comment.as_bytes())?;
            writeln!(w, "{}", crate::stats::TRIAL_HEADER.join(","))?;
            paths.push(p);
            Some(w)
        } else {
            None
        };
        let mut events_w = match &self.config.export_events {
            Some(e) => {
                let mut ws = Vec::new();
                for name in ["events_a.csv", "events_b.csv"] {
                    let p = self.out.join(name);
                    let mut w = create(&p)?;
                    w.write_all(comment.as_bytes())?;
                    write_events(&mut w, &[])?;
                    paths.push(p);
                    ws.push(w);
                }
                Some((e.window_ns, ws))
            }
            None => None,
        };
        let mut global_id = 0u64;
        for (i, (a, b)) in pairs.iter().enumerate() {
            let seed = pair_seed(self.config.seed, i);
            let mut start = 0;
            while start < n {
                let end = (start + EXPORT_CHUNK).min(n);
                let outcomes: Vec<(Outcome, Outcome)> = (start..end)
                    .into_par_iter()
                    .map(|id| simulate_trial(model, a, b, seed, id))
                    .collect();
                for (k, (oa, ob)) in outcomes.into_iter().enumerate() {
                    let window = global_id + start + k as u64;
                    if let Some(w) = trials_w.as_mut() {
                        writeln!(
                            w,
                            "{window},{window},{},{},{},{}",
                            a.label(),
                            b.label(),
                            oa.value(),
                            ob.value()
                        )?;
                    }
                    if let Some((window_ns, ws)) = events_w.as_mut() {
                        let ts = window * *window_ns + *window_ns / 2;
                        for (w, label, o) in [(0, a.label(), oa), (1, b.label(), ob)] {
                            if o.is_click() {
                                writeln!(ws[w], "{},{ts},{label},{}", if w == 0 { "A" } else { "B" }, o.value())?;
                            }
                        }
                    }
                }
                start = end;
            }
            global_id += n;
        }
        if let Some(mut w) = trials_w {
            w.flush()?;
        }
        if let Some((_, ws)) = events_w {
            for mut w in ws {
                w.flush()?;
            }
        }
        Ok(paths)
    }
}

pub fn run_spce(config: &ExperimentConfig, base: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ExperimentConfig::Spce(c) = config else {
        return Err(Error::Config("expected kind `spce`".into()));
    };
    c.validate()?;
    let run = SpceRun {
        config: c,
        meta: Meta::of(config),
        out,
    };
    match c.model.load(base)? {
        LoadedModel::Threshold(m) => run.execute(&m),
        LoadedModel::Discrete(m) => run.execute(&m),
    }
}

pub fn run_beam(config: &ExperimentConfig, polarization_assumed: bool, out: &Path) -> Result<Vec<PathBuf>> {
    let ExperimentConfig::Beam(c) = config else {
        return Err(Error::Config("expected kind `beam`".into()));
    };
    c.beam.validate()?;
    let meta = Meta::of(config);
    let runs = BeamRuns::run(&c.beam, c.theta, c.theta_prime)?;
    let deltas = c.sweep.clone().unwrap_or_else(beam::default_deltas);
    let sweep = beam::malus_sweep(&c.beam, c.theta, &deltas)?;
    let mut written = Vec::new();
    for (name, run) in [("counts_c1.csv", &runs.c1), ("counts_c2.csv", &runs.c2), ("counts_c3.csv", &runs.c3)] {
        let p = out.join(name);
        let mut w = create(&p)?;
        w.write_all(meta.csv_comment().as_bytes())?;
        run.write_counts(&mut w)?;
        w.flush()?;
        written.push(p);
    }
    let p = out.join("malus_sweep.csv");
    let mut w = create(&p)?;
    w.write_all(meta.csv_comment().as_bytes())?;
    beam::write_sweep(&sweep, &mut w)?;
    w.flush()?;
    written.push(p);
    let dispersion = [
        ("i0", &runs.c1.input),
        ("i1", &runs.c1.output),
        ("i2", &runs.c2.output),
        ("i3", &runs.c3.output),
    ]
    .into_iter()
    .map(|(k, r)| (k.to_string(), r.dispersion_index()))
    .collect();
    let p = out.join("beam_summary.json");
    write_json(
        &p,
        &BeamOutput {
            meta,
            summary: runs.summary(&c.beam, polarization_assumed)?,
            dispersion_index: dispersion,
            sweep,
        },
    )?;
    written.push(p);
    Ok(written)
}

pub fn run_fit(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ExperimentConfig::Fit(problem) = config else {
        return Err(Error::Config("expected kind `fit`".into()));
    };
    let result = fit(problem)?;
    let p = out.join("fit_result.json");
    write_json(
        &p,
        &FitOutput {
            meta: Meta::of(config),
            parameter_names: problem.family.parameter_names(),
            result,
        },
    )?;
    Ok(vec![p])
}

fn check_station(events: &[EventRecord], station: Station, path: &Path) -> Result<()> {
    match events.iter().position(|e| e.station != station) {
        Some(i) => Err(Error::Config(format!(
            "{}: record {i} belongs to station {}, expected {station}",
            path.display(),
            events[i].station
        ))),
        None => Ok(()),
    }
}

pub fn run_analyze(config: &ExperimentConfig, base: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ExperimentConfig::Analyze(c) = config else {
        return Err(Error::Config("expected kind `analyze`".into()));
    };
    c.validate()?;
    let (pa, pb) = (base.join(&c.events_a), base.join(&c.events_b));
    let events_a = read_events(&pa)?;
    let events_b = read_events(&pb)?;
    check_station(&events_a, Station::A, &pa)?;
    check_station(&events_b, Station::B, &pb)?;
    let known: Option<BTreeMap<&str, &Setting>> =
        c.settings.as_ref().map(|s| s.iter().map(|s| (s.label(), s)).collect());
    let resolve = |label: &str| -> Result<Setting> {
        match &known {
            Some(map) => map
                .get(label)
                .map(|s| (*s).clone())
                .ok_or_else(|| Error::Config(format!("event label `{label}` not in settings"))),
            None => Setting::new(label, 0.0, 0.0),
        }
    };
    let matched = coincidence_match(&events_a, &events_b, c.window_ns, resolve)?;
    let tables = tabulate(&matched.trials);
    let chsh = c.chsh.clone().or_else(|| default_chsh(&tables));
    let meta = Meta::of(config);
    let mut report = build_report(meta.clone(), None, &tables, chsh.as_ref(), known.is_some());
    report.rejected_clicks = Some([matched.rejected_a, matched.rejected_b]);
    let p = out.join("report.json");
    write_json(&p, &report)?;
    let q = out.join("contingency.json");
    write_json(
        &q,
        &ContingencyOutput {
            meta,
            tables: tables.into_values().collect(),
        },
    )?;
    Ok(vec![p, q])
}

/// First two labels per station in sorted order, when there are exactly two.
fn default_chsh(tables: &BTreeMap<SettingPair, ContingencyTable>) -> Option<ChshLabels> {
    let a: std::collections::BTreeSet<&str> = tables.keys().map(|k| k.a.as_str()).collect();
    let b: std::collections::BTreeSet<&str> = tables.keys().map(|k| k.b.as_str()).collect();
    let (a, b): (Vec<&str>, Vec<&str>) = (a.into_iter().collect(), b.into_iter().collect());
    (a.len() == 2 && b.len() == 2).then(|| ChshLabels::new(a[0], a[1], b[0], b[1]))
}

/// Parses a config file. The second value reports whether a beam config
/// left the input polarization at its default.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, bool)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let assumed = raw
        .get("beam")
        .is_some_and(|b| b.get("input_polarization").is_none());
    config.validate()?;
    Ok((config, assumed))
}

/// Runs a parsed config, writing into `out`. Relative paths inside the
/// config resolve against `base`.
pub fn run(config: &ExperimentConfig, polarization_assumed: bool, base: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    match config {
        ExperimentConfig::Spce(_) => run_spce(config, base, out),
        ExperimentConfig::Beam(_) => run_beam(config, polarization_assumed, out),
        ExperimentConfig::Fit(_) => run_fit(config, out),
        ExperimentConfig::Analyze(_) => run_analyze(config, base, out),
    }
}

#[derive(Debug, Parser)]
#[command(name = "chvlab", version, about = "Contextual hidden-variable experiment runner")]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Exit code for an error raised while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::MalformedRow { .. }
        | Error::UnsortedEvents { .. }
        | Error::InvalidParameter { .. }
        | Error::InvalidOutcome(_)
        | Error::NonFinite(_)
        | Error::MissingSettingPair(..) => 2,
        _ => 3,
    }
}

/// Entry point shared by the binary and tests. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (mut config, assumed) = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let job = || run(&config, assumed, &base, &args.out);
    let result = match args.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(job),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return 3;
            }
        },
        None => job(),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
