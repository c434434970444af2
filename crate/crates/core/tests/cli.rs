use std::fs;
use std::path::{Path, PathBuf};

use chvlab::cli::{main_with_args, FitOutput, Report};

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["chvlab", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    main_with_args(args)
}

fn read_report(dir: &Path) -> Report {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const CHSH_SETTINGS: &str = r#"
  "settings_a": [ { "label": "a0", "theta": 0.0 }, { "label": "a1", "theta": 1.5707963267948966 } ],
  "settings_b": [ { "label": "b0", "theta": 0.7853981633974483 }, { "label": "b1", "theta": 2.356194490192345 } ]"#;

#[test]
fn spce_reference_model_reports_quantum_chsh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{"kind":"spce","model":{{"type":"threshold_reference"}},{CHSH_SETTINGS},"trials_per_pair":400000,"seed":1}}"#),
    );
    assert_eq!(run(&cfg, &dir.path().join("out"), &[]), 0);
    let r = read_report(&dir.path().join("out"));
    let chsh = r.chsh.unwrap();
    let ideal = 2.0 * std::f64::consts::SQRT_2;
    assert!((chsh.s - ideal).abs() < 4.0 * chsh.sigma, "{} ± {}", chsh.s, chsh.sigma);
    assert_eq!(chsh.singlet_reference.map(|s| (s - ideal).abs() < 1e-12), Some(true));
    assert!(r.nosignaling.unwrap().worst_z < 5.0);
    assert!(r.pairs.iter().all(|p| p.decomposition.max_residual <= 1e-12));
    assert_eq!(r.meta.seed, 1);
    assert_eq!(r.meta.config_sha256.len(), 64);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        format!(r#"{{"kind":"spce","model":{{"type":"threshold_reference"}},{CHSH_SETTINGS},"trials_per_pair":10,"foo":1}}"#),
        format!(r#"{{"kind":"spce","model":{{"type":"threshold_reference"}},{CHSH_SETTINGS},"trials_per_pair":0}}"#),
        r#"{"kind":"beam","beam":{"mean_rate":10,"window_count":5,"detector_efficiency":0}}"#.to_string(),
        r#"{"kind":"fit","family":{"free":["visibility"]},"evaluation":{"mode":"exact"},"budget":5}"#.to_string(),
        r#"{"kind":"fit","family":{"free":["visibility"]},"target":{"kind":"singlet"},"evaluation":{"mode":"sampled","trials_per_eval":10},"budget":5}"#.to_string(),
        "not json".to_string(),
    ];
    for (i, c) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{i}.json"), c);
        assert_eq!(run(&cfg, &out, &[]), 2, "case {i}: {c}");
    }
    assert_eq!(run(&dir.path().join("missing.json"), &out, &[]), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"kind":"beam","beam":{"mean_rate":20,"window_count":50,"seed":1}}"#);
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    assert_eq!(run(&cfg, &o1, &["--seed", "77"]), 0);
    assert_eq!(run(&cfg, &o2, &[]), 0);
    let s1 = fs::read_to_string(o1.join("beam_summary.json")).unwrap();
    let s2 = fs::read_to_string(o2.join("beam_summary.json")).unwrap();
    assert!(s1.contains("\"seed\": 77"));
    assert_ne!(s1, s2);
    let counts = fs::read_to_string(o1.join("counts_c1.csv")).unwrap();
    assert!(counts.starts_with("# chvlab ") && counts.contains("seed=77"));
}

#[test]
fn beam_single_window_has_null_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"kind":"beam","beam":{"mean_rate":50,"window_count":1}}"#);
    assert_eq!(run(&cfg, &dir.path().join("o"), &[]), 0);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/beam_summary.json")).unwrap()).unwrap();
    assert!(v["summary"]["r31"]["sigma"].is_null());
    assert_eq!(v["summary"]["polarization_assumed"], true);
}

#[test]
fn beam_sweep_tracks_malus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.json", r#"{"kind":"beam","beam":{"mean_rate":100,"window_count":10000,"seed":2}}"#);
    assert_eq!(run(&cfg, &dir.path().join("o"), &[]), 0);
    let text = fs::read_to_string(dir.path().join("o/malus_sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delta"))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 8);
    for r in rows {
        assert!((r[1] - r[3]).abs() <= 3.0 * r[2] + 1e-12, "{r:?}");
    }
}

#[test]
fn fit_budget_one_not_converged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "f.json",
        r#"{"kind":"fit","family":{"free":["visibility"]},"target":{"kind":"singlet","visibility":0.9},"evaluation":{"mode":"exact"},"budget":1}"#,
    );
    assert_eq!(run(&cfg, &dir.path().join("o"), &[]), 0);
    let f: FitOutput = serde_json::from_str(&fs::read_to_string(dir.path().join("o/fit_result.json")).unwrap()).unwrap();
    assert!(!f.result.converged);
    assert_eq!(f.result.evaluations, 1);
    assert_eq!(f.parameter_names, vec!["visibility"]);
}

fn analyze_config(dir: &Path, a: &str, b: &str) -> PathBuf {
    write(
        dir,
        "an.json",
        &format!(r#"{{"kind":"analyze","events_a":"{a}","events_b":"{b}","window_ns":100}}"#),
    )
}

#[test]
fn analyze_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.csv", "");
    write(dir.path(), "b.csv", "");
    let cfg = analyze_config(dir.path(), "a.csv", "b.csv");
    assert_eq!(run(&cfg, &dir.path().join("o"), &[]), 0);
    let r = read_report(&dir.path().join("o"));
    assert!(r.pairs.is_empty() && r.chsh.is_none());
}

#[test]
fn analyze_rejects_bad_logs() {
    let dir = tempfile::tempdir().unwrap();
    let header = "station,timestamp_ns,setting_label,outcome\n";
    write(dir.path(), "b.csv", &format!("{header}B,5,b0,1\n"));
    write(dir.path(), "unsorted.csv", &format!("{header}A,50,a0,1\nA,10,a0,-1\n"));
    write(dir.path(), "malformed.csv", &format!("{header}A,10,a0,1\nA,oops,a0,1\n"));
    write(dir.path(), "zero.csv", &format!("{header}A,10,a0,0\n"));
    for bad in ["unsorted.csv", "malformed.csv", "zero.csv", "b.csv"] {
        let cfg = analyze_config(dir.path(), bad, "b.csv");
        assert_eq!(run(&cfg, &dir.path().join("o"), &[]), 2, "{bad}");
    }
    let err = chvlab::stats::read_events(&dir.path().join("malformed.csv")).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

/// Click logs exported by an spce run and re-analyzed reproduce every
/// both-click cell, correlation and the CHSH value.
#[test]
fn export_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spce = write(
        dir.path(),
        "s.json",
        &format!(
            r#"{{"kind":"spce","model":{{"type":"library","name":"lossy_contextual"}},{CHSH_SETTINGS},
                "trials_per_pair":50000,"seed":3,"export_events":{{"window_ns":100}}}}"#
        ),
    );
    let run_dir = dir.path().join("run");
    assert_eq!(run(&spce, &run_dir, &[]), 0);
    let settings = format!(
        r#"[{{"label":"a0","theta":0.0}},{{"label":"a1","theta":1.5707963267948966}},
            {{"label":"b0","theta":0.7853981633974483}},{{"label":"b1","theta":2.356194490192345}}]"#
    );
    let an = write(
        dir.path(),
        "an.json",
        &format!(
            r#"{{"kind":"analyze","events_a":"run/events_a.csv","events_b":"run/events_b.csv","window_ns":100,"settings":{settings}}}"#
        ),
    );
    let an_dir = dir.path().join("an");
    assert_eq!(run(&an, &an_dir, &[]), 0);
    let (orig, back) = (read_report(&run_dir), read_report(&an_dir));
    assert_eq!(orig.pairs.len(), back.pairs.len());
    for (p, q) in orig.pairs.iter().zip(&back.pairs) {
        assert_eq!((&p.a, &p.b), (&q.a, &q.b));
        let (c, d) = (p.correlation.as_ref().unwrap(), q.correlation.as_ref().unwrap());
        assert_eq!((c.e_hat, c.std_err, c.n_used), (d.e_hat, d.std_err, d.n_used));
        assert_eq!(p.singlet_reference, q.singlet_reference);
    }
    let (s, t) = (orig.chsh.unwrap(), back.chsh.unwrap());
    assert_eq!((s.s, s.sigma), (t.s, t.sigma));

    let tables = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join("contingency.json")).unwrap()).unwrap()
    };
    let (t1, t2) = (tables(&run_dir), tables(&an_dir));
    for (x, y) in t1["tables"].as_array().unwrap().iter().zip(t2["tables"].as_array().unwrap()) {
        for i in [0, 2] {
            for j in [0, 2] {
                assert_eq!(x["counts"][i][j], y["counts"][i][j]);
            }
        }
    }
}

#[test]
fn fit_then_spce_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let fit_cfg = write(
        dir.path(),
        "f.json",
        r#"{"kind":"fit","family":{"free":["visibility"],"base":{"density":{"kind":"piecewise_constant",
            "weights":[0.429976232728065,0.221995775016033,0.057683935708598,0.032235165943454,
                       0.087122059388634,0.082180968966650,0.044658744953779,0.044147117294787]}}},
            "target":{"kind":"singlet","visibility":0.8},"evaluation":{"mode":"exact"},"budget":200}"#,
    );
    assert_eq!(run(&fit_cfg, &dir.path().join("fit"), &[]), 0);
    let spce = write(
        dir.path(),
        "s.json",
        &format!(
            r#"{{"kind":"spce","model":{{"type":"threshold_from_fit","fit_result":"fit/fit_result.json"}},{CHSH_SETTINGS},"trials_per_pair":200000,"seed":8}}"#
        ),
    );
    assert_eq!(run(&spce, &dir.path().join("s"), &[]), 0);
    let chsh = read_report(&dir.path().join("s")).chsh.unwrap();
    let ideal = 0.8 * 2.0 * std::f64::consts::SQRT_2;
    assert!((chsh.s - ideal).abs() < 4.0 * chsh.sigma + 1e-3, "{} vs {ideal}", chsh.s);
}
