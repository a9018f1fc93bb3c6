use std::path::Path;
use std::process::{Command, Output};

fn harssl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harssl")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

const FAST: [&str; 8] = [
    "--set",
    "pretrain.steps=15",
    "--set",
    "pairing.batch_pairs=4",
    "--set",
    "head.epochs=3",
    "--set",
    "baseline.epochs=5",
];

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&harssl(&["synth", "--seed", "3", "--subjects", "2", "--seconds-per-class", "30", "--out", p(d)]));
    }
    assert_eq!(std::fs::read(a.join("windows.bin")).unwrap(), std::fs::read(b.join("windows.bin")).unwrap());
}

#[test]
fn pipeline_writes_a_report_with_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    ok(&harssl(&["synth", "--seed", "1", "--subjects", "4", "--seconds-per-class", "40", "--out", p(&data)]));
    let mut args = vec!["pipeline", "--seed", "5", "--data", p(&data), "--out", p(&out)];
    args.extend(FAST);
    ok(&harssl(&args));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["kappa"].is_number());
    assert_eq!(report["convention"], "rows = truth, columns = predicted");
    for f in ["encoder.model", "head.model", "preds.csv", "report.csv", "report.txt", "train_log.csv", "baseline.model"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn missing_config_names_the_path() {
    let out = harssl(&["check-config", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.toml"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(harssl(&["eval", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(harssl(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_predictions_are_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("preds.csv");
    let out = harssl(&["eval", "--preds", p(&missing), "--truth", p(&missing), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let out = harssl(&["check-config", "--set", "head.unitz=3"]);
    assert_eq!(out.status.code(), Some(3));
}

/// A protocol file in the PAMAP2 layout: 100 Hz rows of 54 columns with the
/// hand accelerometer in m/s², a few NaN dropouts and some null activity.
fn write_pamap2_subject(path: &Path, phase: f64) {
    let mut text = String::new();
    let bouts = [(0, 20.0), (1, 120.0), (4, 120.0), (6, 120.0), (0, 10.0)];
    let mut t = 0.0;
    for (activity, seconds) in bouts {
        let freq = [0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0][activity as usize];
        for _ in 0..(seconds * 100.0) as usize {
            let osc = 3.0 * (2.0 * std::f64::consts::PI * freq * t + phase).sin();
            let mut cols = vec![format!("{t:.2}"), activity.to_string(), "NaN".into(), "30.0".into()];
            let dropout = ((t * 100.0).round() as i64) % 997 == 0;
            if dropout {
                cols.extend(["NaN".to_string(), "NaN".into(), "NaN".into()]);
            } else {
                cols.extend([format!("{osc:.4}"), "0.0".into(), format!("{:.4}", 9.80665 + osc * 0.5)]);
            }
            cols.resize(54, "0.0".into());
            text.push_str(&cols.join(" "));
            text.push('\n');
            t += 0.01;
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn pamap2_layout_runs_through_the_pipeline_with_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir(&raw).unwrap();
    for s in 0..4 {
        write_pamap2_subject(&raw.join(format!("subject10{s}.dat")), s as f64);
    }
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    ok(&harssl(&["ingest", "--pamap2", p(&raw), "--out", p(&data)]));
    let mapping = Path::new(env!("CARGO_MANIFEST_DIR")).join("mappings/pamap2_to_capture24.toml");
    let set_mapping = format!("eval.mapping=\"{}\"", mapping.display());
    let mut args = vec!["pipeline", "--seed", "2", "--data", p(&data), "--out", p(&out), "--set", &set_mapping];
    args.extend(FAST);
    ok(&harssl(&args));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let classes: Vec<&str> = report["classes"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    assert_eq!(classes, ["sleep", "sit-stand", "vehicle", "walking", "mixed activity", "bicycling"]);
    assert!(report["kappa"].is_number());
}
