//! Every CLI verb run through the built binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cuelayer(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_cuelayer"))
        .current_dir(dir)
        .env("CUELAYER_LOG", "warn")
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "cuelayer {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let start = text.find('{').unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(&text[start..]).unwrap()
}

/// A config that shortens the simulated session and scales the baselines.
const SHORT_CONFIG: &str = r#"
[analysis]
risk_step_s = 0.5

[analysis.autonomic]
baseline_s = 20.0

[analysis.emotion]
baseline_s = 15.0
per_class = 10

[analysis.gesture]
per_class = 10

[simulator]
duration_s = 60.0

[[simulator.phases]]
label = "calm"
start_s = 0.0
gestures = ["open_palms_forward", "palms_down_lowering"]
emotion = "neutral"
speech_level_db = 58.0
pitch_hz = 120.0
texts = ["Guten Tag, können Sie mir bitte Ihren Ausweis zeigen?"]
heart_rate_bpm = 68.0
rr_jitter_ms = 25.0
avatar_distance_m = 2.5
tonic_us = 2.0
spontaneous_scr_per_min = 1.5

[[simulator.phases]]
label = "escalation"
start_s = 20.0
gestures = ["arms_crossed_defensive", "pointing_at_person"]
emotion = "anger"
speech_level_db = 80.0
pitch_hz = 210.0
texts = ["Halt die Klappe, du Idiot!", "Du gibst mir jetzt sofort deinen Ausweis!"]
heart_rate_bpm = 100.0
rr_jitter_ms = 8.0
avatar_distance_m = 0.9
tonic_us = 2.6
milestone_interval_s = 10.0
spontaneous_scr_per_min = 0.0
"#;

#[test]
fn every_verb_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("short.toml"), SHORT_CONFIG).unwrap();
    let cfg = ["--config", "short.toml"];

    let counts = stdout_json(&cuelayer(d, &[&cfg[..], &["simulate", "--seed", "7", "--out", "s.jsonl"]].concat()));
    assert_eq!(counts["ecg"], 15000);
    assert!(d.join("s.jsonl.truth.json").exists());

    let summary = stdout_json(&cuelayer(d, &[&cfg[..], &["analyze", "s.jsonl", "--out", "a.jsonl"]].concat()));
    assert_eq!(summary["lanes"].as_object().unwrap().len(), 8);
    assert!(summary["proposals"].as_u64().unwrap() >= 1);

    let report = stdout_json(&cuelayer(d, &["report", "a.jsonl", "--out", "report.json"]));
    assert!(report["utterances"].as_u64().unwrap() > 0);
    assert!(report["length_loudness"]["n"].as_u64().unwrap() >= 3);
    assert!(d.join("report.json").exists());

    cuelayer(d, &["train-gesture", "--seed", "3", "--per-class", "6", "--trees", "10", "--folds", "3", "--out", "g.json"]);
    cuelayer(d, &["train-gesture", "--seed", "3", "--per-class", "6", "--trees", "10", "--folds", "0", "--out", "g2.json"]);
    assert_eq!(std::fs::read(d.join("g.json")).unwrap(), std::fs::read(d.join("g2.json")).unwrap());
    cuelayer(d, &[&cfg[..], &["analyze", "s.jsonl", "--out", "a2.jsonl", "--gesture-model", "g.json"]].concat());

    let r = stdout_json(&cuelayer(d, &["replay", "s.jsonl", "--out", "rr.jsonl"]));
    assert_eq!(r["skipped"].as_array().unwrap().len(), 0);
    let r = stdout_json(&cuelayer(d, &["replay", "a.jsonl", "--speed", "inf"]));
    assert!(r["delivered"].as_u64().unwrap() > 0);

    let served = stdout_json(&cuelayer(
        d,
        &[
            &cfg[..],
            &["serve", "--bind", "127.0.0.1:0", "--replay", "s.jsonl", "--speed", "inf", "--out", "live.jsonl", "--exit-after-replay"],
        ]
        .concat(),
    ));
    assert!(served["proposals"].as_u64().unwrap() >= 1);
    assert!(d.join("live.jsonl").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"interpreter": {"weights": {"gesture": 1.5}}}"#).unwrap();
    for args in [
        &["--config", "bad.json", "simulate"][..],
        &["analyze", "missing.jsonl"][..],
        &["replay", "missing.jsonl", "--speed", "0"][..],
        &["frobnicate"][..],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_cuelayer"))
            .current_dir(d)
            .args(args)
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
    }
}
