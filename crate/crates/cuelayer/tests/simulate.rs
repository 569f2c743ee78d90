//! Simulator determinism and the ground-truth sidecar.

mod common;

use cuelayer::sim::{simulate, GroundTruth, SimulatorConfig};
use cuelayer_core::gesture::Taxonomy;

#[test]
fn same_seed_gives_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimulatorConfig::default();
    let tax = Taxonomy::default();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let s = dir.path().join(format!("s{k}.jsonl"));
        let t = dir.path().join(format!("t{k}.json"));
        simulate(&cfg, &tax).unwrap().write(&s, &t).unwrap();
        bytes.push((std::fs::read(&s).unwrap(), std::fs::read(&t).unwrap()));
    }
    assert!(bytes[0].0 == bytes[1].0, "session files differ");
    assert!(bytes[0].1 == bytes[1].1, "truth files differ");

    let other = SimulatorConfig {
        seed: 43,
        ..common::short_session()
    };
    let a = simulate(&common::short_session(), &tax).unwrap();
    let b = simulate(&other, &tax).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn steady_60_bpm_gives_30_peaks_in_30_s() {
    let mut cfg = SimulatorConfig::default();
    cfg.duration_s = 30.0;
    cfg.phases.truncate(1);
    cfg.phases[0].heart_rate_bpm = 60.0;
    cfg.phases[0].rr_jitter_ms = 0.0;
    let s = simulate(&cfg, &Taxonomy::default()).unwrap();
    let n = s.truth.r_peaks.len();
    assert!((29..=31).contains(&n), "{n} R-peaks");
}

#[test]
fn sidecar_round_trips_and_exposes_eeg_targets() {
    let cfg = common::short_session();
    let s = simulate(&cfg, &Taxonomy::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.json");
    s.truth.write(&p).unwrap();
    let back = GroundTruth::read(&p).unwrap();
    assert_eq!(back, s.truth);
    // 1 s epochs every 0.5 s over 60 s.
    assert_eq!(back.eeg.epoch_targets.len(), 119);
    assert!(!back.scr.is_empty() && !back.gestures.is_empty() && !back.markers.is_empty());
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = SimulatorConfig::default();
    cfg.duration_s = -1.0;
    assert!(simulate(&cfg, &Taxonomy::default()).is_err());
}
