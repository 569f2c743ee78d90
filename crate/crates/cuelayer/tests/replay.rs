//! Replay timing, malformed input and record/replay/record identity.

mod common;

use std::io::Write;
use std::time::Instant;

use cuelayer::bus::Bus;
use cuelayer::record::{canonicalize, read_file, read_records, write_file, Record, RecordKind, SessionLog};
use cuelayer::replay::{replay, replay_file, rerecord, ReplayClock, ReplayControl};
use cuelayer::sim::simulate;
use cuelayer_core::gesture::Taxonomy;
use cuelayer_core::sync::{EventMarker, Modality, StreamSpec};

fn marker_log(times: &[f64]) -> SessionLog {
    SessionLog::from_records(
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| Record::marker(&EventMarker::new(t, format!("m{i}")).unwrap()))
            .collect(),
    )
}

fn delivery_errors(log: &SessionLog, speed: f64) -> Vec<f64> {
    let control = ReplayControl::new(ReplayClock::new(speed).unwrap());
    let t0 = log.records[0].t;
    let start = Instant::now();
    let mut errors = Vec::new();
    replay(log, &control, &Bus::default(), |r| {
        let due = (r.t - t0) / speed;
        errors.push(start.elapsed().as_secs_f64() - due);
        Ok(())
    })
    .unwrap();
    errors
}

#[test]
fn real_time_delivery_within_50_ms() {
    let times: Vec<f64> = (0..12).map(|k| 0.1 * k as f64 + 0.05 * (k % 3) as f64).collect();
    let log = marker_log(&times);
    for speed in [1.0, 2.0] {
        let errors = delivery_errors(&log, speed);
        assert_eq!(errors.len(), times.len());
        let worst = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        assert!(worst <= 0.05, "speed {speed}: worst delivery error {worst} s");
    }
}

#[test]
fn pause_holds_session_time() {
    let log = marker_log(&[0.0, 0.2]);
    let control = ReplayControl::new(ReplayClock::new(1.0).unwrap());
    let c2 = control.clone();
    let pauser = std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(50));
        c2.pause();
        std::thread::sleep(std::time::Duration::from_millis(300));
        c2.resume();
    });
    let start = Instant::now();
    let report = replay(&log, &control, &Bus::default(), |_| Ok(())).unwrap();
    pauser.join().unwrap();
    assert_eq!(report.delivered, 2);
    let took = start.elapsed().as_secs_f64();
    assert!(took >= 0.45, "pause ignored: {took} s");
}

#[test]
fn corrupted_line_is_skipped_with_its_number() {
    let records: Vec<Record> = (0..30)
        .map(|k| Record::marker(&EventMarker::new(k as f64, "m").unwrap()))
        .collect();
    let mut text = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if i == 16 {
            text.extend_from_slice(b"{\"t\": 16.0, \"kind\": \"marker\", \"stre\n");
        } else {
            serde_json::to_writer(&mut text, r).unwrap();
            text.push(b'\n');
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.jsonl");
    std::fs::File::create(&p).unwrap().write_all(&text).unwrap();
    let control = ReplayControl::new(ReplayClock::batch());
    let bus = Bus::default();
    let report = replay_file(&p, &control, &bus, |_| Ok(())).unwrap();
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.skipped[0].line, 17);
    assert_eq!(report.delivered, 29);
    assert_eq!(bus.drain().markers.len(), 29);
}

#[test]
fn batch_mode_ingests_everything_in_order() {
    let spec = StreamSpec::new("eda", Modality::Eda, 1, 4.0);
    let mut records = vec![Record::stream_spec(0.0, &spec)];
    for k in 0..20 {
        records.push(Record::sample_block("eda", k as f64, 4.0, vec![vec![k as f64]; 4]));
    }
    let log = SessionLog::from_records(records);
    let bus = Bus::default();
    let mut last = f64::MIN;
    let start = Instant::now();
    let report = replay(&log, &ReplayControl::new(ReplayClock::batch()), &bus, |r| {
        assert!(r.t >= last);
        last = r.t;
        Ok(())
    })
    .unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert_eq!(report.delivered, 21);
    let samples = &bus.drain().samples["eda"];
    assert_eq!(samples.len(), 80);
    assert!(samples.windows(2).all(|w| w[0].t < w[1].t));
}

#[test]
fn record_replay_record_is_semantically_identical() {
    let s = simulate(&common::short_session(), &Taxonomy::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.jsonl");
    write_file(&p, &s.records).unwrap();
    let log = read_file(&p).unwrap();
    let (report, bytes) = rerecord(&log, Vec::new()).unwrap();
    assert_eq!(report.delivered, s.records.len());
    let again = read_records(&bytes[..]).unwrap();
    assert!(again.skipped.is_empty());
    assert_eq!(canonicalize(&again.records).unwrap(), canonicalize(&s.records).unwrap());
    let markers = again.records.iter().filter(|r| r.kind == RecordKind::Marker).count();
    assert_eq!(markers, s.truth.markers.len());
}
