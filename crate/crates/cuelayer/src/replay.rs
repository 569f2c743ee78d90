//! Replay of a recorded session onto a [`Bus`] at a scaled wall-clock rate.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, MutexGuard, PoisonError};
use std::time::{Duration, Instant};

use cuelayer_core::sync::StreamSpec;
use serde::{Deserialize, Serialize};

use crate::bus::{Bus, Recorder, StreamProducer};
use crate::error::{Error, Result};
use crate::record::{read_file, Record, RecordKind, RecordWriter, SamplePayload, SessionLog, SkippedLine};

/// Session time as a function of wall time.
///
/// An infinite speed is batch mode: every event is due immediately. While
/// unpaused, `t` never decreases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayClock {
    speed: f64,
    paused: bool,
    t: f64,
    #[serde(skip)]
    anchor: Option<Instant>,
}

impl ReplayClock {
    pub fn new(speed: f64) -> Result<Self> {
        check_speed(speed)?;
        Ok(Self {
            speed,
            paused: false,
            t: 0.0,
            anchor: None,
        })
    }

    pub fn batch() -> Self {
        Self {
            speed: f64::INFINITY,
            paused: false,
            t: 0.0,
            anchor: None,
        }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn is_batch(&self) -> bool {
        self.speed.is_infinite()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Session time as of the last update.
    pub fn t(&self) -> f64 {
        self.t
    }

    /// Starts running from session time `t`.
    pub fn start_at(&mut self, t: f64) {
        self.t = t;
        self.anchor = Some(Instant::now());
    }

    /// Brings `t` up to date with the wall clock and returns it.
    pub fn now(&mut self) -> f64 {
        if let (false, Some(anchor)) = (self.paused, self.anchor) {
            if !self.is_batch() {
                let now = Instant::now();
                self.t += now.duration_since(anchor).as_secs_f64() * self.speed;
                self.anchor = Some(now);
            }
        }
        self.t
    }

    pub fn pause(&mut self) {
        self.now();
        self.paused = true;
    }

    pub fn resume(&mut self) {
        if self.paused {
            self.paused = false;
            self.anchor = Some(Instant::now());
        }
    }

    pub fn set_speed(&mut self, speed: f64) -> Result<()> {
        check_speed(speed)?;
        self.now();
        self.speed = speed;
        self.anchor = Some(Instant::now());
        Ok(())
    }

    /// Wall time left until session time `target`; `None` while paused.
    pub fn until(&mut self, target: f64) -> Option<Duration> {
        if self.paused {
            return None;
        }
        if self.is_batch() {
            self.t = self.t.max(target);
            return Some(Duration::ZERO);
        }
        let now = self.now();
        Some(Duration::from_secs_f64(((target - now) / self.speed).max(0.0)))
    }

    /// Marks `target` as reached.
    fn reach(&mut self, target: f64) {
        self.t = self.t.max(target);
    }
}

fn check_speed(speed: f64) -> Result<()> {
    if speed > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("replay speed must be positive, got {speed}")))
    }
}

#[derive(Debug)]
struct ControlState {
    clock: ReplayClock,
    stopped: bool,
}

/// Clock shared between a replay thread and its controllers.
#[derive(Debug, Clone)]
pub struct ReplayControl {
    inner: Arc<(Mutex<ControlState>, Condvar)>,
}

impl ReplayControl {
    pub fn new(clock: ReplayClock) -> Self {
        Self {
            inner: Arc::new((Mutex::new(ControlState { clock, stopped: false }), Condvar::new())),
        }
    }

    fn state(&self) -> MutexGuard<'_, ControlState> {
        self.inner.0.lock().unwrap_or_else(PoisonError::into_inner)
    }

    fn modify<T>(&self, f: impl FnOnce(&mut ControlState) -> T) -> T {
        let out = f(&mut self.state());
        self.inner.1.notify_all();
        out
    }

    pub fn pause(&self) {
        self.modify(|s| s.clock.pause());
    }

    pub fn resume(&self) {
        self.modify(|s| s.clock.resume());
    }

    pub fn set_speed(&self, speed: f64) -> Result<()> {
        self.modify(|s| s.clock.set_speed(speed))
    }

    pub fn stop(&self) {
        self.modify(|s| s.stopped = true);
    }

    pub fn is_stopped(&self) -> bool {
        self.state().stopped
    }

    /// Current clock with `t` brought up to date.
    pub fn clock(&self) -> ReplayClock {
        let mut s = self.state();
        s.clock.now();
        s.clock.clone()
    }

    fn start_at(&self, t: f64) {
        self.modify(|s| s.clock.start_at(t));
    }

    /// Blocks until session time `target` is due. Returns false when stopped.
    fn wait_for(&self, target: f64) -> bool {
        let (lock, cv) = &*self.inner;
        let mut s = lock.lock().unwrap_or_else(PoisonError::into_inner);
        loop {
            if s.stopped {
                return false;
            }
            match s.clock.until(target) {
                Some(d) if d.is_zero() => {
                    s.clock.reach(target);
                    return true;
                }
                Some(d) => s = cv.wait_timeout(s, d).unwrap_or_else(PoisonError::into_inner).0,
                None => s = cv.wait(s).unwrap_or_else(PoisonError::into_inner),
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub delivered: usize,
    pub skipped: Vec<SkippedLine>,
    pub stopped: bool,
}

/// Feeds `log` into `bus` in time order as each record falls due.
///
/// Stream declarations register producers, sample blocks and transcript
/// lines go to their streams and markers to the marker log. Every record is
/// then handed to `sink`, which also sees the records the bus does not carry
/// (storybook context, features, proposals and decisions).
pub fn replay(
    log: &SessionLog,
    control: &ReplayControl,
    bus: &Bus,
    mut sink: impl FnMut(&Record) -> Result<()>,
) -> Result<ReplayReport> {
    let mut report = ReplayReport {
        skipped: log.skipped.clone(),
        ..ReplayReport::default()
    };
    let Some(first) = log.records.first() else {
        return Ok(report);
    };
    control.start_at(first.t);
    let mut producers: BTreeMap<String, StreamProducer> = BTreeMap::new();
    for r in &log.records {
        if !control.wait_for(r.t) {
            report.stopped = true;
            break;
        }
        deliver(r, bus, &mut producers)?;
        sink(r)?;
        report.delivered += 1;
    }
    Ok(report)
}

pub fn replay_file(
    path: &Path,
    control: &ReplayControl,
    bus: &Bus,
    sink: impl FnMut(&Record) -> Result<()>,
) -> Result<ReplayReport> {
    replay(&read_file(path)?, control, bus, sink)
}

fn deliver(r: &Record, bus: &Bus, producers: &mut BTreeMap<String, StreamProducer>) -> Result<()> {
    match r.kind {
        RecordKind::Context => {
            if let Some(spec) = r.as_stream_spec() {
                register(bus, producers, spec)?;
            }
        }
        RecordKind::Marker => bus.push_marker(r.as_marker()?)?,
        RecordKind::Sample => match r.payload()? {
            SamplePayload::Text(u) => bus.push_utterance(&r.stream, u),
            SamplePayload::Block(_) => {
                let producer = match producers.get(&r.stream) {
                    Some(p) => p,
                    None => match bus.producer(&r.stream) {
                        Some(p) => producers.entry(r.stream.clone()).or_insert(p),
                        None => {
                            log::warn!("t={}: samples on undeclared stream {}", r.t, r.stream);
                            return Ok(());
                        }
                    },
                };
                producer.push(&r.samples()?)?;
            }
        },
        _ => {}
    }
    Ok(())
}

fn register(bus: &Bus, producers: &mut BTreeMap<String, StreamProducer>, spec: StreamSpec) -> Result<()> {
    if producers.contains_key(&spec.stream_id) {
        return Ok(());
    }
    let id = spec.stream_id.clone();
    let p = match bus.producer(&id) {
        Some(p) => p,
        None => bus.register_stream(spec)?,
    };
    producers.insert(id, p);
    Ok(())
}

/// Replays `log` in batch mode through a fresh bus and records what comes
/// out, draining after every record.
pub fn rerecord<W: Write>(log: &SessionLog, out: W) -> Result<(ReplayReport, W)> {
    let bus = Bus::default();
    let control = ReplayControl::new(ReplayClock::batch());
    let mut recorder = Recorder::new(RecordWriter::new(out));
    let report = replay(log, &control, &bus, |r| {
        if let Some(spec) = r.as_stream_spec() {
            recorder.declare(&[spec], r.t)?;
        } else {
            match r.kind {
                RecordKind::Sample | RecordKind::Marker => {}
                _ => recorder.write_record(r)?,
            }
        }
        recorder.record(&bus.drain())
    })?;
    Ok((report, recorder.finish()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cuelayer_core::sync::{EventMarker, Modality};

    #[test]
    fn clock_scales_and_pauses() {
        let mut c = ReplayClock::new(2.0).unwrap();
        c.start_at(10.0);
        std::thread::sleep(Duration::from_millis(50));
        let t = c.now();
        assert!(t >= 10.09 && t < 10.3, "{t}");
        c.pause();
        let held = c.t();
        std::thread::sleep(Duration::from_millis(20));
        assert_eq!(c.now(), held);
        assert_eq!(c.until(held + 1.0), None);
        c.resume();
        assert!(c.until(held + 1.0).unwrap() <= Duration::from_millis(500));
        assert!(ReplayClock::new(0.0).is_err());
        assert!(ReplayClock::new(-1.0).is_err());
        assert!(ReplayClock::batch().is_batch());
    }

    #[test]
    fn batch_replay_preserves_order_and_markers() {
        let spec = StreamSpec::new("x", Modality::Eda, 1, 10.0);
        let mut records = vec![Record::stream_spec(0.0, &spec)];
        for k in 0..5 {
            let t = k as f64;
            records.push(Record::sample_block("x", t, 10.0, vec![vec![t]; 10]));
        }
        records.push(Record::marker(&EventMarker::new(2.5, "m").unwrap()));
        let log = SessionLog::from_records(records);
        let bus = Bus::default();
        let mut seen = Vec::new();
        let report = replay(&log, &ReplayControl::new(ReplayClock::batch()), &bus, |r| {
            seen.push(r.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(report.delivered, 7);
        assert!(seen.windows(2).all(|w| w[0] <= w[1]));
        let d = bus.drain();
        assert_eq!(d.samples["x"].len(), 50);
        assert_eq!(d.markers.len(), 1);
    }

    #[test]
    fn stop_ends_a_paused_replay() {
        let log = SessionLog::from_records(vec![
            Record::marker(&EventMarker::new(0.0, "a").unwrap()),
            Record::marker(&EventMarker::new(100.0, "b").unwrap()),
        ]);
        let control = ReplayControl::new(ReplayClock::new(1.0).unwrap());
        let c2 = control.clone();
        let h = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(30));
            c2.pause();
            std::thread::sleep(Duration::from_millis(30));
            c2.stop();
        });
        let report = replay(&log, &control, &Bus::default(), |_| Ok(())).unwrap();
        h.join().unwrap();
        assert!(report.stopped);
        assert_eq!(report.delivered, 1);
    }
}
