//! Thread-safe stream bus over the core buffers.
//!
//! Each stream has its own lock, so producers on distinct streams never
//! contend. Alignment locks the requested streams in id order and reads one
//! consistent snapshot.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};

use cuelayer_core::sync::{
    align_buffers, estimate_clock_offset, AlignedWindow, EventMarker, ProbePair, PushReport,
    RequirementWarning, StreamBuffer, StreamSpec, TimedSample, DEFAULT_RETENTION_S,
};
use cuelayer_core::verbal::Utterance;

use crate::error::Result;
use crate::record::{block_samples, Record, RecordWriter};

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Producer-side handle for one stream; cheap to clone and `Send`.
#[derive(Debug, Clone)]
pub struct StreamProducer {
    stream_id: String,
    buffer: Arc<Mutex<StreamBuffer>>,
}

impl StreamProducer {
    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn spec(&self) -> StreamSpec {
        lock(&self.buffer).spec().clone()
    }

    pub fn warnings(&self) -> Vec<RequirementWarning> {
        lock(&self.buffer).warnings().to_vec()
    }

    pub fn push(&self, samples: &[TimedSample]) -> Result<PushReport> {
        let report = lock(&self.buffer).push(samples)?;
        if report.rejected > 0 {
            log::debug!(
                "{}: rejected {} out-of-order samples",
                self.stream_id,
                report.rejected
            );
        }
        Ok(report)
    }
}

/// Everything taken out of the bus by [`Bus::drain`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Drained {
    pub samples: BTreeMap<String, Vec<TimedSample>>,
    pub markers: Vec<EventMarker>,
    pub utterances: Vec<(String, Utterance)>,
}

#[derive(Debug)]
struct Inner {
    retention: f64,
    streams: RwLock<BTreeMap<String, Arc<Mutex<StreamBuffer>>>>,
    /// All markers, kept for alignment.
    markers: Mutex<Vec<EventMarker>>,
    /// Markers and utterances not yet drained.
    pending_markers: Mutex<Vec<EventMarker>>,
    pending_utterances: Mutex<Vec<(String, Utterance)>>,
}

#[derive(Debug, Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new(DEFAULT_RETENTION_S)
    }
}

impl Bus {
    pub fn new(retention: f64) -> Self {
        Self {
            inner: Arc::new(Inner {
                retention,
                streams: RwLock::new(BTreeMap::new()),
                markers: Mutex::new(Vec::new()),
                pending_markers: Mutex::new(Vec::new()),
                pending_utterances: Mutex::new(Vec::new()),
            }),
        }
    }

    /// Registers a stream on the local clock. Requirement shortfalls are
    /// logged and kept on the handle.
    pub fn register_stream(&self, spec: StreamSpec) -> Result<StreamProducer> {
        self.register_with_offset(spec, 0.0)
    }

    /// Registers a remote stream whose timestamps are shifted onto the local
    /// clock by the offset estimated from `probes`.
    pub fn register_remote_stream(
        &self,
        spec: StreamSpec,
        probes: &[ProbePair],
    ) -> Result<StreamProducer> {
        let offset = estimate_clock_offset(probes)?;
        self.register_with_offset(spec, offset)
    }

    fn register_with_offset(&self, spec: StreamSpec, offset: f64) -> Result<StreamProducer> {
        let mut streams = self.inner.streams.write().unwrap_or_else(PoisonError::into_inner);
        if streams.contains_key(&spec.stream_id) {
            return Err(cuelayer_core::error::Error::DuplicateStream(spec.stream_id).into());
        }
        let stream_id = spec.stream_id.clone();
        let mut buffer = StreamBuffer::new(spec, self.inner.retention)?;
        buffer.set_clock_offset(offset);
        for w in buffer.warnings() {
            log::warn!("{}", w.message);
        }
        let buffer = Arc::new(Mutex::new(buffer));
        streams.insert(stream_id.clone(), buffer.clone());
        Ok(StreamProducer { stream_id, buffer })
    }

    pub fn producer(&self, stream_id: &str) -> Option<StreamProducer> {
        let streams = self.inner.streams.read().unwrap_or_else(PoisonError::into_inner);
        streams.get(stream_id).map(|b| StreamProducer {
            stream_id: stream_id.into(),
            buffer: b.clone(),
        })
    }

    pub fn specs(&self) -> Vec<StreamSpec> {
        let streams = self.inner.streams.read().unwrap_or_else(PoisonError::into_inner);
        streams.values().map(|b| lock(b).spec().clone()).collect()
    }

    pub fn push_marker(&self, marker: EventMarker) -> Result<()> {
        if marker.label.is_empty() {
            return Err(cuelayer_core::error::Error::InvalidParameter(
                "marker label must be non-empty".into(),
            )
            .into());
        }
        let mut all = lock(&self.inner.markers);
        let pos = all.partition_point(|m| m.t <= marker.t);
        all.insert(pos, marker.clone());
        lock(&self.inner.pending_markers).push(marker);
        Ok(())
    }

    pub fn markers(&self) -> Vec<EventMarker> {
        lock(&self.inner.markers).clone()
    }

    pub fn push_utterance(&self, stream: &str, utterance: Utterance) {
        lock(&self.inner.pending_utterances).push((stream.into(), utterance));
    }

    /// Aligns the streams onto a common grid over `[t0, t0 + length)`.
    pub fn align_window(
        &self,
        stream_ids: &[&str],
        t0: f64,
        length: f64,
        grid_rate: f64,
    ) -> Result<AlignedWindow> {
        let streams = self.inner.streams.read().unwrap_or_else(PoisonError::into_inner);
        let mut wanted: Vec<&str> = stream_ids.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let mut guards = BTreeMap::new();
        for id in wanted {
            let b = streams
                .get(id)
                .ok_or_else(|| cuelayer_core::error::Error::UnknownStream(id.into()))?;
            guards.insert(id, lock(b));
        }
        let buffers: Vec<&StreamBuffer> = stream_ids.iter().map(|id| &*guards[id]).collect();
        let markers = lock(&self.inner.markers);
        Ok(align_buffers(&buffers, &markers, t0, length, grid_rate)?)
    }

    /// Takes every buffered sample plus the markers and utterances pushed
    /// since the previous drain.
    pub fn drain(&self) -> Drained {
        let streams = self.inner.streams.read().unwrap_or_else(PoisonError::into_inner);
        let samples = streams
            .iter()
            .map(|(id, b)| (id.clone(), lock(b).drain()))
            .collect();
        Drained {
            samples,
            markers: std::mem::take(&mut *lock(&self.inner.pending_markers)),
            utterances: std::mem::take(&mut *lock(&self.inner.pending_utterances)),
        }
    }
}

/// Writes drained bus contents as session records.
pub struct Recorder<W: Write> {
    writer: RecordWriter<W>,
    declared: BTreeMap<String, f64>,
}

impl<W: Write> Recorder<W> {
    pub fn new(writer: RecordWriter<W>) -> Self {
        Self {
            writer,
            declared: BTreeMap::new(),
        }
    }

    /// Declares streams not yet written, at time `t`.
    pub fn declare(&mut self, specs: &[StreamSpec], t: f64) -> Result<()> {
        for s in specs {
            if !self.declared.contains_key(&s.stream_id) {
                self.writer.write(&Record::stream_spec(t, s))?;
                self.declared.insert(s.stream_id.clone(), s.nominal_rate);
            }
        }
        Ok(())
    }

    pub fn write_record(&mut self, r: &Record) -> Result<()> {
        self.writer.write(r)
    }

    pub fn record(&mut self, drained: &Drained) -> Result<()> {
        for (id, samples) in &drained.samples {
            let rate = self.declared.get(id).copied().unwrap_or(0.0);
            for r in block_samples(id, samples, rate) {
                self.writer.write(&r)?;
            }
        }
        for m in &drained.markers {
            self.writer.write(&Record::marker(m))?;
        }
        for (stream, u) in &drained.utterances {
            self.writer.write(&Record::utterance(stream, u))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        self.writer.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cuelayer_core::sync::Modality;
    use std::thread;

    #[test]
    fn concurrent_producers_and_consistent_alignment() {
        let bus = Bus::default();
        let handles: Vec<_> = [("a", 100.0), ("b", 250.0)]
            .into_iter()
            .map(|(id, rate)| {
                let p = bus.register_stream(StreamSpec::new(id, Modality::Emg, 1, rate)).unwrap();
                thread::spawn(move || {
                    for i in 0..=(2.0 * rate) as usize {
                        let s = TimedSample::new(id, i as f64 / rate, vec![if id == "a" { 1.0 } else { 2.0 }]);
                        p.push(&[s]).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        bus.push_marker(EventMarker::new(0.5, "m").unwrap()).unwrap();
        let w = bus.align_window(&["b", "a"], 0.0, 1.0, 100.0).unwrap();
        assert_eq!(w.streams[0].0, "b");
        assert!(w.stream("a").unwrap().as_slice().iter().all(|&v| v == 1.0));
        assert!(w.stream("b").unwrap().as_slice().iter().all(|&v| v == 2.0));
        assert_eq!(w.markers.len(), 1);
        assert!(bus.register_stream(StreamSpec::new("a", Modality::Emg, 1, 1.0)).is_err());
        assert!(bus.align_window(&["zz"], 0.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn remote_offset_applied_at_ingestion() {
        let bus = Bus::default();
        let p = bus
            .register_remote_stream(
                StreamSpec::new("r", Modality::Eda, 1, 10.0),
                &[ProbePair::new(0.0, 5.1, 5.1, 0.2)],
            )
            .unwrap();
        p.push(&[TimedSample::new("r", 5.0, vec![1.0])]).unwrap();
        let d = bus.drain();
        assert!(d.samples["r"][0].t.abs() < 1e-12);
    }

    #[test]
    fn eeg_warning_on_handle() {
        let bus = Bus::default();
        let p = bus.register_stream(StreamSpec::new("eeg", Modality::Eeg, 16, 250.0)).unwrap();
        assert_eq!(p.warnings().len(), 1);
    }
}
