//! Stream registry: timestamped multichannel buffers on a shared monotonic
//! clock, event markers, clock-offset estimation and alignment of several
//! streams onto a common time grid.
//!
//! This is the single-owner core. The `cuelayer` crate wraps the same
//! buffers in locks for concurrent producers.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

/// Default ring retention per stream, seconds.
pub const DEFAULT_RETENTION_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    VideoLandmarks,
    Emg,
    Eeg,
    Eda,
    Ecg,
    Proxemics,
    Transcript,
}

impl Modality {
    /// Minimum sampling rate (Hz) and channel count for full functionality.
    pub fn minimum_requirements(self) -> (f64, usize) {
        match self {
            Modality::Audio => (48_000.0, 1),
            Modality::VideoLandmarks => (30.0, 1),
            Modality::Ecg | Modality::Eda => (250.0, 1),
            Modality::Emg => (800.0, 1),
            Modality::Eeg => (250.0, 32),
            Modality::Proxemics | Modality::Transcript => (0.0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub stream_id: String,
    pub modality: Modality,
    pub channel_count: usize,
    /// Hz; 0 for irregular streams.
    pub nominal_rate: f64,
    #[serde(default)]
    pub channel_units: Vec<String>,
}

impl StreamSpec {
    pub fn new(
        stream_id: impl Into<String>,
        modality: Modality,
        channel_count: usize,
        nominal_rate: f64,
    ) -> Self {
        Self {
            stream_id: stream_id.into(),
            modality,
            channel_count,
            nominal_rate,
            channel_units: Vec::new(),
        }
    }
}

/// A hardware minimum that the stream does not meet. Streams below minimum
/// are still accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementWarning {
    pub stream_id: String,
    pub message: String,
}

pub fn check_requirements(spec: &StreamSpec) -> Vec<RequirementWarning> {
    let (min_rate, min_channels) = spec.modality.minimum_requirements();
    let mut out = Vec::new();
    if spec.nominal_rate > 0.0 && spec.nominal_rate < min_rate {
        out.push(RequirementWarning {
            stream_id: spec.stream_id.clone(),
            message: format!(
                "{:?} stream at {} Hz is below the {} Hz minimum",
                spec.modality, spec.nominal_rate, min_rate
            ),
        });
    }
    if spec.channel_count < min_channels {
        out.push(RequirementWarning {
            stream_id: spec.stream_id.clone(),
            message: format!(
                "{:?} stream has {} channels, {} required for source decomposition",
                spec.modality, spec.channel_count, min_channels
            ),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub stream_id: String,
    pub t: f64,
    pub values: Vec<f64>,
}

impl TimedSample {
    pub fn new(stream_id: impl Into<String>, t: f64, values: Vec<f64>) -> Self {
        Self {
            stream_id: stream_id.into(),
            t,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMarker {
    pub t: f64,
    pub label: String,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

impl EventMarker {
    pub fn new(t: f64, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(invalid("marker label must be non-empty"));
        }
        Ok(Self {
            t,
            label,
            payload: BTreeMap::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamHandle {
    pub index: usize,
    pub stream_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PushReport {
    pub accepted: usize,
    pub rejected: usize,
}

/// Ring buffer of one stream's samples, stored on the local clock.
#[derive(Debug, Clone)]
pub struct StreamBuffer {
    spec: StreamSpec,
    times: VecDeque<f64>,
    values: VecDeque<f64>,
    retention: f64,
    clock_offset: f64,
    warnings: Vec<RequirementWarning>,
}

impl StreamBuffer {
    pub fn new(spec: StreamSpec, retention: f64) -> Result<Self> {
        if spec.channel_count == 0 {
            return Err(invalid("channel_count must be at least 1"));
        }
        if !(spec.nominal_rate >= 0.0) {
            return Err(invalid("nominal_rate must be non-negative"));
        }
        if spec.stream_id.is_empty() {
            return Err(invalid("stream_id must be non-empty"));
        }
        let warnings = check_requirements(&spec);
        Ok(Self {
            spec,
            times: VecDeque::new(),
            values: VecDeque::new(),
            retention,
            clock_offset: 0.0,
            warnings,
        })
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn warnings(&self) -> &[RequirementWarning] {
        &self.warnings
    }

    /// Remote-minus-local offset subtracted from incoming timestamps.
    pub fn set_clock_offset(&mut self, offset: f64) {
        self.clock_offset = offset;
    }

    pub fn clock_offset(&self) -> f64 {
        self.clock_offset
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(first, last)` buffered local timestamps.
    pub fn coverage(&self) -> Option<(f64, f64)> {
        Some((*self.times.front()?, *self.times.back()?))
    }

    /// Appends samples in order; samples not strictly after the last accepted
    /// timestamp are rejected and counted.
    pub fn push(&mut self, samples: &[TimedSample]) -> Result<PushReport> {
        let cc = self.spec.channel_count;
        if let Some(bad) = samples.iter().find(|s| s.values.len() != cc) {
            return Err(Error::Arity {
                stream: self.spec.stream_id.clone(),
                expected: cc,
                got: bad.values.len(),
            });
        }
        let mut report = PushReport::default();
        for s in samples {
            let t = s.t - self.clock_offset;
            let ok = t.is_finite() && self.times.back().is_none_or(|&last| t > last);
            if ok {
                self.times.push_back(t);
                self.values.extend(s.values.iter().copied());
                report.accepted += 1;
            } else {
                report.rejected += 1;
            }
        }
        self.evict();
        Ok(report)
    }

    fn evict(&mut self) {
        let Some(&last) = self.times.back() else {
            return;
        };
        let cutoff = last - self.retention;
        let cc = self.spec.channel_count;
        while self.times.front().is_some_and(|&t| t < cutoff) {
            self.times.pop_front();
            self.values.drain(..cc);
        }
    }

    /// Removes and returns all buffered samples in timestamp order.
    pub fn drain(&mut self) -> Vec<TimedSample> {
        let cc = self.spec.channel_count;
        let mut out = Vec::with_capacity(self.times.len());
        while let Some(t) = self.times.pop_front() {
            let values = self.values.drain(..cc).collect();
            out.push(TimedSample {
                stream_id: self.spec.stream_id.clone(),
                t,
                values,
            });
        }
        out
    }

    /// Copies out buffered samples with `t0 <= t < t1`.
    pub fn range(&self, t0: f64, t1: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let cc = self.spec.channel_count;
        let lo = self.times.partition_point(|&t| t < t0);
        let hi = self.times.partition_point(|&t| t < t1);
        let times = (lo..hi).map(|i| self.times[i]).collect();
        let values = (lo..hi)
            .map(|i| (0..cc).map(|c| self.values[i * cc + c]).collect())
            .collect();
        (times, values)
    }

    /// Linear interpolation of every channel onto `grid`; result is
    /// `channels × grid.len()`.
    pub fn interpolate(&self, grid: &[f64]) -> Result<Matrix> {
        let cc = self.spec.channel_count;
        let gap = || Error::Gap {
            stream: self.spec.stream_id.clone(),
            t0: grid.first().copied().unwrap_or(0.0),
            t1: grid.last().copied().unwrap_or(0.0),
        };
        let (first, last) = self.coverage().ok_or_else(gap)?;
        const EPS: f64 = 1e-9;
        if let (Some(&g0), Some(&g1)) = (grid.first(), grid.last()) {
            if g0 < first - EPS || g1 > last + EPS {
                return Err(gap());
            }
        }
        let mut out = Matrix::zeros(cc, grid.len());
        let n = self.times.len();
        for (k, &g) in grid.iter().enumerate() {
            let idx = self.times.partition_point(|&t| t <= g);
            let (i0, i1) = if idx == 0 {
                (0, 0)
            } else if idx >= n {
                (n - 1, n - 1)
            } else {
                (idx - 1, idx)
            };
            let (ta, tb) = (self.times[i0], self.times[i1]);
            let w = if i0 == i1 || tb == ta {
                0.0
            } else {
                (g - ta) / (tb - ta)
            };
            for c in 0..cc {
                let a = self.values[i0 * cc + c];
                let b = self.values[i1 * cc + c];
                out[(c, k)] = a + (b - a) * w;
            }
        }
        Ok(out)
    }
}

/// Several streams resampled onto one grid, plus the markers inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWindow {
    pub t0: f64,
    pub t1: f64,
    pub grid_rate: f64,
    pub grid: Vec<f64>,
    /// `(stream_id, channels × grid)` in request order.
    pub streams: Vec<(String, Matrix)>,
    pub markers: Vec<EventMarker>,
}

impl AlignedWindow {
    pub fn stream(&self, id: &str) -> Option<&Matrix> {
        self.streams.iter().find(|(s, _)| s == id).map(|(_, m)| m)
    }
}

/// Grid points `t0 + k / rate` for `k < round(length · rate)`.
pub fn time_grid(t0: f64, length: f64, grid_rate: f64) -> Result<Vec<f64>> {
    if !(grid_rate > 0.0) || !(length > 0.0) {
        return Err(invalid("grid rate and window length must be positive"));
    }
    let n = (length * grid_rate).round() as usize;
    Ok((0..n).map(|k| t0 + k as f64 / grid_rate).collect())
}

/// Aligns the given buffers onto a common grid over `[t0, t0 + length)`.
pub fn align_buffers(
    buffers: &[&StreamBuffer],
    markers: &[EventMarker],
    t0: f64,
    length: f64,
    grid_rate: f64,
) -> Result<AlignedWindow> {
    let grid = time_grid(t0, length, grid_rate)?;
    let t1 = t0 + grid.len() as f64 / grid_rate;
    let mut streams = Vec::with_capacity(buffers.len());
    for b in buffers {
        streams.push((b.spec().stream_id.clone(), b.interpolate(&grid)?));
    }
    let markers = markers
        .iter()
        .filter(|m| m.t >= t0 && m.t < t1)
        .cloned()
        .collect();
    Ok(AlignedWindow {
        t0,
        t1,
        grid_rate,
        grid,
        streams,
        markers,
    })
}

/// One round-trip clock probe: `(local_send, remote_recv, remote_send, local_recv)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub local_send: f64,
    pub remote_recv: f64,
    pub remote_send: f64,
    pub local_recv: f64,
}

impl ProbePair {
    pub fn new(local_send: f64, remote_recv: f64, remote_send: f64, local_recv: f64) -> Self {
        Self {
            local_send,
            remote_recv,
            remote_send,
            local_recv,
        }
    }

    /// NTP midpoint estimate of remote-minus-local.
    pub fn offset(&self) -> f64 {
        ((self.remote_recv - self.local_send) + (self.remote_send - self.local_recv)) / 2.0
    }
}

/// Median of the per-probe midpoint offsets.
pub fn estimate_clock_offset(pairs: &[ProbePair]) -> Result<f64> {
    let offsets: Vec<f64> = pairs.iter().map(ProbePair::offset).collect();
    crate::math::median(&offsets).ok_or(Error::Empty)
}

/// Single-owner registry of streams and markers.
#[derive(Debug, Clone)]
pub struct StreamRegistry {
    buffers: Vec<StreamBuffer>,
    index: BTreeMap<String, usize>,
    markers: Vec<EventMarker>,
    retention: f64,
}

impl Default for StreamRegistry {
    fn default() -> Self {
        Self::new(DEFAULT_RETENTION_S)
    }
}

impl StreamRegistry {
    pub fn new(retention: f64) -> Self {
        Self {
            buffers: Vec::new(),
            index: BTreeMap::new(),
            markers: Vec::new(),
            retention,
        }
    }

    pub fn register_stream(&mut self, spec: StreamSpec) -> Result<StreamHandle> {
        if self.index.contains_key(&spec.stream_id) {
            return Err(Error::DuplicateStream(spec.stream_id));
        }
        let id = spec.stream_id.clone();
        let buffer = StreamBuffer::new(spec, self.retention)?;
        let index = self.buffers.len();
        self.buffers.push(buffer);
        self.index.insert(id.clone(), index);
        Ok(StreamHandle {
            index,
            stream_id: id,
        })
    }

    pub fn handle(&self, stream_id: &str) -> Option<StreamHandle> {
        self.index.get(stream_id).map(|&index| StreamHandle {
            index,
            stream_id: stream_id.into(),
        })
    }

    pub fn buffer(&self, handle: &StreamHandle) -> Result<&StreamBuffer> {
        self.buffers
            .get(handle.index)
            .filter(|b| b.spec().stream_id == handle.stream_id)
            .ok_or_else(|| Error::UnknownStream(handle.stream_id.clone()))
    }

    pub fn buffer_mut(&mut self, handle: &StreamHandle) -> Result<&mut StreamBuffer> {
        self.buffers
            .get_mut(handle.index)
            .filter(|b| b.spec().stream_id == handle.stream_id)
            .ok_or_else(|| Error::UnknownStream(handle.stream_id.clone()))
    }

    pub fn spec(&self, handle: &StreamHandle) -> Result<&StreamSpec> {
        Ok(self.buffer(handle)?.spec())
    }

    pub fn warnings(&self, handle: &StreamHandle) -> Result<&[RequirementWarning]> {
        Ok(self.buffer(handle)?.warnings())
    }

    pub fn push_samples(
        &mut self,
        handle: &StreamHandle,
        samples: &[TimedSample],
    ) -> Result<PushReport> {
        self.buffer_mut(handle)?.push(samples)
    }

    pub fn push_marker(&mut self, marker: EventMarker) -> Result<()> {
        if marker.label.is_empty() {
            return Err(invalid("marker label must be non-empty"));
        }
        let pos = self.markers.partition_point(|m| m.t <= marker.t);
        self.markers.insert(pos, marker);
        Ok(())
    }

    pub fn markers(&self) -> &[EventMarker] {
        &self.markers
    }

    pub fn stream_ids(&self) -> impl Iterator<Item = &str> {
        self.buffers.iter().map(|b| b.spec().stream_id.as_str())
    }

    pub fn align_window(
        &self,
        stream_ids: &[&str],
        t0: f64,
        length: f64,
        grid_rate: f64,
    ) -> Result<AlignedWindow> {
        let mut buffers = Vec::with_capacity(stream_ids.len());
        for id in stream_ids {
            let &i = self
                .index
                .get(*id)
                .ok_or_else(|| Error::UnknownStream((*id).into()))?;
            buffers.push(&self.buffers[i]);
        }
        align_buffers(&buffers, &self.markers, t0, length, grid_rate)
    }
}
