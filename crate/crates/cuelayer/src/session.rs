//! A parsed session: stream declarations, channel-major sample arrays,
//! markers, transcript and storybook context.

use std::collections::BTreeMap;

use cuelayer_core::interpret::ContextState;
use cuelayer_core::linalg::Matrix;
use cuelayer_core::sync::{EventMarker, Modality, StreamSpec};
use cuelayer_core::verbal::Utterance;

use crate::error::{Error, Result};
use crate::record::{Record, RecordKind, SamplePayload};

/// Samples of one stream stored per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamData {
    pub spec: StreamSpec,
    pub times: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
}

impl StreamData {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Effective rate: the declared one, else the mean sample spacing.
    pub fn rate(&self) -> f64 {
        if self.spec.nominal_rate > 0.0 {
            return self.spec.nominal_rate;
        }
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        (n - 1) as f64 / (self.end() - self.start())
    }

    /// `channels × samples` copy of the whole stream.
    pub fn matrix(&self) -> Result<Matrix> {
        let data: Vec<f64> = self.channels.iter().flatten().copied().collect();
        Ok(Matrix::from_vec(self.channels.len(), self.len(), data)?)
    }

    /// Sample index range `[i0, i1)` covering `[t0, t1)`.
    pub fn index_range(&self, t0: f64, t1: f64) -> (usize, usize) {
        let i0 = self.times.partition_point(|&t| t < t0);
        let i1 = self.times.partition_point(|&t| t < t1);
        (i0, i1)
    }

    /// `channels × (i1 - i0)` slice.
    pub fn window(&self, i0: usize, i1: usize) -> Result<Matrix> {
        let data: Vec<f64> = self.channels.iter().flat_map(|c| c[i0..i1].iter().copied()).collect();
        Ok(Matrix::from_vec(self.channels.len(), i1 - i0, data)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SessionData {
    pub streams: BTreeMap<String, StreamData>,
    pub markers: Vec<EventMarker>,
    pub utterances: Vec<Utterance>,
    /// Storybook context records in time order.
    pub contexts: Vec<(f64, ContextState)>,
    /// Sample records of streams that were never declared.
    pub undeclared: BTreeMap<String, usize>,
    pub end_time: f64,
}

impl SessionData {
    /// Collects the contents of `records`, which must be sorted by time.
    pub fn from_records(records: &[Record]) -> Result<Self> {
        let mut out = SessionData::default();
        let mut specs: BTreeMap<String, StreamSpec> = BTreeMap::new();
        for r in records {
            if r.kind == RecordKind::Context {
                if let Some(spec) = r.as_stream_spec() {
                    specs.insert(spec.stream_id.clone(), spec);
                }
            }
        }
        for r in records {
            out.end_time = out.end_time.max(r.t);
            match r.kind {
                RecordKind::Context => {
                    if let Some(ctx) = r.as_storybook() {
                        out.contexts.push((r.t, ctx));
                    }
                }
                RecordKind::Marker => out.markers.push(r.as_marker()?),
                RecordKind::Sample => match r.payload()? {
                    SamplePayload::Text(u) => {
                        out.end_time = out.end_time.max(u.t1);
                        out.utterances.push(u);
                    }
                    SamplePayload::Block(block) => {
                        let Some(spec) = specs.get(&r.stream) else {
                            *out.undeclared.entry(r.stream.clone()).or_insert(0) += 1;
                            continue;
                        };
                        let stream = out.streams.entry(r.stream.clone()).or_insert_with(|| StreamData {
                            spec: spec.clone(),
                            times: Vec::new(),
                            channels: vec![Vec::new(); spec.channel_count],
                        });
                        let rate = block.rate.unwrap_or(1.0);
                        for (i, frame) in block.values.into_iter().enumerate() {
                            if frame.len() != stream.channels.len() {
                                return Err(Error::Record {
                                    t: r.t,
                                    stream: r.stream.clone(),
                                    message: format!(
                                        "frame has {} values, stream declares {} channels",
                                        frame.len(),
                                        stream.channels.len()
                                    ),
                                });
                            }
                            let t = crate::record::frame_time(r.t, i, rate);
                            out.end_time = out.end_time.max(t);
                            stream.times.push(t);
                            for (c, v) in stream.channels.iter_mut().zip(frame) {
                                c.push(v);
                            }
                        }
                    }
                },
                _ => {}
            }
        }
        Ok(out)
    }

    /// First stream of the given modality, by stream id order.
    pub fn by_modality(&self, modality: Modality) -> Option<&StreamData> {
        self.streams.values().find(|s| s.spec.modality == modality && !s.is_empty())
    }

    pub fn initial_context(&self) -> Option<&ContextState> {
        self.contexts.first().map(|(_, c)| c)
    }
}
