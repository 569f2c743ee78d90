//! Session recording format: UTF-8 JSONL, one object per line with `t`
//! (seconds), `kind`, `stream` and a kind-specific `data` object.
//!
//! Regularly sampled streams are stored as blocks: a `sample` record holds
//! `values` (one array per frame) and the block `rate`; frame `i` sits at
//! `t + i / rate`. A single sample omits `rate`. Transcript utterances are
//! `sample` records on a transcript stream whose data carries `text`,
//! `speaker` and `t1`. Stream declarations are `context` records whose data
//! holds `stream_spec`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cuelayer_core::interpret::ContextState;
use cuelayer_core::sync::{EventMarker, StreamSpec, TimedSample};
use cuelayer_core::verbal::Utterance;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{io_at, Error, Result};

/// Stream name of marker records.
pub const MARKER_STREAM: &str = "markers";
/// Stream name of storybook context records.
pub const STORYBOOK_STREAM: &str = "storybook";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Sample,
    Marker,
    Feature,
    Proposal,
    Decision,
    Context,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub kind: RecordKind,
    pub stream: String,
    /// Kept as raw JSON so large sample blocks are parsed once, straight
    /// into their typed form.
    pub data: Box<RawValue>,
}

impl PartialEq for Record {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t
            && self.kind == other.kind
            && self.stream == other.stream
            && self.data.get() == other.data.get()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TextData {
    text: String,
    speaker: String,
    t1: f64,
}

/// Either shape of a `sample` payload, decoded in one pass.
#[derive(Debug, Default, Deserialize)]
struct SampleData {
    values: Option<Vec<Vec<f64>>>,
    rate: Option<f64>,
    text: Option<String>,
    speaker: Option<String>,
    t1: Option<f64>,
}

/// Decoded `sample` record.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplePayload {
    Block(SampleBlock),
    Text(Utterance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MarkerData {
    label: String,
    #[serde(default)]
    payload: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpecData {
    stream_spec: StreamSpec,
}

fn to_value<T: Serialize>(v: &T) -> Box<RawValue> {
    serde_json::value::to_raw_value(v).expect("record payloads serialize to JSON")
}

impl Record {
    pub fn new(t: f64, kind: RecordKind, stream: impl Into<String>, data: Box<RawValue>) -> Self {
        Self {
            t,
            kind,
            stream: stream.into(),
            data,
        }
    }

    /// Frames sampled at `rate` starting at `t0`.
    pub fn sample_block(stream: &str, t0: f64, rate: f64, values: Vec<Vec<f64>>) -> Self {
        let rate = (values.len() > 1).then_some(rate);
        Self::new(t0, RecordKind::Sample, stream, to_value(&SampleBlock { values, rate }))
    }

    pub fn sample(s: &TimedSample) -> Self {
        Self::new(
            s.t,
            RecordKind::Sample,
            s.stream_id.clone(),
            to_value(&SampleBlock {
                values: vec![s.values.clone()],
                rate: None,
            }),
        )
    }

    pub fn utterance(stream: &str, u: &Utterance) -> Self {
        Self::new(
            u.t0,
            RecordKind::Sample,
            stream,
            to_value(&TextData {
                text: u.text.clone(),
                speaker: u.speaker.clone(),
                t1: u.t1,
            }),
        )
    }

    pub fn marker(m: &EventMarker) -> Self {
        Self::new(
            m.t,
            RecordKind::Marker,
            MARKER_STREAM,
            to_value(&MarkerData {
                label: m.label.clone(),
                payload: m.payload.clone(),
            }),
        )
    }

    pub fn stream_spec(t: f64, spec: &StreamSpec) -> Self {
        Self::new(
            t,
            RecordKind::Context,
            spec.stream_id.clone(),
            to_value(&SpecData {
                stream_spec: spec.clone(),
            }),
        )
    }

    pub fn storybook(t: f64, ctx: &ContextState) -> Self {
        Self::new(t, RecordKind::Context, STORYBOOK_STREAM, to_value(ctx))
    }

    pub fn feature<T: Serialize>(t: f64, stream: &str, data: &T) -> Self {
        Self::new(t, RecordKind::Feature, stream, to_value(data))
    }

    pub fn with_data<T: Serialize>(t: f64, kind: RecordKind, stream: &str, data: &T) -> Self {
        Self::new(t, kind, stream, to_value(data))
    }

    /// Decodes `data` into `T`.
    pub fn data<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_str(self.data.get()).map_err(|e| self.invalid(e.to_string()))
    }

    fn invalid(&self, message: impl Into<String>) -> Error {
        Error::Record {
            t: self.t,
            stream: self.stream.clone(),
            message: message.into(),
        }
    }

    /// Decodes a `sample` record as a numeric block or an utterance.
    pub fn payload(&self) -> Result<SamplePayload> {
        if self.kind != RecordKind::Sample {
            return Err(self.invalid("not a sample record"));
        }
        let d: SampleData = self.data()?;
        match (d.values, d.text) {
            (Some(values), None) => {
                if values.len() > 1 && !d.rate.is_some_and(|r| r > 0.0 && r.is_finite()) {
                    return Err(self.invalid("multi-frame block needs a positive rate"));
                }
                Ok(SamplePayload::Block(SampleBlock {
                    values,
                    rate: d.rate,
                }))
            }
            (None, Some(text)) => {
                let t1 = d.t1.ok_or_else(|| self.invalid("utterance without t1"))?;
                Ok(SamplePayload::Text(Utterance::new(
                    text,
                    d.speaker.unwrap_or_default(),
                    self.t,
                    t1,
                )?))
            }
            _ => Err(self.invalid("sample data needs either values or text")),
        }
    }

    /// Expands a numeric sample record into timed samples.
    pub fn samples(&self) -> Result<Vec<TimedSample>> {
        match self.payload()? {
            SamplePayload::Block(b) => Ok(expand_block(&self.stream, self.t, b)),
            SamplePayload::Text(_) => Err(self.invalid("not a numeric sample record")),
        }
    }

    pub fn as_utterance(&self) -> Result<Utterance> {
        match self.payload()? {
            SamplePayload::Text(u) => Ok(u),
            SamplePayload::Block(_) => Err(self.invalid("not a transcript record")),
        }
    }

    pub fn as_marker(&self) -> Result<EventMarker> {
        if self.kind != RecordKind::Marker {
            return Err(self.invalid("not a marker record"));
        }
        let d: MarkerData = self.data()?;
        let mut m = EventMarker::new(self.t, d.label)?;
        m.payload = d.payload;
        Ok(m)
    }

    pub fn as_stream_spec(&self) -> Option<StreamSpec> {
        if self.kind != RecordKind::Context {
            return None;
        }
        self.data::<SpecData>().ok().map(|d| d.stream_spec)
    }

    pub fn as_storybook(&self) -> Option<ContextState> {
        if self.kind != RecordKind::Context || self.stream != STORYBOOK_STREAM {
            return None;
        }
        self.data().ok()
    }
}

pub fn expand_block(stream: &str, t0: f64, block: SampleBlock) -> Vec<TimedSample> {
    let rate = block.rate.unwrap_or(1.0);
    block
        .values
        .into_iter()
        .enumerate()
        .map(|(i, v)| TimedSample::new(stream, frame_time(t0, i, rate), v))
        .collect()
}

/// Timestamp of frame `i` in a block; shared by writers and readers so that
/// expansion is bit-identical.
pub fn frame_time(t0: f64, i: usize, rate: f64) -> f64 {
    if i == 0 {
        t0
    } else {
        t0 + i as f64 / rate
    }
}

/// Groups samples of one stream into blocks, starting a new block whenever a
/// timestamp is not exactly `t0 + i / rate`.
pub fn block_samples(stream: &str, samples: &[TimedSample], rate: f64) -> Vec<Record> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        let t0 = samples[i].t;
        let mut j = i + 1;
        if rate > 0.0 {
            while j < samples.len() && samples[j].t == frame_time(t0, j - i, rate) {
                j += 1;
            }
        }
        let values = samples[i..j].iter().map(|s| s.values.clone()).collect();
        out.push(Record::sample_block(stream, t0, rate, values));
        i = j;
    }
    out
}

pub struct RecordWriter<W: Write> {
    out: W,
    written: usize,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(io_at(path))?;
        Ok(Self::new(BufWriter::new(f)))
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, written: 0 }
    }

    pub fn write(&mut self, record: &Record) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn write_all<'a>(&mut self, records: impl IntoIterator<Item = &'a Record>) -> Result<()> {
        for r in records {
            self.write(r)?;
        }
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    /// Records sorted by `t`; equal times keep file order.
    pub records: Vec<Record>,
    pub skipped: Vec<SkippedLine>,
}

impl SessionLog {
    pub fn from_records(mut records: Vec<Record>) -> Self {
        sort_records(&mut records);
        Self {
            records,
            skipped: Vec::new(),
        }
    }
}

pub fn sort_records(records: &mut [Record]) {
    records.sort_by(|a, b| a.t.total_cmp(&b.t));
}

/// Parses JSONL; malformed lines are logged with their line number and
/// skipped. Blank lines are ignored.
pub fn read_records<R: BufRead>(reader: R) -> Result<SessionLog> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line) {
            Ok(r) if r.t.is_finite() => records.push(r),
            Ok(_) => skipped.push(SkippedLine {
                line: i + 1,
                message: "non-finite timestamp".into(),
            }),
            Err(e) => skipped.push(SkippedLine {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    for s in &skipped {
        log::warn!("skipping malformed record on line {}: {}", s.line, s.message);
    }
    sort_records(&mut records);
    Ok(SessionLog { records, skipped })
}

pub fn read_file(path: &Path) -> Result<SessionLog> {
    let f = File::open(path).map_err(io_at(path))?;
    read_records(BufReader::new(f))
}

pub fn write_file(path: &Path, records: &[Record]) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    w.write_all(records)?;
    w.finish()?;
    Ok(())
}

/// Canonical form for comparing sessions: numeric blocks are expanded to one
/// record per sample, then everything is sorted by time, kind, stream and
/// payload.
pub fn canonicalize(records: &[Record]) -> Result<Vec<Record>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        match r.kind {
            RecordKind::Sample => match r.payload()? {
                SamplePayload::Block(b) => {
                    out.extend(expand_block(&r.stream, r.t, b).iter().map(Record::sample))
                }
                SamplePayload::Text(_) => out.push(r.clone()),
            },
            _ => out.push(r.clone()),
        }
    }
    let key = |r: &Record| (r.kind, r.stream.clone(), r.data.get().to_string());
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| key(a).cmp(&key(b))));
    Ok(out)
}
