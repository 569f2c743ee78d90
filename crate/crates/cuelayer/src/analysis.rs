//! Offline analysis of a recorded session: every analysis lane, the cue
//! mapping and the interpretation loop, producing feature, proposal and
//! decision records.

use std::collections::BTreeMap;
use std::time::Instant;

use cuelayer_core::autonomic::{
    self, arousal_flag, detect_r_peaks, detect_scr_peaks, extract_phasic, hrv_windows, ArousalState,
    Baseline, BaselineModality, PositionSample, RigidTransform,
};
use cuelayer_core::emotion::{
    self, emg_embedding, fuse, fuse_and_classify, train_head, EmgBaseline, HeadModel, ProjectionModel,
    TrainConfig, DEFAULT_CLIP_PERCENTILE, EMBEDDING_DIM, KERNEL_FEATURES,
};
use cuelayer_core::gesture::synth::{feature_dataset, PoseNoise};
use cuelayer_core::gesture::{
    extract_features, predict_gesture, train_forest, ForestConfig, ForestModel, PoseFrame, ReferenceLength,
    Taxonomy, VoteBuffer, VOTE_WINDOW_S,
};
use cuelayer_core::interpret::{
    ContextState, Cue, CueEncodings, CueSource, EscalationIndexTable, InterpretEvent, Interpreter, InterpreterConfig,
};
use cuelayer_core::neuro::{fit_pipeline, PipelineConfig};
use cuelayer_core::prosody::{aggregate_utterance, analyze_prosody, ProsodyConfig, ProsodyFrame};
use cuelayer_core::sync::{EventMarker, Modality};
use cuelayer_core::verbal::{analyze_utterance, LinguisticComplexity, Lexicon, RuleFormality, INSULTS_DE};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Record, RecordKind};
use crate::session::{SessionData, StreamData};

/// Stream names of the emitted feature records.
pub mod lanes {
    pub const PROSODY: &str = "prosody";
    pub const VERBAL: &str = "verbal";
    pub const GESTURE: &str = "gesture";
    pub const EMOTION: &str = "emotion";
    pub const NEURO: &str = "neuro";
    pub const HRV: &str = "hrv";
    pub const SCR: &str = "scr";
    pub const PROXEMICS: &str = "proxemics";
    pub const RISK: &str = "risk";
    pub const INTERPRET: &str = "interpret";
    pub const ALL: [&str; 8] = [PROSODY, VERBAL, GESTURE, EMOTION, NEURO, HRV, SCR, PROXEMICS];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GestureLaneConfig {
    /// Synthetic training poses per taxonomy class when no model is given.
    pub per_class: usize,
    pub forest: ForestConfig,
    pub training_seed: u64,
    /// Rate of gesture feature records and cues, Hz.
    pub output_rate_hz: f64,
}

impl Default for GestureLaneConfig {
    fn default() -> Self {
        Self {
            per_class: 30,
            forest: ForestConfig {
                seed: 7,
                ..ForestConfig::default()
            },
            training_seed: 7,
            output_rate_hz: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmotionLaneConfig {
    /// Simulated training windows per emotion.
    pub per_class: usize,
    pub train: TrainConfig,
    pub projection_seed: u64,
    pub training_seed: u64,
    /// Leading part of the session used as the resting EMG baseline.
    pub baseline_s: f64,
}

impl Default for EmotionLaneConfig {
    fn default() -> Self {
        Self {
            per_class: 30,
            train: TrainConfig {
                epochs: 300,
                learning_rate: 0.2,
                seed: 11,
                ..TrainConfig::default()
            },
            projection_seed: 21,
            training_seed: 11,
            baseline_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutonomicLaneConfig {
    pub baseline_s: f64,
    pub hrv_window_s: f64,
    pub scr_window_s: f64,
    pub scr_min_amplitude: f64,
    pub arousal_ratio: f64,
    pub avatar_transform: RigidTransform,
    /// Rate of proxemics feature records and cues, Hz.
    pub proxemics_rate_hz: f64,
}

impl Default for AutonomicLaneConfig {
    fn default() -> Self {
        Self {
            baseline_s: 60.0,
            hrv_window_s: autonomic::hrv::HRV_WINDOW_S,
            scr_window_s: 5.0,
            scr_min_amplitude: autonomic::eda::DEFAULT_MIN_AMPLITUDE,
            arousal_ratio: autonomic::DEFAULT_AROUSAL_RATIO,
            avatar_transform: RigidTransform::identity(),
            proxemics_rate_hz: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub prosody: ProsodyConfig,
    pub gesture: GestureLaneConfig,
    pub emotion: EmotionLaneConfig,
    pub neuro: PipelineConfig,
    pub autonomic: AutonomicLaneConfig,
    /// Spacing of risk evaluations, seconds.
    pub risk_step_s: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            prosody: ProsodyConfig {
                calibration_offset_db: Some(crate::sim::CALIBRATION_OFFSET_DB),
                ..ProsodyConfig::default()
            },
            gesture: GestureLaneConfig::default(),
            emotion: EmotionLaneConfig::default(),
            neuro: PipelineConfig::default(),
            autonomic: AutonomicLaneConfig::default(),
            risk_step_s: 0.25,
        }
    }
}

/// Pretrained models; missing ones are trained on simulated data.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub gesture: Option<ForestModel>,
    pub emotion: Option<EmotionModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionModel {
    pub projection: ProjectionModel,
    pub head: HeadModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSummary {
    pub features: usize,
    pub cues: usize,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub lanes: BTreeMap<String, LaneSummary>,
    pub proposals: usize,
    pub reviews: usize,
    pub decisions: usize,
    pub index_misses: usize,
    pub risk_evaluations: usize,
    pub seconds: f64,
}

pub struct Analysis {
    /// Feature, proposal and decision records sorted by time.
    pub records: Vec<Record>,
    pub summary: AnalysisSummary,
}

/// Cue produced by a lane. Gesture cues are resolved against the
/// escalation-index table by the interpreter, with the context current at
/// the time they are observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaneCue {
    Cue(Cue),
    Gesture { t: f64, gesture_id: String, reliability: f64 },
}

impl LaneCue {
    pub fn t(&self) -> f64 {
        match self {
            LaneCue::Cue(c) => c.t,
            LaneCue::Gesture { t, .. } => *t,
        }
    }

    /// Hands the cue to `engine`.
    pub fn observe(&self, engine: &mut Interpreter) -> Result<()> {
        match self {
            LaneCue::Cue(c) => engine.observe(c.clone())?,
            LaneCue::Gesture { t, gesture_id, reliability } => {
                let cue = engine.gesture_cue(*t, gesture_id, *reliability)?;
                engine.observe(cue)?;
            }
        }
        Ok(())
    }
}

/// Output of every lane before interpretation.
#[derive(Debug, Clone)]
pub struct LaneResults {
    /// Feature records sorted by time.
    pub features: Vec<Record>,
    /// Cues sorted by time.
    pub cues: Vec<LaneCue>,
    pub lanes: BTreeMap<String, LaneSummary>,
}

struct LaneOutput {
    features: Vec<Record>,
    cues: Vec<LaneCue>,
    warnings: Vec<String>,
}

impl LaneOutput {
    fn new() -> Self {
        Self {
            features: Vec::new(),
            cues: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn cue(&mut self, source: CueSource, t: f64, value: f64, label: String) -> Result<()> {
        self.cues.push(LaneCue::Cue(Cue::new(source, t, value, 1.0, label)?));
        Ok(())
    }
}

#[derive(Serialize)]
struct ProsodyFeature<'a> {
    #[serde(flatten)]
    frame: &'a ProsodyFrame,
}

#[derive(Serialize)]
struct UtteranceFeature<'a> {
    text: &'a str,
    speaker: &'a str,
    t1: f64,
    verbal: &'a cuelayer_core::verbal::VerbalAnalysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    prosody: Option<&'a cuelayer_core::prosody::UtteranceProsody>,
}

#[derive(Serialize)]
struct GestureFeature<'a> {
    class: usize,
    gesture_id: &'a str,
    function_class: cuelayer_core::gesture::FunctionClass,
    voted_class: usize,
    voted_gesture_id: &'a str,
    probability: f64,
}

#[derive(Serialize)]
struct EmotionFeature<'a> {
    t1: f64,
    top: emotion::Emotion,
    probabilities: &'a [f64],
    degenerate_channels: &'a [usize],
}

#[derive(Serialize)]
struct NeuroEpoch {
    t1: f64,
    prediction: f64,
    target: f64,
}

#[derive(Serialize)]
struct NeuroSummary<'a> {
    alpha_hz: f64,
    alpha_fallback: bool,
    fit_r: Option<f64>,
    train_correlations: &'a [f64],
    pattern: Vec<f64>,
    kept_epochs: usize,
    rejected_epochs: usize,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct HrvFeature {
    t1: f64,
    rmssd_ms: Option<f64>,
    n_intervals: usize,
    heart_rate_bpm: Option<f64>,
    arousal: Option<ArousalState>,
}

#[derive(Serialize)]
struct ScrWindowFeature {
    t1: f64,
    phasic_range: f64,
    arousal: Option<ArousalState>,
}

#[derive(Serialize)]
struct ProxemicsFeature {
    distance_m: f64,
    velocity_mps: f64,
}

fn feature<T: Serialize>(t: f64, lane: &str, data: &T) -> Record {
    Record::feature(t, lane, data)
}

/// Runs every lane whose input stream is present and the interpretation loop
/// over the resulting cues.
pub fn analyze(
    records: &[Record],
    config: &AnalysisConfig,
    interpreter: &InterpreterConfig,
    taxonomy: &Taxonomy,
    table: &EscalationIndexTable,
    models: &Models,
) -> Result<Analysis> {
    let started = Instant::now();
    interpreter.validate()?;
    let session = SessionData::from_records(records)?;
    let lanes = run_lanes(&session, config, &interpreter.encodings, taxonomy, models)?;
    let context = match session.initial_context() {
        Some(c) => c.clone(),
        None => ContextState::new("default")?,
    };
    let mut engine = Interpreter::new(interpreter.clone(), table.clone(), context)?;
    let mut out_records = lanes.features;
    let interp = interpret(&mut engine, &session, &lanes.cues, config.risk_step_s, &mut out_records)?;
    crate::record::sort_records(&mut out_records);
    Ok(Analysis {
        records: out_records,
        summary: AnalysisSummary {
            lanes: lanes.lanes,
            index_misses: engine.index_misses(),
            seconds: started.elapsed().as_secs_f64(),
            ..interp
        },
    })
}

/// Runs the lanes alone.
pub fn run_lanes(
    session: &SessionData,
    config: &AnalysisConfig,
    enc: &CueEncodings,
    taxonomy: &Taxonomy,
    models: &Models,
) -> Result<LaneResults> {
    for (stream, n) in &session.undeclared {
        log::warn!("{n} sample records on undeclared stream {stream} ignored");
    }
    let mut outputs: BTreeMap<&str, (LaneOutput, f64)> = BTreeMap::new();
    let timed = |f: &dyn Fn() -> Result<LaneOutput>| -> Result<(LaneOutput, f64)> {
        let t = Instant::now();
        let out = f()?;
        Ok((out, t.elapsed().as_secs_f64()))
    };

    let mut prosody_frames = Vec::new();
    if let Some(audio) = session.by_modality(Modality::Audio) {
        let t = Instant::now();
        let (out, frames) = prosody_lane(audio, &config.prosody, enc)?;
        prosody_frames = frames;
        outputs.insert(lanes::PROSODY, (out, t.elapsed().as_secs_f64()));
    }
    if !session.utterances.is_empty() {
        outputs.insert(lanes::VERBAL, timed(&|| verbal_lane(session, &prosody_frames, enc))?);
    }
    if let Some(pose) = session.by_modality(Modality::VideoLandmarks) {
        outputs.insert(
            lanes::GESTURE,
            timed(&|| gesture_lane(pose, taxonomy, &config.gesture, models.gesture.as_ref()))?,
        );
    }
    if let Some(emg) = session.by_modality(Modality::Emg) {
        outputs.insert(
            lanes::EMOTION,
            timed(&|| emotion_lane(emg, &config.emotion, models.emotion.as_ref(), enc))?,
        );
    }
    let proximity = match session.by_modality(Modality::Proxemics) {
        Some(p) => {
            let t = Instant::now();
            let (out, series) = proxemics_lane(p, &config.autonomic, enc)?;
            outputs.insert(lanes::PROXEMICS, (out, t.elapsed().as_secs_f64()));
            Some(series)
        }
        None => None,
    };
    if let Some(eeg) = session.by_modality(Modality::Eeg) {
        outputs.insert(lanes::NEURO, timed(&|| neuro_lane(eeg, proximity.as_deref(), &config.neuro))?);
    }
    if let Some(ecg) = session.by_modality(Modality::Ecg) {
        outputs.insert(lanes::HRV, timed(&|| hrv_lane(ecg, &config.autonomic, enc))?);
    }
    if let Some(eda) = session.by_modality(Modality::Eda) {
        outputs.insert(lanes::SCR, timed(&|| scr_lane(eda, &session.markers, &config.autonomic, enc))?);
    }

    let mut features = Vec::new();
    let mut cues = Vec::new();
    let mut summaries = BTreeMap::new();
    for (name, (out, seconds)) in outputs {
        for w in &out.warnings {
            log::warn!("{name}: {w}");
        }
        summaries.insert(
            name.to_string(),
            LaneSummary {
                features: out.features.len(),
                cues: out.cues.len(),
                seconds,
                warnings: out.warnings,
            },
        );
        features.extend(out.features);
        cues.extend(out.cues);
    }
    crate::record::sort_records(&mut features);
    cues.sort_by(|a, b| a.t().total_cmp(&b.t()));
    Ok(LaneResults {
        features,
        cues,
        lanes: summaries,
    })
}

/// Record for an interpreter event on the interpret stream.
pub fn event_record(event: &InterpretEvent) -> Record {
    let (t, kind) = match event {
        InterpretEvent::Proposal(p) => (p.t, RecordKind::Proposal),
        InterpretEvent::Review(r) => (r.t, RecordKind::Proposal),
        InterpretEvent::Expired { t, .. } => (*t, RecordKind::Proposal),
        InterpretEvent::Decision(d) => (d.t, RecordKind::Decision),
        InterpretEvent::ModeChanged { t, .. }
        | InterpretEvent::WeightChanged { t, .. }
        | InterpretEvent::ContextChanged { t, .. } => (*t, RecordKind::Context),
    };
    Record::with_data(t, kind, lanes::INTERPRET, event)
}

fn interpret(
    engine: &mut Interpreter,
    session: &SessionData,
    cues: &[LaneCue],
    step: f64,
    out: &mut Vec<Record>,
) -> Result<AnalysisSummary> {
    if !(step > 0.0) {
        return Err(Error::Invalid("risk step must be positive".into()));
    }
    let mut summary = AnalysisSummary {
        lanes: BTreeMap::new(),
        proposals: 0,
        reviews: 0,
        decisions: 0,
        index_misses: 0,
        risk_evaluations: 0,
        seconds: 0.0,
    };
    let (mut ci, mut xi) = (0, 1);
    let steps = (session.end_time / step).floor() as usize;
    for k in 0..=steps {
        let t = k as f64 * step;
        while xi < session.contexts.len() && session.contexts[xi].0 <= t {
            engine.set_context(session.contexts[xi].1.clone(), session.contexts[xi].0)?;
            xi += 1;
        }
        while ci < cues.len() && cues[ci].t() <= t {
            cues[ci].observe(engine)?;
            ci += 1;
        }
        if let Some(snapshot) = engine.evaluate(t)? {
            summary.risk_evaluations += 1;
            out.push(feature(t, lanes::RISK, &snapshot));
        }
        for event in engine.take_events() {
            match &event {
                InterpretEvent::Proposal(_) => summary.proposals += 1,
                InterpretEvent::Review(_) => summary.reviews += 1,
                InterpretEvent::Decision(_) => summary.decisions += 1,
                _ => {}
            }
            out.push(event_record(&event));
        }
    }
    Ok(summary)
}

fn prosody_lane(
    audio: &StreamData,
    config: &ProsodyConfig,
    enc: &CueEncodings,
) -> Result<(LaneOutput, Vec<ProsodyFrame>)> {
    let mut out = LaneOutput::new();
    let frames = analyze_prosody(&audio.channels[0], audio.rate(), audio.start(), config)?;
    for f in &frames {
        out.features.push(feature(f.t1, lanes::PROSODY, &ProsodyFeature { frame: f }));
        if f.voiced {
            let high = f.loudness_sone > cuelayer_core::prosody::LOUDNESS_HIGH_SONE;
            out.cue(CueSource::Loudness, f.t1, enc.loudness(high), format!("loudness {:.1} sone", f.loudness_sone))?;
        }
    }
    Ok((out, frames))
}

fn verbal_lane(
    session: &SessionData,
    frames: &[ProsodyFrame],
    enc: &CueEncodings,
) -> Result<LaneOutput> {
    let mut out = LaneOutput::new();
    let lexicon = Lexicon::parse(INSULTS_DE);
    let complexity = LinguisticComplexity::german()?;
    for u in &session.utterances {
        let v = analyze_utterance(u, &lexicon, &RuleFormality, &complexity)?;
        let overlapping: Vec<ProsodyFrame> = frames
            .iter()
            .filter(|f| f.t0 < u.t1 && f.t1 > u.t0)
            .cloned()
            .collect();
        let prosody = if overlapping.is_empty() {
            None
        } else {
            Some(aggregate_utterance(&overlapping, Some(v.word_count))?)
        };
        out.features.push(feature(
            u.t0,
            lanes::VERBAL,
            &UtteranceFeature {
                text: &u.text,
                speaker: &u.speaker,
                t1: u.t1,
                verbal: &v,
                prosody: prosody.as_ref(),
            },
        ));
        out.cue(CueSource::Formality, u.t1, enc.formality(v.formality.label), format!("{:?} address", v.formality.label).to_lowercase())?;
        if let Some(hit) = v.insults.first() {
            out.cue(CueSource::Insult, u.t1, enc.insult, format!("insult \"{}\"", hit.term))?;
        }
    }
    Ok(out)
}

/// Forest trained on synthetic poses of every taxonomy class.
pub fn train_synthetic_gesture_model(taxonomy: &Taxonomy, config: &GestureLaneConfig) -> Result<ForestModel> {
    let (x, y) = feature_dataset(taxonomy.len(), config.per_class, &PoseNoise::default(), config.training_seed);
    Ok(train_forest(&x, &y, &config.forest)?)
}

fn gesture_lane(
    pose: &StreamData,
    taxonomy: &Taxonomy,
    config: &GestureLaneConfig,
    model: Option<&ForestModel>,
) -> Result<LaneOutput> {
    let mut out = LaneOutput::new();
    let trained;
    let model = match model {
        Some(m) => m,
        None => {
            trained = train_synthetic_gesture_model(taxonomy, config)?;
            &trained
        }
    };
    if model.n_classes != taxonomy.len() {
        return Err(Error::Invalid(format!(
            "gesture model has {} classes, taxonomy has {}",
            model.n_classes,
            taxonomy.len()
        )));
    }
    let mut votes = VoteBuffer::new(VOTE_WINDOW_S);
    let period = 1.0 / config.output_rate_hz.max(1e-3);
    let mut next_emit = pose.start();
    let mut values = vec![0.0; pose.channels.len()];
    let mut skipped = 0usize;
    for (i, &t) in pose.times.iter().enumerate() {
        for (v, c) in values.iter_mut().zip(&pose.channels) {
            *v = c[i];
        }
        let frame = PoseFrame::from_values(pose.spec.stream_id.clone(), t, &values)?;
        let features = match extract_features(&frame, ReferenceLength::ShoulderHip) {
            Ok(f) => f,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let p = predict_gesture(model, taxonomy, &features)?;
        let voted = votes.push(t, p.label.class);
        if t + 1e-9 >= next_emit {
            next_emit += period;
            let label = taxonomy.label(voted)?;
            let reliability = p.probabilities[voted];
            out.features.push(feature(
                t,
                lanes::GESTURE,
                &GestureFeature {
                    class: p.label.class,
                    gesture_id: &p.label.gesture_id,
                    function_class: p.label.function_class,
                    voted_class: voted,
                    voted_gesture_id: &label.gesture_id,
                    probability: reliability,
                },
            ));
            out.cues.push(LaneCue::Gesture {
                t,
                gesture_id: label.gesture_id,
                reliability,
            });
        }
    }
    if skipped > 0 {
        out.warnings.push(format!("{skipped} pose frames without a usable torso skipped"));
    }
    Ok(out)
}

/// Projection and head trained on simulated EMG windows.
pub fn train_synthetic_emotion_model(emg_rate: f64, config: &EmotionLaneConfig) -> Result<EmotionModel> {
    let projection = ProjectionModel::seeded(KERNEL_FEATURES, EMBEDDING_DIM, config.projection_seed);
    let rest = crate::sim::resting_emg(config.training_seed, emg_rate, config.baseline_s.max(5.0));
    let baseline = EmgBaseline::from_recording(&rest, emg_rate, DEFAULT_CLIP_PERCENTILE)?;
    let windows = crate::sim::emg_training_windows(config.training_seed, emg_rate, emotion::WINDOW_S, config.per_class);
    let mut xs = Vec::with_capacity(windows.len());
    let mut ys = Vec::with_capacity(windows.len());
    for (raw, e) in &windows {
        let (_, _, emb) = emg_embedding(raw, emg_rate, 0.0, Some(&baseline), &projection)?;
        xs.push(fuse(None, Some(&emb))?.0);
        ys.push(emotion::Emotion::ALL.iter().position(|x| x == e).unwrap_or(6));
    }
    let (head, report) = train_head(&xs, &ys, &config.train)?;
    log::debug!("emotion head train accuracy {:.3}", report.train_accuracy);
    Ok(EmotionModel { projection, head })
}

fn emotion_lane(
    emg: &StreamData,
    config: &EmotionLaneConfig,
    model: Option<&EmotionModel>,
    enc: &CueEncodings,
) -> Result<LaneOutput> {
    let mut out = LaneOutput::new();
    let rate = emg.rate();
    let trained;
    let model = match model {
        Some(m) => m,
        None => {
            trained = train_synthetic_emotion_model(rate, config)?;
            &trained
        }
    };
    let (b0, b1) = emg.index_range(emg.start(), emg.start() + config.baseline_s);
    let baseline = EmgBaseline::from_recording(&emg.window(b0, b1)?, rate, DEFAULT_CLIP_PERCENTILE)?;
    let win = (emotion::WINDOW_S * rate).round() as usize;
    let hop = ((emotion::HOP_S * rate).round() as usize).max(1);
    let mut i0 = 0;
    while i0 + win <= emg.len() {
        let t0 = emg.times[i0];
        let t1 = t0 + emotion::WINDOW_S;
        let raw = emg.window(i0, i0 + win)?;
        let (window, _, emb) = emg_embedding(&raw, rate, t0, Some(&baseline), &model.projection)?;
        let probs = fuse_and_classify(None, Some(&emb), &model.head)?;
        out.features.push(feature(
            t0,
            lanes::EMOTION,
            &EmotionFeature {
                t1,
                top: probs.top(),
                probabilities: &probs.probabilities,
                degenerate_channels: &window.degenerate_channels,
            },
        ));
        out.cue(CueSource::Emotion, t1, enc.emotion(&probs), format!("emotion {:?}", probs.top()).to_lowercase())?;
        i0 += hop;
    }
    Ok(out)
}

/// Distance samples `(t, metres)` from the proxemics stream.
type DistanceSeries = Vec<(f64, f64)>;

fn proxemics_lane(
    prox: &StreamData,
    config: &AutonomicLaneConfig,
    enc: &CueEncodings,
) -> Result<(LaneOutput, DistanceSeries)> {
    let mut out = LaneOutput::new();
    if prox.channels.len() != 6 {
        return Err(Error::Invalid(format!(
            "proxemics stream needs 6 channels (headset xyz, avatar xyz), got {}",
            prox.channels.len()
        )));
    }
    let c = &prox.channels;
    let hmd: Vec<PositionSample> = (0..prox.len())
        .map(|i| PositionSample::new(prox.times[i], [c[0][i], c[1][i], c[2][i]]))
        .collect();
    let avatar: Vec<PositionSample> = (0..prox.len())
        .map(|i| PositionSample::new(prox.times[i], [c[3][i], c[4][i], c[5][i]]))
        .collect();
    let samples = autonomic::proxemics(&hmd, &avatar, &config.avatar_transform)?;
    let period = 1.0 / config.proxemics_rate_hz.max(1e-3);
    let mut next_emit = prox.start();
    for s in &samples {
        if s.t + 1e-9 >= next_emit {
            next_emit += period;
            out.features.push(feature(
                s.t,
                lanes::PROXEMICS,
                &ProxemicsFeature {
                    distance_m: s.distance,
                    velocity_mps: s.velocity,
                },
            ));
            out.cue(CueSource::Proxemics, s.t, enc.proxemics(s.distance), format!("distance {:.2} m", s.distance))?;
        }
    }
    let series = samples.iter().map(|s| (s.t, s.distance)).collect();
    Ok((out, series))
}

/// SPoC decoder of the alpha envelope, with the avatar distance as target.
fn neuro_lane(eeg: &StreamData, distance: Option<&[(f64, f64)]>, config: &PipelineConfig) -> Result<LaneOutput> {
    let mut out = LaneOutput::new();
    let Some(distance) = distance.filter(|d| !d.is_empty()) else {
        out.warnings
            .push("no proxemics stream to supply the decoding target; EEG lane skipped".into());
        return Ok(out);
    };
    let rate = eeg.rate();
    let data = eeg.matrix()?;
    let count = cuelayer_core::neuro::pipeline::epoch_count(data.cols(), rate, &config.epoch)?;
    let t_first = eeg.start();
    let targets: Vec<f64> = (0..count)
        .map(|k| {
            let t0 = t_first + k as f64 * config.epoch.hop;
            mean_between(distance, t0, t0 + config.epoch.length)
        })
        .collect();
    let labels = (0..data.rows()).map(|i| format!("E{}", i + 1)).collect();
    let model = fit_pipeline(&data, rate, labels, &targets, config)?;
    let decoded = model.decode(&data, Some(&targets))?;
    out.warnings.extend(model.warnings.iter().cloned());
    out.features.push(feature(
        t_first,
        lanes::NEURO,
        &NeuroSummary {
            alpha_hz: model.alpha.center,
            alpha_fallback: model.alpha.fallback,
            fit_r: decoded.r,
            train_correlations: &model.train_correlations,
            pattern: model.combined.pattern(0),
            kept_epochs: model.kept_epochs,
            rejected_epochs: model.rejected_epochs,
            warnings: &model.warnings,
        },
    ));
    for (k, (p, z)) in decoded.prediction.iter().zip(&targets).enumerate() {
        let t0 = t_first + k as f64 * config.epoch.hop;
        out.features.push(feature(
            t0,
            lanes::NEURO,
            &NeuroEpoch {
                t1: t0 + config.epoch.length,
                prediction: *p,
                target: *z,
            },
        ));
    }
    Ok(out)
}

fn mean_between(series: &[(f64, f64)], t0: f64, t1: f64) -> f64 {
    let i0 = series.partition_point(|(t, _)| *t < t0);
    let i1 = series.partition_point(|(t, _)| *t < t1);
    if i1 > i0 {
        series[i0..i1].iter().map(|(_, v)| v).sum::<f64>() / (i1 - i0) as f64
    } else {
        let i = i0.min(series.len() - 1);
        series[i].1
    }
}

fn hrv_lane(
    ecg: &StreamData,
    config: &AutonomicLaneConfig,
    enc: &CueEncodings,
) -> Result<LaneOutput> {
    let mut out = LaneOutput::new();
    let t_first = ecg.start();
    let peaks: Vec<f64> = detect_r_peaks(&ecg.channels[0], ecg.rate())?
        .into_iter()
        .map(|p| p + t_first)
        .collect();
    let windows = hrv_windows(&peaks, t_first, ecg.end(), config.hrv_window_s);
    let resting: Vec<f64> = windows
        .iter()
        .filter(|w| w.t1 <= t_first + config.baseline_s)
        .filter_map(|w| w.rmssd)
        .collect();
    let baseline = match Baseline::from_values(BaselineModality::Hrv, &resting, config.baseline_s) {
        Ok(b) => {
            out.warnings.extend(b.warnings.iter().cloned());
            Some(b)
        }
        Err(e) => {
            out.warnings.push(format!("no HRV baseline: {e}"));
            None
        }
    };
    for w in &windows {
        let bpm = {
            let inside: Vec<f64> = peaks.iter().copied().filter(|p| *p >= w.t0 && *p < w.t1).collect();
            (inside.len() >= 2).then(|| 60.0 * (inside.len() - 1) as f64 / (inside[inside.len() - 1] - inside[0]))
        };
        let arousal = match (w.rmssd, &baseline) {
            (Some(v), Some(b)) => Some(arousal_flag(v, Some(b), config.arousal_ratio)?),
            _ => None,
        };
        out.features.push(feature(
            w.t0,
            lanes::HRV,
            &HrvFeature {
                t1: w.t1,
                rmssd_ms: w.rmssd,
                n_intervals: w.n_intervals,
                heart_rate_bpm: bpm,
                arousal,
            },
        ));
        if let Some(state) = arousal {
            out.cue(CueSource::Hrv, w.t1, enc.arousal(state), format!("RMSSD {:.1} ms", w.rmssd.unwrap_or(0.0)))?;
        }
    }
    Ok(out)
}

fn scr_lane(
    eda: &StreamData,
    markers: &[EventMarker],
    config: &AutonomicLaneConfig,
    enc: &CueEncodings,
) -> Result<LaneOutput> {
    let mut out = LaneOutput::new();
    let t_first = eda.start();
    let phasic = extract_phasic(&eda.channels[0], eda.rate())?;
    out.warnings.extend(phasic.warnings.iter().cloned());
    let local: Vec<EventMarker> = markers
        .iter()
        .map(|m| EventMarker {
            t: m.t - t_first,
            ..m.clone()
        })
        .collect();
    for mut e in detect_scr_peaks(&phasic, config.scr_min_amplitude, &local) {
        e.onset += t_first;
        e.peak += t_first;
        out.features.push(feature(e.onset, lanes::SCR, &e));
    }
    // Windowed phasic range against the resting part of the session.
    let times: Vec<f64> = phasic.times().iter().map(|t| t + t_first).collect();
    let end = times.last().copied().unwrap_or(t_first);
    let mut ranges = Vec::new();
    let mut t0 = t_first;
    while t0 + config.scr_window_s <= end {
        let t1 = t0 + config.scr_window_s;
        let i0 = times.partition_point(|t| *t < t0);
        let i1 = times.partition_point(|t| *t < t1);
        let seg = &phasic.signal[i0..i1];
        if !seg.is_empty() {
            let hi = seg.iter().copied().fold(f64::MIN, f64::max);
            let lo = seg.iter().copied().fold(f64::MAX, f64::min);
            ranges.push((t1, hi - lo));
        }
        t0 = t1;
    }
    let resting: Vec<f64> = ranges
        .iter()
        .filter(|(t1, _)| *t1 <= t_first + config.baseline_s)
        .map(|(_, r)| *r)
        .collect();
    let baseline = match Baseline::from_values(BaselineModality::Scr, &resting, config.baseline_s) {
        Ok(b) => Some(b),
        Err(e) => {
            out.warnings.push(format!("no SCR baseline: {e}"));
            None
        }
    };
    for (t1, range) in ranges {
        let arousal = baseline
            .as_ref()
            .map(|b| arousal_flag(range, Some(b), config.arousal_ratio))
            .transpose()?;
        out.features.push(feature(
            t1 - config.scr_window_s,
            lanes::SCR,
            &ScrWindowFeature {
                t1,
                phasic_range: range,
                arousal,
            },
        ));
        if let Some(state) = arousal {
            out.cue(CueSource::Scr, t1, enc.arousal(state), format!("phasic range {range:.2} z"))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimulatorConfig};

    #[test]
    fn short_session_runs_every_lane() {
        let mut cfg = SimulatorConfig::default();
        cfg.duration_s = 40.0;
        cfg.phases[1].start_s = 15.0;
        cfg.phases[2].start_s = 32.0;
        let tax = Taxonomy::default();
        let s = simulate(&cfg, &tax).unwrap();
        let table = crate::config::default_index_table().unwrap();
        let mut acfg = AnalysisConfig::default();
        acfg.autonomic.baseline_s = 15.0;
        acfg.emotion.baseline_s = 10.0;
        acfg.gesture.per_class = 8;
        acfg.gesture.forest.n_trees = 20;
        acfg.emotion.per_class = 8;
        let a = analyze(&s.records, &acfg, &InterpreterConfig::default(), &tax, &table, &Models::default()).unwrap();
        for lane in lanes::ALL {
            assert!(a.summary.lanes.get(lane).is_some_and(|l| l.features > 0), "{lane}: {:?}", a.summary.lanes.get(lane));
        }
        assert!(a.summary.risk_evaluations > 0);
        assert!(a.records.windows(2).all(|w| w[0].t <= w[1].t));
    }
}
