//! Seeded synthetic sessions with ground truth.
//!
//! A session follows a scripted sequence of phases (calm, escalation,
//! recovery by default). Every modality is generated from the same phase
//! script, so the ground-truth sidecar can say what each analysis lane should
//! find. The per-modality generators are public so tests can drive them
//! directly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use cuelayer_core::emotion::{Emotion, EMG_CHANNELS, MAINS_HZ};
use cuelayer_core::gesture::synth::{sample_pose, PoseNoise};
use cuelayer_core::gesture::Taxonomy;
use cuelayer_core::interpret::ContextState;
use cuelayer_core::linalg::Matrix;
use cuelayer_core::sync::{EventMarker, Modality, StreamSpec};
use cuelayer_core::verbal::Utterance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::record::{Record, RecordWriter};

pub const AUDIO_STREAM: &str = "audio";
pub const POSE_STREAM: &str = "pose";
pub const EMG_STREAM: &str = "emg";
pub const EEG_STREAM: &str = "eeg";
pub const ECG_STREAM: &str = "ecg";
pub const EDA_STREAM: &str = "eda";
pub const PROXEMICS_STREAM: &str = "proxemics";
pub const TRANSCRIPT_STREAM: &str = "transcript";
pub const SPEAKER: &str = "trainee";
/// Audio full scale: an RMS of 1 equals this level in dB SPL.
pub const CALIBRATION_OFFSET_DB: f64 = 94.0;
/// Rise and decay time constants of the simulated skin-conductance response.
pub const SCR_RISE_S: f64 = 0.75;
pub const SCR_DECAY_S: f64 = 4.0;
/// Milestone-locked SCR peaks fall this far after their marker.
pub const SCR_PEAK_LAG_S: (f64, f64) = (1.25, 4.75);
const NOISE_FLOOR_DB: f64 = 30.0;
const TRACK_RATE: f64 = 10.0;
const BLOCK_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub label: String,
    pub start_s: f64,
    /// Gesture ids, cycled in order.
    pub gestures: Vec<String>,
    pub emotion: Emotion,
    pub speech_level_db: f64,
    pub pitch_hz: f64,
    /// Utterance texts, cycled in order.
    pub texts: Vec<String>,
    pub heart_rate_bpm: f64,
    /// Standard deviation of beat-to-beat interval jitter.
    pub rr_jitter_ms: f64,
    pub avatar_distance_m: f64,
    pub tonic_us: f64,
    /// Spacing of milestone markers, each followed by a skin-conductance
    /// response; `None` places no milestones.
    #[serde(default)]
    pub milestone_interval_s: Option<f64>,
    pub spontaneous_scr_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub context: ContextState,
    pub phases: Vec<Phase>,
    pub audio_rate: f64,
    pub video_rate: f64,
    pub emg_rate: f64,
    pub eeg_rate: f64,
    pub eeg_channels: usize,
    /// Mean per-channel variance of the target alpha source over the mean
    /// per-channel variance of everything else, in dB.
    pub eeg_snr_db: f64,
    pub alpha_hz: f64,
    pub physio_rate: f64,
    pub proxemics_rate: f64,
}

fn texts(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        let context = ContextState::new("s1")
            .expect("non-empty scenario")
            .with_demographics("f", "group_a");
        Self {
            seed: 42,
            duration_s: 300.0,
            context,
            phases: vec![
                Phase {
                    label: "calm".into(),
                    start_s: 0.0,
                    gestures: texts(&["open_palms_forward", "palms_down_lowering", "attention_raised_hand"]),
                    emotion: Emotion::Neutral,
                    speech_level_db: 58.0,
                    pitch_hz: 120.0,
                    texts: texts(&[
                        "Guten Tag, ich bin von der Polizei.",
                        "Können Sie mir bitte Ihren Ausweis zeigen?",
                        "Haben Sie heute etwas Ungewöhnliches bemerkt?",
                        "Vielen Dank, das ist alles in Ordnung.",
                        "Ich erkläre Ihnen jetzt kurz, wie es weitergeht.",
                    ]),
                    heart_rate_bpm: 68.0,
                    rr_jitter_ms: 25.0,
                    avatar_distance_m: 2.5,
                    tonic_us: 2.0,
                    milestone_interval_s: None,
                    spontaneous_scr_per_min: 1.5,
                },
                Phase {
                    label: "escalation".into(),
                    start_s: 120.0,
                    gestures: texts(&["arms_crossed_defensive", "pointing_at_person", "hands_raised_guard", "stop_palm_out"]),
                    emotion: Emotion::Anger,
                    speech_level_db: 80.0,
                    pitch_hz: 210.0,
                    texts: texts(&[
                        "Hör mir zu, ich sag dir das nicht noch einmal!",
                        "Halt die Klappe, du Idiot!",
                        "Was willst du eigentlich von mir?",
                        "Gib mir sofort deinen Ausweis!",
                        "Du bleibst jetzt da stehen!",
                    ]),
                    heart_rate_bpm: 100.0,
                    rr_jitter_ms: 8.0,
                    avatar_distance_m: 0.9,
                    tonic_us: 2.6,
                    milestone_interval_s: Some(15.0),
                    spontaneous_scr_per_min: 0.0,
                },
                Phase {
                    label: "recovery".into(),
                    start_s: 200.0,
                    gestures: texts(&["slow_nod_hands_low", "palms_down_lowering", "hands_at_chest"]),
                    emotion: Emotion::Neutral,
                    speech_level_db: 60.0,
                    pitch_hz: 130.0,
                    texts: texts(&[
                        "Entschuldigen Sie, lassen Sie uns in Ruhe sprechen.",
                        "Ich verstehe Ihre Situation.",
                        "Bitte setzen Sie sich kurz hin.",
                        "Wir finden gemeinsam eine Lösung für Sie.",
                    ]),
                    heart_rate_bpm: 75.0,
                    rr_jitter_ms: 18.0,
                    avatar_distance_m: 2.0,
                    tonic_us: 2.3,
                    milestone_interval_s: None,
                    spontaneous_scr_per_min: 1.0,
                },
            ],
            audio_rate: 16_000.0,
            video_rate: 30.0,
            emg_rate: 1000.0,
            eeg_rate: 250.0,
            eeg_channels: 8,
            eeg_snr_db: 3.0,
            alpha_hz: 10.0,
            physio_rate: 250.0,
            proxemics_rate: 30.0,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        let rates = [
            ("audio_rate", self.audio_rate),
            ("video_rate", self.video_rate),
            ("emg_rate", self.emg_rate),
            ("eeg_rate", self.eeg_rate),
            ("physio_rate", self.physio_rate),
            ("proxemics_rate", self.proxemics_rate),
        ];
        for (name, r) in rates {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("{name} must be positive, got {r}"));
            }
        }
        if self.eeg_channels < 2 {
            return bad("at least two EEG channels are needed".into());
        }
        if !(self.alpha_hz > 1.0 && self.alpha_hz < 0.4 * self.eeg_rate) {
            return bad(format!("alpha frequency {} Hz is out of range", self.alpha_hz));
        }
        let first = self.phases.first().ok_or_else(|| Error::Invalid("no phases".into()))?;
        if first.start_s != 0.0 {
            return bad("the first phase must start at 0 s".into());
        }
        for w in self.phases.windows(2) {
            if !(w[1].start_s > w[0].start_s) {
                return bad(format!("phase {} must start after {}", w[1].label, w[0].label));
            }
        }
        for p in &self.phases {
            if p.gestures.is_empty() || p.texts.is_empty() {
                return bad(format!("phase {} needs gestures and texts", p.label));
            }
            for g in &p.gestures {
                if !taxonomy.gestures.iter().any(|d| &d.id == g) {
                    return bad(format!("phase {}: unknown gesture {g}", p.label));
                }
            }
            if !(p.heart_rate_bpm >= 30.0 && p.heart_rate_bpm <= 200.0) {
                return bad(format!("phase {}: heart rate out of range", p.label));
            }
            if !(p.avatar_distance_m > 0.0 && p.pitch_hz > 0.0 && p.tonic_us > 0.0) {
                return bad(format!("phase {}: distance, pitch and tonic level must be positive", p.label));
            }
            if p.milestone_interval_s.is_some_and(|i| !(i >= 6.0)) {
                return bad(format!("phase {}: milestones must be at least 6 s apart", p.label));
            }
            if !(p.rr_jitter_ms >= 0.0 && p.rr_jitter_ms < 100.0) {
                return bad(format!("phase {}: RR jitter must be in [0, 100) ms", p.label));
            }
            if !(p.spontaneous_scr_per_min >= 0.0) {
                return bad(format!("phase {}: negative SCR rate", p.label));
            }
        }
        Ok(())
    }

    /// Index of the phase active at `t`.
    pub fn phase_at(&self, t: f64) -> usize {
        self.phases.iter().rposition(|p| p.start_s <= t).unwrap_or(0)
    }

    fn phase_end(&self, k: usize) -> f64 {
        self.phases
            .get(k + 1)
            .map_or(self.duration_s, |p| p.start_s)
            .min(self.duration_s)
    }
}

/// Independent random stream for one part of the session.
fn lane_rng(seed: u64, lane: &str) -> ChaCha8Rng {
    // FNV-1a keeps lane seeds stable across releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in lane.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn quantize(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

/// Regularly sampled scalar trace with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub rate: f64,
    pub values: Vec<f64>,
}

impl Track {
    /// First-order lag (time constant `tau`) toward a piecewise target,
    /// starting at the target's initial value.
    pub fn lagged(rate: f64, duration: f64, tau: f64, target: impl Fn(f64) -> f64) -> Self {
        let n = (duration * rate).ceil() as usize + 1;
        let alpha = 1.0 - (-1.0 / (rate * tau)).exp();
        let mut y = target(0.0);
        let values = (0..n)
            .map(|i| {
                let v = y;
                y += alpha * (target(i as f64 / rate) - y);
                v
            })
            .collect();
        Self { rate, values }
    }

    pub fn at(&self, t: f64) -> f64 {
        let x = (t * self.rate).max(0.0);
        let i = x.floor() as usize;
        match (self.values.get(i), self.values.get(i + 1)) {
            (Some(a), Some(b)) => a + (x - i as f64) * (b - a),
            (Some(a), None) => *a,
            _ => self.values.last().copied().unwrap_or(0.0),
        }
    }
}

/// Difference-of-exponentials response scaled to a unit peak.
pub fn scr_response(dt: f64, rise: f64, decay: f64) -> f64 {
    if dt < 0.0 {
        return 0.0;
    }
    let raw = |d: f64| (-d / decay).exp() - (-d / rise).exp();
    raw(dt) / raw(scr_peak_delay(rise, decay))
}

/// Time from onset to the peak of `scr_response`.
pub fn scr_peak_delay(rise: f64, decay: f64) -> f64 {
    (decay / rise).ln() * rise * decay / (decay - rise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrDriver {
    pub onset: f64,
    pub peak: f64,
    /// Peak rise in microsiemens.
    pub amplitude: f64,
    /// Label of the marker the response follows, if any.
    pub marker: Option<String>,
}

impl ScrDriver {
    pub fn new(onset: f64, amplitude: f64, marker: Option<String>) -> Self {
        Self {
            onset,
            peak: onset + scr_peak_delay(SCR_RISE_S, SCR_DECAY_S),
            amplitude,
            marker,
        }
    }
}

/// Skin conductance in microsiemens: tonic level, the given responses and
/// white measurement noise.
pub fn eda_signal(
    rng: &mut ChaCha8Rng,
    rate: f64,
    n: usize,
    tonic: impl Fn(f64) -> f64,
    drivers: &[ScrDriver],
    noise_sd: f64,
) -> Vec<f64> {
    let reach = SCR_DECAY_S * 12.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let phasic: f64 = drivers
                .iter()
                .filter(|d| t >= d.onset && t < d.onset + reach)
                .map(|d| d.amplitude * scr_response(t - d.onset, SCR_RISE_S, SCR_DECAY_S))
                .sum();
            tonic(t) + phasic + noise_sd * gauss(rng)
        })
        .collect()
}

/// Beat times for a heart rate profile with respiratory modulation and
/// beat-to-beat jitter (`jitter_sd` seconds at each time).
pub fn beat_times(
    rng: &mut ChaCha8Rng,
    duration: f64,
    bpm: impl Fn(f64) -> f64,
    jitter_sd: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut t = rng.random_range(0.3..0.8);
    let mut out = Vec::new();
    while t < duration - 0.4 {
        out.push(t);
        let rr = 60.0 / bpm(t) * (1.0 + 0.03 * (2.0 * PI * 0.25 * t).sin()) + jitter_sd(t) * gauss(rng);
        t += rr.max(0.3);
    }
    out
}

/// Sum-of-Gaussians PQRST complex in millivolts, centred on the R wave.
pub fn pqrst(dt: f64) -> f64 {
    let g = |a: f64, mu: f64, s: f64| a * (-(dt - mu) * (dt - mu) / (2.0 * s * s)).exp();
    g(0.15, -0.2, 0.025) + g(-0.1, -0.03, 0.01) + g(1.0, 0.0, 0.01) + g(-0.15, 0.03, 0.01) + g(0.3, 0.25, 0.04)
}

/// ECG with baseline wander and white noise.
pub fn ecg_signal(rng: &mut ChaCha8Rng, rate: f64, n: usize, beats: &[f64], noise_sd: f64) -> Vec<f64> {
    let mut k = 0;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            while k < beats.len() && beats[k] < t - 0.6 {
                k += 1;
            }
            let qrs: f64 = beats[k..]
                .iter()
                .take_while(|&&b| b < t + 0.6)
                .map(|&b| pqrst(t - b))
                .sum();
            qrs + 0.1 * (2.0 * PI * 0.2 * t).sin() + noise_sd * gauss(rng)
        })
        .collect()
}

/// Spatial layout of the simulated EEG sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegMontage {
    /// Forward pattern of the target alpha source.
    pub pattern: Vec<f64>,
    /// Forward pattern of a second alpha source with an unrelated envelope.
    pub distractor: Vec<f64>,
    /// Mixing of independent background noise sources into channels.
    pub noise_mixing: Matrix,
}

impl EegMontage {
    pub fn random(rng: &mut ChaCha8Rng, channels: usize) -> Self {
        let pattern = (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        let distractor = (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut noise_mixing = Matrix::zeros(channels, channels);
        for i in 0..channels {
            for j in 0..channels {
                noise_mixing[(i, j)] = rng.random_range(-0.3..0.3);
            }
            noise_mixing[(i, i)] += 1.0;
        }
        Self {
            pattern,
            distractor,
            noise_mixing,
        }
    }

    pub fn channels(&self) -> usize {
        self.pattern.len()
    }
}

/// `channels × n` EEG: a target alpha oscillation whose amplitude follows
/// `envelope`, a distractor alpha source, and mixed 1/f-like background.
/// The target is scaled so that its mean per-channel variance over the mean
/// per-channel variance of the remainder is `snr_db`.
pub fn eeg_signal(
    rng: &mut ChaCha8Rng,
    montage: &EegMontage,
    rate: f64,
    n: usize,
    alpha_hz: f64,
    snr_db: f64,
    envelope: impl Fn(f64) -> f64,
) -> Matrix {
    let c = montage.channels();
    let mut rest = Matrix::zeros(c, n);
    let mut sources = vec![0.0; c];
    let mut acc = vec![0.0; c];
    let d_phase0: f64 = rng.random_range(0.0..2.0 * PI);
    let d_env_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let mut d_phase = d_phase0;
    for s in 0..n {
        let t = s as f64 / rate;
        for (a, src) in acc.iter_mut().zip(sources.iter_mut()) {
            let w = gauss(rng);
            *a = 0.98 * *a + w;
            *src = 0.3 * *a + w;
        }
        d_phase += 2.0 * PI * (alpha_hz + 1.0) / rate;
        let d = 0.8 * (1.0 + 0.5 * (2.0 * PI * t / 37.0 + d_env_phase).sin()) * d_phase.sin();
        for ch in 0..c {
            let mixed: f64 = (0..c).map(|k| montage.noise_mixing[(ch, k)] * sources[k]).sum();
            rest[(ch, s)] = mixed + montage.distractor[ch] * d;
        }
    }
    let mut target = Vec::with_capacity(n);
    let mut phase: f64 = rng.random_range(0.0..2.0 * PI);
    for s in 0..n {
        let t = s as f64 / rate;
        phase += 2.0 * PI * (alpha_hz + 0.3 * (2.0 * PI * 0.1 * t).sin()) / rate;
        target.push(envelope(t) * phase.sin());
    }
    let var = |x: &[f64]| cuelayer_core::math::variance(x);
    let p_rest = (0..c).map(|ch| var(rest.row(ch))).sum::<f64>() / c as f64;
    let p2: f64 = montage.pattern.iter().map(|a| a * a).sum::<f64>() / c as f64;
    let p_target = var(&target) * p2;
    let gain = if p_target > 0.0 {
        (10f64.powf(snr_db / 10.0) * p_rest / p_target).sqrt()
    } else {
        0.0
    };
    for ch in 0..c {
        let a = gain * montage.pattern[ch];
        for (v, x) in rest.row_mut(ch).iter_mut().zip(&target) {
            *v += a * x;
        }
    }
    rest
}

/// Seven-channel mixing of three latent muscle drives for one emotion.
pub fn emg_mixing(emotion: Emotion) -> Matrix {
    let idx = Emotion::ALL.iter().position(|e| *e == emotion).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0xE316_0000 + idx as u64);
    let mut m = Matrix::zeros(EMG_CHANNELS, 3);
    for c in 0..EMG_CHANNELS {
        for k in 0..3 {
            m[(c, k)] = rng.random_range(-1.0..1.0);
        }
    }
    m
}

/// Overall activation level per emotion.
pub fn emg_gain(emotion: Emotion) -> f64 {
    match emotion {
        Emotion::Anger => 1.6,
        Emotion::Disgust => 1.2,
        Emotion::Fear => 1.3,
        Emotion::Happiness => 1.0,
        Emotion::Sadness => 0.7,
        Emotion::Surprise => 1.1,
        Emotion::Neutral => 0.6,
    }
}

/// `7 × n` EMG starting at `t0`: emotion-specific mixtures of broadband
/// drives, independent channel noise and 50 Hz mains pickup.
pub fn emg_signal(
    rng: &mut ChaCha8Rng,
    rate: f64,
    t0: f64,
    n: usize,
    emotion_at: impl Fn(f64) -> Emotion,
) -> Matrix {
    let mixings: Vec<Matrix> = Emotion::ALL.iter().map(|e| emg_mixing(*e)).collect();
    let mut out = Matrix::zeros(EMG_CHANNELS, n);
    for s in 0..n {
        let t = t0 + s as f64 / rate;
        let e = emotion_at(t);
        let idx = Emotion::ALL.iter().position(|x| *x == e).unwrap_or(6);
        let g = emg_gain(e);
        let drive = [gauss(rng), gauss(rng), gauss(rng)];
        let mains = 0.3 * (2.0 * PI * MAINS_HZ * t).sin();
        for c in 0..EMG_CHANNELS {
            let m = &mixings[idx];
            let v = m[(c, 0)] * drive[0] + m[(c, 1)] * drive[1] + m[(c, 2)] * drive[2];
            out[(c, s)] = g * (v + 0.3 * gauss(rng)) + mains;
        }
    }
    out
}

/// Harmonic voice-like tone at `f0` with a given RMS level in dB SPL,
/// raised-cosine ramps and syllable-rate amplitude modulation.
pub fn voiced_segment(rate: f64, n: usize, f0: f64, level_db: f64, phase0: f64) -> Vec<f64> {
    const HARMONICS: usize = 6;
    let norm: f64 = (1..=HARMONICS).map(|k| 0.5 / (k * k) as f64).sum::<f64>().sqrt();
    let rms = 10f64.powf((level_db - CALIBRATION_OFFSET_DB) / 20.0);
    let ramp = (0.02 * rate) as usize;
    let mut phase = phase0;
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            phase += 2.0 * PI * f0 * (1.0 + 0.03 * (2.0 * PI * 1.3 * t).sin()) / rate;
            let tone: f64 = (1..=HARMONICS).map(|k| (k as f64 * phase).sin() / k as f64).sum();
            let edge = i.min(n - 1 - i);
            let env = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            // Mean square of the modulation is 0.66.
            let syllables = (0.8 + 0.2 * (2.0 * PI * 2.5 * t).cos()) / 0.66f64.sqrt();
            rms / norm * env * syllables * tone
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub label: String,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureSpan {
    pub t0: f64,
    pub t1: f64,
    pub gesture_id: String,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionSpan {
    pub t0: f64,
    pub t1: f64,
    pub emotion: Emotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpokenUtterance {
    pub utterance: Utterance,
    pub level_db: f64,
    pub pitch_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegTruth {
    pub alpha_hz: f64,
    pub snr_db: f64,
    pub channel_labels: Vec<String>,
    pub montage: EegMontage,
    /// Mean avatar distance over each 1 s epoch taken every 0.5 s.
    pub epoch_targets: Vec<f64>,
}

/// What the analysis lanes should recover from a simulated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub duration_s: f64,
    pub context: ContextState,
    pub phases: Vec<PhaseSpan>,
    pub markers: Vec<EventMarker>,
    pub r_peaks: Vec<f64>,
    pub scr: Vec<ScrDriver>,
    pub gestures: Vec<GestureSpan>,
    pub emotions: Vec<EmotionSpan>,
    pub utterances: Vec<SpokenUtterance>,
    pub eeg: EegTruth,
    /// Trainee-to-avatar distance in meters.
    pub distance: Track,
    pub heart_rate: Track,
}

impl GroundTruth {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(io_at(path))
    }

    pub fn emotion_at(&self, t: f64) -> Emotion {
        self.emotions
            .iter()
            .find(|s| t >= s.t0 && t < s.t1)
            .map_or(Emotion::Neutral, |s| s.emotion)
    }

    pub fn gesture_at(&self, t: f64) -> Option<&GestureSpan> {
        self.gestures.iter().find(|s| t >= s.t0 && t < s.t1)
    }
}

pub struct SimulatedSession {
    pub records: Vec<Record>,
    pub truth: GroundTruth,
}

impl SimulatedSession {
    pub fn write(&self, session: &Path, truth: &Path) -> Result<()> {
        let mut w = RecordWriter::create(session)?;
        w.write_all(&self.records)?;
        w.finish()?;
        self.truth.write(truth)
    }
}

fn stream_specs(cfg: &SimulatorConfig) -> Vec<StreamSpec> {
    let with_units = |mut s: StreamSpec, unit: &str| {
        s.channel_units = vec![unit.to_string(); s.channel_count];
        s
    };
    let mut pose = StreamSpec::new(POSE_STREAM, Modality::VideoLandmarks, 132, cfg.video_rate);
    pose.channel_units = (0..132)
        .map(|i| if i % 4 == 3 { "visibility" } else { "m" }.to_string())
        .collect();
    vec![
        with_units(StreamSpec::new(AUDIO_STREAM, Modality::Audio, 1, cfg.audio_rate), "Pa"),
        pose,
        with_units(StreamSpec::new(EMG_STREAM, Modality::Emg, EMG_CHANNELS, cfg.emg_rate), "mV"),
        with_units(StreamSpec::new(EEG_STREAM, Modality::Eeg, cfg.eeg_channels, cfg.eeg_rate), "uV"),
        with_units(StreamSpec::new(ECG_STREAM, Modality::Ecg, 1, cfg.physio_rate), "mV"),
        with_units(StreamSpec::new(EDA_STREAM, Modality::Eda, 1, cfg.physio_rate), "uS"),
        with_units(StreamSpec::new(PROXEMICS_STREAM, Modality::Proxemics, 6, cfg.proxemics_rate), "m"),
        StreamSpec::new(TRANSCRIPT_STREAM, Modality::Transcript, 1, 0.0),
    ]
}

/// Splits channel-major data into 1 s sample blocks.
fn push_blocks(out: &mut Vec<Record>, stream: &str, rate: f64, channels: &[&[f64]], scale: f64) {
    let n = channels.first().map_or(0, |c| c.len());
    let per = ((BLOCK_S * rate).round() as usize).max(1);
    let mut start = 0;
    while start < n {
        let end = (start + per).min(n);
        let values = (start..end)
            .map(|i| channels.iter().map(|c| quantize(c[i], scale)).collect())
            .collect();
        out.push(Record::sample_block(stream, start as f64 / rate, rate, values));
        start = end;
    }
}

fn markers(cfg: &SimulatorConfig) -> Result<Vec<EventMarker>> {
    let mut out = Vec::new();
    let mut k = 0;
    for (i, p) in cfg.phases.iter().enumerate() {
        if p.start_s >= cfg.duration_s {
            break;
        }
        let mut m = EventMarker::new(p.start_s, "phase_start")?;
        m.payload.insert("phase".into(), p.label.clone());
        out.push(m);
        if let Some(step) = p.milestone_interval_s {
            let end = cfg.phase_end(i);
            let mut t = p.start_s + step / 2.0;
            while t + SCR_PEAK_LAG_S.1 + 1.0 < end {
                k += 1;
                let mut m = EventMarker::new(t, format!("milestone_{k:02}"))?;
                m.payload.insert("phase".into(), p.label.clone());
                out.push(m);
                t += step;
            }
        }
    }
    Ok(out)
}

/// Milestone-locked responses plus spontaneous ones kept clear of every
/// marker's attribution window and of each other.
fn scr_drivers(cfg: &SimulatorConfig, markers: &[EventMarker], rng: &mut ChaCha8Rng) -> Vec<ScrDriver> {
    let delay = scr_peak_delay(SCR_RISE_S, SCR_DECAY_S);
    let mut out: Vec<ScrDriver> = markers
        .iter()
        .filter(|m| m.label.starts_with("milestone"))
        .map(|m| {
            let lag = rng.random_range(SCR_PEAK_LAG_S.0..SCR_PEAK_LAG_S.1);
            ScrDriver::new(m.t + lag - delay, rng.random_range(0.3..0.6), Some(m.label.clone()))
        })
        .collect();
    for (i, p) in cfg.phases.iter().enumerate() {
        if p.spontaneous_scr_per_min <= 0.0 {
            continue;
        }
        let gap = Exp::new(p.spontaneous_scr_per_min / 60.0).expect("positive rate");
        let end = cfg.phase_end(i);
        let mut t = p.start_s + gap.sample(rng);
        while t < end - 15.0 {
            let peak = t + delay;
            let near_marker = markers.iter().any(|m| peak > m.t - 1.0 && peak < m.t + 6.0);
            let near_other = out.iter().any(|d| (d.onset - t).abs() < 8.0);
            if t > 5.0 && !near_marker && !near_other {
                out.push(ScrDriver::new(t, rng.random_range(0.15..0.4), None));
            }
            t += gap.sample(rng);
        }
    }
    out.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    out
}

fn utterances(cfg: &SimulatorConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SpokenUtterance>> {
    let mut out = Vec::new();
    for (i, p) in cfg.phases.iter().enumerate() {
        let end = cfg.phase_end(i);
        let mut t = p.start_s + rng.random_range(0.5..1.5);
        let mut k = 0;
        loop {
            let text = &p.texts[k % p.texts.len()];
            let words = text.split_whitespace().count() as f64;
            let dur = words * 0.32 * rng.random_range(0.9..1.1);
            if t + dur > end - 0.5 {
                break;
            }
            out.push(SpokenUtterance {
                utterance: Utterance::new(text.clone(), SPEAKER, t, t + dur)?,
                level_db: p.speech_level_db + rng.random_range(-2.0..2.0),
                pitch_hz: p.pitch_hz * rng.random_range(0.95..1.05),
            });
            t += dur + rng.random_range(1.0..2.5);
            k += 1;
        }
    }
    Ok(out)
}

fn gesture_spans(cfg: &SimulatorConfig, taxonomy: &Taxonomy, rng: &mut ChaCha8Rng) -> Vec<GestureSpan> {
    let mut out = Vec::new();
    for (i, p) in cfg.phases.iter().enumerate() {
        let end = cfg.phase_end(i);
        let mut t = p.start_s;
        let mut k = 0;
        while t < end {
            let id = &p.gestures[k % p.gestures.len()];
            let class = taxonomy
                .gestures
                .iter()
                .position(|d| &d.id == id)
                .expect("validated gesture id");
            let t1 = (t + rng.random_range(3.0..6.0)).min(end);
            out.push(GestureSpan {
                t0: t,
                t1,
                gesture_id: id.clone(),
                class,
            });
            t = t1;
            k += 1;
        }
    }
    out
}

fn sample_count(duration: f64, rate: f64) -> usize {
    (duration * rate).round() as usize
}

/// Generates a complete session from `cfg`. The same configuration always
/// gives identical records.
pub fn simulate(cfg: &SimulatorConfig, taxonomy: &Taxonomy) -> Result<SimulatedSession> {
    cfg.validate(taxonomy)?;
    let seed = cfg.seed;
    let dur = cfg.duration_s;
    let phase = |t: f64| &cfg.phases[cfg.phase_at(t)];

    let markers = markers(cfg)?;
    let scr = scr_drivers(cfg, &markers, &mut lane_rng(seed, "scr"));
    let spoken = utterances(cfg, &mut lane_rng(seed, "speech"))?;
    let gestures = gesture_spans(cfg, taxonomy, &mut lane_rng(seed, "gesture"));
    let emotions: Vec<EmotionSpan> = (0..cfg.phases.len())
        .filter(|&i| cfg.phases[i].start_s < dur)
        .map(|i| EmotionSpan {
            t0: cfg.phases[i].start_s,
            t1: cfg.phase_end(i),
            emotion: cfg.phases[i].emotion,
        })
        .collect();

    let mut wander_rng = lane_rng(seed, "distance");
    let wander: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                wander_rng.random_range(0.05..0.12),
                wander_rng.random_range(15.0..45.0),
                wander_rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let base = Track::lagged(TRACK_RATE, dur, 6.0, |t| phase(t).avatar_distance_m);
    let distance = Track {
        rate: TRACK_RATE,
        values: base
            .values
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let t = i as f64 / TRACK_RATE;
                let w: f64 = wander.iter().map(|(a, p, ph)| a * (2.0 * PI * t / p + ph).sin()).sum();
                (d + w).max(0.3)
            })
            .collect(),
    };
    let heart_rate = Track::lagged(TRACK_RATE, dur, 8.0, |t| phase(t).heart_rate_bpm);
    let tonic = Track::lagged(TRACK_RATE, dur, 20.0, |t| phase(t).tonic_us);

    let mut records = Vec::new();
    for spec in stream_specs(cfg) {
        records.push(Record::stream_spec(0.0, &spec));
    }
    records.push(Record::storybook(0.0, &cfg.context));
    records.extend(markers.iter().map(Record::marker));
    for s in &spoken {
        records.push(Record::utterance(TRANSCRIPT_STREAM, &s.utterance));
    }

    // Audio: voiced segments over a white noise floor.
    let n_audio = sample_count(dur, cfg.audio_rate);
    let mut audio_rng = lane_rng(seed, "audio");
    let floor = 10f64.powf((NOISE_FLOOR_DB - CALIBRATION_OFFSET_DB) / 20.0);
    let mut audio: Vec<f64> = (0..n_audio).map(|_| floor * gauss(&mut audio_rng)).collect();
    for s in &spoken {
        let i0 = (s.utterance.t0 * cfg.audio_rate).round() as usize;
        let i1 = ((s.utterance.t1 * cfg.audio_rate).round() as usize).min(n_audio);
        if i1 <= i0 {
            continue;
        }
        let phase0 = audio_rng.random_range(0.0..2.0 * PI);
        let seg = voiced_segment(cfg.audio_rate, i1 - i0, s.pitch_hz, s.level_db, phase0);
        for (a, v) in audio[i0..i1].iter_mut().zip(seg) {
            *a += v;
        }
    }
    push_blocks(&mut records, AUDIO_STREAM, cfg.audio_rate, &[&audio], 1e7);
    drop(audio);

    // Pose landmarks.
    let n_pose = sample_count(dur, cfg.video_rate);
    let mut pose_rng = lane_rng(seed, "pose");
    let noise = PoseNoise::default();
    let mut pose: Vec<Vec<f64>> = vec![Vec::with_capacity(n_pose); 132];
    let mut span = 0;
    for i in 0..n_pose {
        let t = i as f64 / cfg.video_rate;
        while span + 1 < gestures.len() && gestures[span].t1 <= t {
            span += 1;
        }
        let frame = sample_pose(&mut pose_rng, gestures[span].class, &noise);
        for (ch, v) in frame.to_values().into_iter().enumerate() {
            pose[ch].push(v);
        }
    }
    let pose_refs: Vec<&[f64]> = pose.iter().map(|c| c.as_slice()).collect();
    push_blocks(&mut records, POSE_STREAM, cfg.video_rate, &pose_refs, 1e4);
    drop(pose);

    // EMG.
    let emotion_at = |t: f64| {
        emotions
            .iter()
            .find(|s| t >= s.t0 && t < s.t1)
            .map_or(Emotion::Neutral, |s| s.emotion)
    };
    let emg = emg_signal(
        &mut lane_rng(seed, "emg"),
        cfg.emg_rate,
        0.0,
        sample_count(dur, cfg.emg_rate),
        emotion_at,
    );
    let emg_refs: Vec<&[f64]> = (0..EMG_CHANNELS).map(|c| emg.row(c)).collect();
    push_blocks(&mut records, EMG_STREAM, cfg.emg_rate, &emg_refs, 1e4);
    drop(emg);

    // EEG with the alpha envelope tied to the avatar distance.
    let mut eeg_rng = lane_rng(seed, "eeg");
    let montage = EegMontage::random(&mut eeg_rng, cfg.eeg_channels);
    let n_eeg = sample_count(dur, cfg.eeg_rate);
    let eeg = eeg_signal(
        &mut eeg_rng,
        &montage,
        cfg.eeg_rate,
        n_eeg,
        cfg.alpha_hz,
        cfg.eeg_snr_db,
        |t| distance.at(t),
    );
    let eeg_refs: Vec<&[f64]> = (0..cfg.eeg_channels).map(|c| eeg.row(c)).collect();
    push_blocks(&mut records, EEG_STREAM, cfg.eeg_rate, &eeg_refs, 1e3);
    drop(eeg);
    let spec = cuelayer_core::dsp::EpochSpec::EEG;
    let epoch_count = cuelayer_core::neuro::pipeline::epoch_count(n_eeg, cfg.eeg_rate, &spec)?;
    let epoch_targets = (0..epoch_count)
        .map(|k| {
            let t0 = k as f64 * spec.hop;
            (0..10).map(|j| distance.at(t0 + (j as f64 + 0.5) * spec.length / 10.0)).sum::<f64>() / 10.0
        })
        .collect();

    // ECG and EDA.
    let n_phys = sample_count(dur, cfg.physio_rate);
    let mut ecg_rng = lane_rng(seed, "ecg");
    let r_peaks = beat_times(&mut ecg_rng, dur, |t| heart_rate.at(t), |t| phase(t).rr_jitter_ms / 1000.0);
    let ecg = ecg_signal(&mut ecg_rng, cfg.physio_rate, n_phys, &r_peaks, 0.02);
    push_blocks(&mut records, ECG_STREAM, cfg.physio_rate, &[&ecg], 1e4);
    let eda = eda_signal(
        &mut lane_rng(seed, "eda"),
        cfg.physio_rate,
        n_phys,
        |t| tonic.at(t) + 0.0005 * t,
        &scr,
        0.002,
    );
    push_blocks(&mut records, EDA_STREAM, cfg.physio_rate, &[&eda], 1e5);

    // Proxemics: headset with slight sway, avatar at the scripted distance.
    let n_prox = sample_count(dur, cfg.proxemics_rate);
    let mut prox_rng = lane_rng(seed, "proxemics");
    let heading0: f64 = prox_rng.random_range(0.0..2.0 * PI);
    let mut prox: Vec<Vec<f64>> = vec![Vec::with_capacity(n_prox); 6];
    for i in 0..n_prox {
        let t = i as f64 / cfg.proxemics_rate;
        let hmd = [
            0.02 * (2.0 * PI * 0.3 * t).sin(),
            1.65 + 0.01 * (2.0 * PI * 0.5 * t).sin(),
            0.02 * (2.0 * PI * 0.2 * t).cos(),
        ];
        let heading = heading0 + 0.3 * (2.0 * PI * t / 50.0).sin();
        let d = distance.at(t);
        let avatar = [hmd[0] + d * heading.cos(), hmd[1], hmd[2] + d * heading.sin()];
        for (ch, v) in hmd.iter().chain(&avatar).enumerate() {
            prox[ch].push(*v);
        }
    }
    let prox_refs: Vec<&[f64]> = prox.iter().map(|c| c.as_slice()).collect();
    push_blocks(&mut records, PROXEMICS_STREAM, cfg.proxemics_rate, &prox_refs, 1e4);

    crate::record::sort_records(&mut records);

    let phases = (0..cfg.phases.len())
        .filter(|&i| cfg.phases[i].start_s < dur)
        .map(|i| PhaseSpan {
            label: cfg.phases[i].label.clone(),
            t0: cfg.phases[i].start_s,
            t1: cfg.phase_end(i),
        })
        .collect();
    let truth = GroundTruth {
        seed,
        duration_s: dur,
        context: cfg.context.clone(),
        phases,
        markers,
        r_peaks,
        scr,
        gestures,
        emotions,
        utterances: spoken,
        eeg: EegTruth {
            alpha_hz: cfg.alpha_hz,
            snr_db: cfg.eeg_snr_db,
            channel_labels: (0..cfg.eeg_channels).map(|i| format!("E{}", i + 1)).collect(),
            montage,
            epoch_targets,
        },
        distance,
        heart_rate,
    };
    Ok(SimulatedSession { records, truth })
}

/// Sample counts per stream, for summaries.
pub fn stream_frame_counts(records: &[Record]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        if let Ok(crate::record::SamplePayload::Block(b)) = r.payload() {
            *out.entry(r.stream.clone()).or_insert(0) += b.values.len();
        }
    }
    out
}

/// A resting neutral EMG recording for baseline statistics.
pub fn resting_emg(seed: u64, rate: f64, seconds: f64) -> Matrix {
    emg_signal(
        &mut lane_rng(seed, "emg-rest"),
        rate,
        0.0,
        sample_count(seconds, rate),
        |_| Emotion::Neutral,
    )
}

/// Labelled EMG windows of `window_s` seconds, `per_class` for each emotion.
pub fn emg_training_windows(seed: u64, rate: f64, window_s: f64, per_class: usize) -> Vec<(Matrix, Emotion)> {
    let mut rng = lane_rng(seed, "emg-train");
    let n = sample_count(window_s, rate);
    let mut out = Vec::with_capacity(per_class * Emotion::ALL.len());
    for k in 0..per_class {
        for e in Emotion::ALL {
            let t0 = k as f64 * window_s;
            out.push((emg_signal(&mut rng, rate, t0, n, |_| e), e));
        }
    }
    out
}
