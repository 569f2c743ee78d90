//! Summary statistics over analyzed sessions, including the correlation
//! between answer length and mean loudness.

use std::collections::BTreeMap;

use cuelayer_core::math::{mean, pearson};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::lanes;
use crate::error::Result;
use crate::record::{Record, RecordKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    /// Absent when either variable is constant.
    pub r: Option<f64>,
}

/// Mean answer length and loudness of one speaker in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerMeans {
    pub session: String,
    pub speaker: String,
    pub answers: usize,
    pub length_s: f64,
    pub loudness_sone: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskStats {
    pub evaluations: usize,
    pub mean: f64,
    pub max: f64,
    pub uncertain_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub sessions: usize,
    pub records: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub features_by_lane: BTreeMap<String, usize>,
    pub proposals: usize,
    pub reviews: usize,
    pub expired: usize,
    pub decisions: BTreeMap<String, usize>,
    pub risk: Option<RiskStats>,
    pub utterances: usize,
    /// Over individual answers.
    pub length_loudness: Option<Correlation>,
    /// Over per-speaker means.
    pub speaker_length_loudness: Option<Correlation>,
    pub speakers: Vec<SpeakerMeans>,
}

#[derive(Deserialize)]
struct VerbalRecord {
    speaker: String,
    prosody: Option<ProsodyPart>,
}

#[derive(Deserialize)]
struct ProsodyPart {
    duration_s: f64,
    loudness_mean_sone: f64,
}

#[derive(Deserialize)]
struct RiskRecord {
    risk_score: f64,
    uncertain: bool,
}

/// Pearson correlation of `(length, loudness)` pairs; `None` below three.
pub fn length_loudness(points: &[(f64, f64)]) -> Option<Correlation> {
    if points.len() < 3 {
        return None;
    }
    let (a, b): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    Some(Correlation {
        n: points.len(),
        r: pearson(&a, &b).ok(),
    })
}

/// Builds the report over labelled sessions of analysis records.
pub fn build_report(sessions: &[(String, Vec<Record>)]) -> Result<Report> {
    let mut report = Report {
        sessions: sessions.len(),
        ..Report::default()
    };
    let mut answers = Vec::new();
    let mut per_speaker: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    let mut risks = Vec::new();
    for (label, records) in sessions {
        for r in records {
            report.records += 1;
            *report.by_kind.entry(kind_name(r.kind)).or_insert(0) += 1;
            if r.kind == RecordKind::Feature {
                *report.features_by_lane.entry(r.stream.clone()).or_insert(0) += 1;
            }
            match (r.kind, r.stream.as_str()) {
                (RecordKind::Feature, lanes::VERBAL) => {
                    let v: VerbalRecord = r.data()?;
                    report.utterances += 1;
                    if let Some(p) = v.prosody {
                        answers.push((p.duration_s, p.loudness_mean_sone));
                        per_speaker
                            .entry((label.clone(), v.speaker))
                            .or_default()
                            .push((p.duration_s, p.loudness_mean_sone));
                    }
                }
                (RecordKind::Feature, lanes::RISK) => risks.push(r.data::<RiskRecord>()?),
                (RecordKind::Proposal | RecordKind::Decision, lanes::INTERPRET) => {
                    let v: Value = r.data()?;
                    match v["event"].as_str() {
                        Some("proposal") => report.proposals += 1,
                        Some("review") => report.reviews += 1,
                        Some("expired") => report.expired += 1,
                        Some("decision") => {
                            let d = v["decision"].as_str().unwrap_or("unknown").to_string();
                            *report.decisions.entry(d).or_insert(0) += 1;
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
    }
    report.length_loudness = length_loudness(&answers);
    report.speakers = per_speaker
        .into_iter()
        .map(|((session, speaker), pts)| {
            let (len, loud): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            SpeakerMeans {
                session,
                speaker,
                answers: pts.len(),
                length_s: mean(&len),
                loudness_sone: mean(&loud),
            }
        })
        .collect();
    let means: Vec<(f64, f64)> = report.speakers.iter().map(|s| (s.length_s, s.loudness_sone)).collect();
    report.speaker_length_loudness = length_loudness(&means);
    if !risks.is_empty() {
        let scores: Vec<f64> = risks.iter().map(|r| r.risk_score).collect();
        report.risk = Some(RiskStats {
            evaluations: risks.len(),
            mean: mean(&scores),
            max: scores.iter().copied().fold(f64::MIN, f64::max),
            uncertain_fraction: risks.iter().filter(|r| r.uncertain).count() as f64 / risks.len() as f64,
        });
    }
    Ok(report)
}

fn kind_name(kind: RecordKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{kind:?}"))
}
