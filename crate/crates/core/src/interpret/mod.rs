//! Interpretation layer: escalation index lookup, weighted cue fusion with a
//! contradiction flag, and cooldown-gated adaptation proposals awaiting
//! human decisions.

pub mod cues;
pub mod engine;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Error, Result};

pub use cues::{Cue, CueEncodings, CueSource};
pub use engine::{
    ActionSpec, AdaptationProposal, CooldownPolicy, Decision, DecisionRecord, InterpretEvent,
    Interpreter, InterpreterConfig, Mode, ProposalStatus, ReviewItem, Rule, RuleSet,
};

/// Reliability at or above which a cue takes part in the contradiction check.
pub const RELIABILITY_FLOOR: f64 = 0.5;
/// Cue values further apart than this flag the snapshot as uncertain.
pub const DISAGREEMENT_THRESHOLD: f64 = 0.5;

/// Scalar, boolean or text value of a storybook flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlagValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextState {
    pub scenario_id: String,
    #[serde(default)]
    pub flags: BTreeMap<String, FlagValue>,
    #[serde(default)]
    pub officer_gender: String,
    #[serde(default)]
    pub citizen_demographics: String,
}

impl ContextState {
    pub fn new(scenario_id: impl Into<String>) -> Result<Self> {
        let scenario_id = scenario_id.into();
        if scenario_id.is_empty() {
            return Err(invalid("context needs a scenario id"));
        }
        Ok(Self {
            scenario_id,
            ..Self::default()
        })
    }

    pub fn with_demographics(mut self, officer_gender: &str, citizen_demographics: &str) -> Self {
        self.officer_gender = officer_gender.into();
        self.citizen_demographics = citizen_demographics.into();
        self
    }

    pub fn flag(&self, key: &str) -> Option<&FlagValue> {
        self.flags.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexKey {
    pub gesture_id: String,
    pub scenario_id: String,
    pub officer_gender: String,
    pub citizen_demographics: String,
}

/// One row of the index table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub gesture_id: String,
    pub scenario_id: String,
    pub officer_gender: String,
    pub citizen_demographics: String,
    pub index: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexLookup {
    pub index: f64,
    /// False when the key was absent and the neutral default was used.
    pub found: bool,
}

/// Escalation (+) or de-escalation (−) index per gesture, scenario and
/// demographic pairing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EscalationIndexTable {
    entries: BTreeMap<IndexKey, f64>,
}

impl EscalationIndexTable {
    /// Builds the table; the last record wins for repeated keys.
    pub fn from_records<I: IntoIterator<Item = IndexRecord>>(records: I) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (row, r) in records.into_iter().enumerate() {
            if r.gesture_id.is_empty() || r.scenario_id.is_empty() {
                return Err(Error::Parse {
                    line: row + 2,
                    message: "gesture_id and scenario_id must be non-empty".into(),
                });
            }
            if !(-1.0..=1.0).contains(&r.index) {
                return Err(Error::Parse {
                    line: row + 2,
                    message: alloc::format!("index {} outside [-1, 1]", r.index),
                });
            }
            entries.insert(
                IndexKey {
                    gesture_id: r.gesture_id,
                    scenario_id: r.scenario_id,
                    officer_gender: r.officer_gender,
                    citizen_demographics: r.citizen_demographics,
                },
                r.index,
            );
        }
        Ok(Self { entries })
    }

    pub fn records(&self) -> Vec<IndexRecord> {
        self.entries
            .iter()
            .map(|(k, v)| IndexRecord {
                gesture_id: k.gesture_id.clone(),
                scenario_id: k.scenario_id.clone(),
                officer_gender: k.officer_gender.clone(),
                citizen_demographics: k.citizen_demographics.clone(),
                index: *v,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-key lookup; a missing key resolves to 0 and is logged.
    pub fn lookup(&self, gesture_id: &str, context: &ContextState) -> Result<IndexLookup> {
        if gesture_id.is_empty() || context.scenario_id.is_empty() {
            return Err(invalid("index lookup needs gesture and scenario ids"));
        }
        let key = IndexKey {
            gesture_id: gesture_id.into(),
            scenario_id: context.scenario_id.clone(),
            officer_gender: context.officer_gender.clone(),
            citizen_demographics: context.citizen_demographics.clone(),
        };
        Ok(match self.entries.get(&key) {
            Some(v) => IndexLookup {
                index: v.clamp(-1.0, 1.0),
                found: true,
            },
            None => {
                log::debug!("escalation index miss for {key:?}");
                IndexLookup {
                    index: 0.0,
                    found: false,
                }
            }
        })
    }
}

/// Per-source fusion weights in [0, 1]; unlisted sources weigh 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModalityWeights {
    weights: BTreeMap<CueSource, f64>,
}

impl ModalityWeights {
    pub fn get(&self, source: CueSource) -> f64 {
        self.weights.get(&source).copied().unwrap_or(1.0)
    }

    pub fn set(&mut self, source: CueSource, weight: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(invalid(alloc::format!("weight {weight} outside [0, 1]")));
        }
        self.weights.insert(source, weight);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (CueSource, f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSnapshot {
    pub t: f64,
    /// Cues that entered the fusion (weight and reliability above zero).
    pub cues: Vec<Cue>,
    pub weights: BTreeMap<CueSource, f64>,
    pub risk_score: f64,
    pub uncertain: bool,
}

/// `risk = Σ w·r·c / Σ w·r` over cues with `w·r > 0`. The snapshot is
/// uncertain when two contributing cues with reliability ≥ 0.5 differ by
/// more than 0.5.
pub fn fuse_cues(t: f64, cues: &[Cue], weights: &ModalityWeights) -> Result<FusedSnapshot> {
    let contributing: Vec<Cue> = cues
        .iter()
        .filter(|c| weights.get(c.source) * c.reliability > 0.0)
        .cloned()
        .collect();
    if contributing.is_empty() {
        return Err(degenerate("no cue with positive weight and reliability"));
    }
    for c in &contributing {
        c.validate()?;
    }
    let risk_score = if contributing.len() == 1 {
        contributing[0].value
    } else {
        let (num, den) = contributing.iter().fold((0.0, 0.0), |(n, d), c| {
            let a = weights.get(c.source) * c.reliability;
            (n + a * c.value, d + a)
        });
        (num / den).clamp(0.0, 1.0)
    };
    let reliable: Vec<&Cue> = contributing
        .iter()
        .filter(|c| c.reliability >= RELIABILITY_FLOOR)
        .collect();
    let lo = reliable.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let hi = reliable.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
    let uncertain = reliable.len() >= 2 && hi - lo > DISAGREEMENT_THRESHOLD;
    let weights = contributing
        .iter()
        .map(|c| (c.source, weights.get(c.source)))
        .collect();
    Ok(FusedSnapshot {
        t,
        cues: contributing,
        weights,
        risk_score,
        uncertain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn record(g: &str, s: &str, gender: &str, demo: &str, index: f64) -> IndexRecord {
        IndexRecord {
            gesture_id: g.into(),
            scenario_id: s.into(),
            officer_gender: gender.into(),
            citizen_demographics: demo.into(),
            index,
        }
    }

    #[test]
    fn lookup_examples() {
        let table = EscalationIndexTable::from_records(vec![
            record("g3", "s2", "m", "group_a", 0.6),
            record("g4", "s2", "m", "group_a", -1.0),
        ])
        .unwrap();
        let ctx = ContextState::new("s2").unwrap().with_demographics("m", "group_a");
        assert_eq!(table.lookup("g3", &ctx).unwrap().index, 0.6);
        assert_eq!(table.lookup("g4", &ctx).unwrap().index, -1.0);
        let miss = table.lookup("g9", &ctx).unwrap();
        assert_eq!((miss.index, miss.found), (0.0, false));
        assert!(table.lookup("", &ctx).is_err());
        assert!(EscalationIndexTable::from_records(vec![record("g", "s", "", "", 1.5)]).is_err());
        assert_eq!(table.records().len(), 2);
    }

    fn cue(source: CueSource, value: f64, reliability: f64) -> Cue {
        Cue::new(source, 0.0, value, reliability, "test").unwrap()
    }

    #[test]
    fn fusion_examples() {
        let w = ModalityWeights::default();
        let one = fuse_cues(1.0, &[cue(CueSource::Gesture, 0.8, 1.0)], &w).unwrap();
        assert_eq!(one.risk_score, 0.8);
        assert!(!one.uncertain);
        let split = fuse_cues(
            1.0,
            &[cue(CueSource::Gesture, 0.1, 1.0), cue(CueSource::Scr, 0.9, 1.0)],
            &w,
        )
        .unwrap();
        assert!(split.uncertain);
        let weak = fuse_cues(
            1.0,
            &[cue(CueSource::Gesture, 0.1, 0.4), cue(CueSource::Scr, 0.9, 1.0)],
            &w,
        )
        .unwrap();
        assert!(!weak.uncertain);
        assert!(fuse_cues(1.0, &[cue(CueSource::Gesture, 0.5, 0.0)], &w).is_err());
        let mut w0 = ModalityWeights::default();
        assert!(w0.set(CueSource::Gesture, 1.5).is_err());
        w0.set(CueSource::Gesture, 0.0).unwrap();
        assert!(fuse_cues(1.0, &[cue(CueSource::Gesture, 0.5, 1.0)], &w0).is_err());
    }

    fn sources() -> impl Strategy<Value = CueSource> {
        prop::sample::select(CueSource::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn ratio_form_invariants(
            cues in prop::collection::vec((sources(), 0.0f64..=1.0, 0.01f64..=1.0), 1..8),
            ws in prop::collection::vec(0.01f64..=1.0, CueSource::ALL.len()),
            scale in 0.01f64..1.0,
        ) {
            let cs: Vec<Cue> = cues.iter().map(|(s, v, r)| cue(*s, *v, *r)).collect();
            let mut a = ModalityWeights::default();
            let mut b = ModalityWeights::default();
            for (s, w) in CueSource::ALL.iter().zip(&ws) {
                a.set(*s, *w).unwrap();
                b.set(*s, *w * scale).unwrap();
            }
            let fa = fuse_cues(0.0, &cs, &a).unwrap();
            let fb = fuse_cues(0.0, &cs, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&fa.risk_score));
            prop_assert!((fa.risk_score - fb.risk_score).abs() <= 1e-12);
            prop_assert_eq!(fa.uncertain, fb.uncertain);
        }

        #[test]
        fn single_cue_is_exact(s in sources(), v in 0.0f64..=1.0, r in 0.001f64..=1.0, w in 0.001f64..=1.0) {
            let mut ws = ModalityWeights::default();
            ws.set(s, w).unwrap();
            prop_assert_eq!(fuse_cues(0.0, &[cue(s, v, r)], &ws).unwrap().risk_score, v);
        }

        #[test]
        fn lookup_bounded(v in -1.0f64..=1.0, g in "[a-z]{1,4}") {
            let t = EscalationIndexTable::from_records(vec![record(&g, "s", "f", "x", v)]).unwrap();
            let ctx = ContextState::new("s").unwrap().with_demographics("f", "x");
            let got = t.lookup(&g, &ctx).unwrap().index;
            prop_assert!((-1.0..=1.0).contains(&got));
            prop_assert_eq!(got, v);
        }
    }
}
