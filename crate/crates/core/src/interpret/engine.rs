//! Rule matching, cooldown gating and the proposal lifecycle.
//!
//! The [`Interpreter`] is meant to be owned by a single loop. Every state
//! change appends an [`InterpretEvent`] that the owner drains and persists.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::cues::{Cue, CueEncodings, CueSource};
use super::{fuse_cues, ContextState, EscalationIndexTable, FlagValue, FusedSnapshot, ModalityWeights};
use crate::error::{invalid, Error, Result};

/// Pending proposals older than this expire, seconds.
pub const DEFAULT_EXPIRY_S: f64 = 30.0;
/// Cues older than this stop contributing to fusion, seconds.
pub const DEFAULT_CUE_MAX_AGE_S: f64 = 10.0;
/// Actor recorded for proposals applied without a human decision.
pub const AUTO_ACTOR: &str = "auto";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub action: String,
    pub intensity: f64,
}

impl ActionSpec {
    pub fn new(action: impl Into<String>, intensity: f64) -> Self {
        Self {
            action: action.into(),
            intensity,
        }
    }

    fn validate_all(actions: &[ActionSpec]) -> Result<()> {
        if actions.is_empty() {
            return Err(invalid("action list is empty"));
        }
        for a in actions {
            if a.action.is_empty() || !(0.0..=1.0).contains(&a.intensity) {
                return Err(invalid(format!(
                    "action `{}` needs a name and an intensity in [0, 1]",
                    a.action
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub threshold: f64,
    pub actions: Vec<ActionSpec>,
    /// Scenarios the rule applies to; empty means all.
    #[serde(default)]
    pub scenarios: Vec<String>,
    /// Context flags that must hold exactly for the rule to apply.
    #[serde(default)]
    pub when_flags: BTreeMap<String, FlagValue>,
}

impl Rule {
    fn applies(&self, ctx: &ContextState) -> bool {
        (self.scenarios.is_empty() || self.scenarios.iter().any(|s| *s == ctx.scenario_id))
            && self
                .when_flags
                .iter()
                .all(|(k, v)| ctx.flags.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            rules: alloc::vec![Rule {
                name: "de-escalate".into(),
                threshold: 0.7,
                actions: alloc::vec![
                    ActionSpec::new("step_back", 0.5),
                    ActionSpec::new("avert_gaze", 0.5),
                    ActionSpec::new("lower_vocal_intensity", 0.6),
                ],
                scenarios: Vec::new(),
                when_flags: BTreeMap::new(),
            }],
        }
    }
}

impl RuleSet {
    pub fn validate(&self) -> Result<()> {
        for r in &self.rules {
            if !(0.0..=1.0).contains(&r.threshold) {
                return Err(invalid(format!("rule `{}` threshold outside [0, 1]", r.name)));
            }
            ActionSpec::validate_all(&r.actions)?;
        }
        Ok(())
    }

    /// Applicable rule with the highest threshold not above `risk`.
    pub fn matching(&self, risk: f64, ctx: &ContextState) -> Option<&Rule> {
        self.rules
            .iter()
            .filter(|r| r.applies(ctx) && risk >= r.threshold)
            .fold(None, |best: Option<&Rule>, r| match best {
                Some(b) if b.threshold >= r.threshold => Some(b),
                _ => Some(r),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooldownPolicy {
    pub duration_s: f64,
}

impl Default for CooldownPolicy {
    fn default() -> Self {
        Self { duration_s: 5.0 }
    }
}

impl CooldownPolicy {
    /// True when an event at `t` may follow one at `last`.
    pub fn allows(&self, last: Option<f64>, t: f64) -> bool {
        last.is_none_or(|l| t - l >= self.duration_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Auto,
    #[default]
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Approved,
    Rejected,
    Expired,
    AutoApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationProposal {
    pub id: String,
    pub t: f64,
    pub rule: String,
    pub risk_score: f64,
    pub actions: Vec<ActionSpec>,
    pub rationale: String,
    pub status: ProposalStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
    Override { actions: Vec<ActionSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub proposal_id: String,
    pub t: f64,
    pub actor: String,
    #[serde(flatten)]
    pub decision: Decision,
    /// Actions sent to the avatar as a result; empty on rejection.
    pub emitted_actions: Vec<ActionSpec>,
}

/// Threshold crossing held back because the cues contradict each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub t: f64,
    pub rule: String,
    pub risk_score: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum InterpretEvent {
    Proposal(AdaptationProposal),
    Review(ReviewItem),
    Decision(DecisionRecord),
    Expired { id: String, t: f64 },
    ModeChanged { t: f64, from: Mode, to: Mode },
    WeightChanged { t: f64, source: CueSource, weight: f64 },
    ContextChanged { t: f64, context: ContextState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpreterConfig {
    pub encodings: CueEncodings,
    pub rules: RuleSet,
    pub cooldown: CooldownPolicy,
    pub weights: ModalityWeights,
    pub mode: Mode,
    pub expiry_s: f64,
    pub cue_max_age_s: f64,
}

impl Default for InterpreterConfig {
    fn default() -> Self {
        Self {
            encodings: CueEncodings::default(),
            rules: RuleSet::default(),
            cooldown: CooldownPolicy::default(),
            weights: ModalityWeights::default(),
            mode: Mode::default(),
            expiry_s: DEFAULT_EXPIRY_S,
            cue_max_age_s: DEFAULT_CUE_MAX_AGE_S,
        }
    }
}

impl InterpreterConfig {
    pub fn validate(&self) -> Result<()> {
        self.encodings.validate()?;
        self.rules.validate()?;
        if !(self.cooldown.duration_s > 0.0) || !(self.expiry_s > 0.0) || !(self.cue_max_age_s > 0.0) {
            return Err(invalid("cooldown, expiry and cue age must be positive"));
        }
        if let Some((source, w)) = self.weights.iter().find(|(_, w)| !(0.0..=1.0).contains(w)) {
            return Err(invalid(format!("weight {w} for {} outside [0, 1]", source.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Interpreter {
    config: InterpreterConfig,
    table: EscalationIndexTable,
    context: ContextState,
    cues: BTreeMap<CueSource, Cue>,
    proposals: Vec<AdaptationProposal>,
    last_proposal_t: Option<f64>,
    last_review_t: Option<f64>,
    next_id: u64,
    index_misses: usize,
    events: Vec<InterpretEvent>,
}

impl Interpreter {
    pub fn new(
        config: InterpreterConfig,
        table: EscalationIndexTable,
        context: ContextState,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            table,
            context,
            cues: BTreeMap::new(),
            proposals: Vec::new(),
            last_proposal_t: None,
            last_review_t: None,
            next_id: 1,
            index_misses: 0,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &InterpreterConfig {
        &self.config
    }

    pub fn context(&self) -> &ContextState {
        &self.context
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn proposals(&self) -> &[AdaptationProposal] {
        &self.proposals
    }

    pub fn proposal(&self, id: &str) -> Option<&AdaptationProposal> {
        self.proposals.iter().find(|p| p.id == id)
    }

    /// Lookups that fell back to the neutral index.
    pub fn index_misses(&self) -> usize {
        self.index_misses
    }

    /// Removes and returns the events produced since the last call.
    pub fn take_events(&mut self) -> Vec<InterpretEvent> {
        core::mem::take(&mut self.events)
    }

    /// Stores the latest cue per source; older cues never replace newer ones.
    pub fn observe(&mut self, cue: Cue) -> Result<()> {
        cue.validate()?;
        match self.cues.get(&cue.source) {
            Some(prev) if prev.t > cue.t => {}
            _ => {
                self.cues.insert(cue.source, cue);
            }
        }
        Ok(())
    }

    /// Gesture cue from the escalation index of `gesture_id` in the current
    /// context. A missing index counts as a miss and yields the neutral value.
    pub fn gesture_cue(&mut self, t: f64, gesture_id: &str, reliability: f64) -> Result<Cue> {
        let hit = self.table.lookup(gesture_id, &self.context)?;
        if !hit.found {
            self.index_misses += 1;
        }
        Cue::new(
            CueSource::Gesture,
            t,
            self.config.encodings.gesture(hit.index),
            reliability,
            format!("gesture {gesture_id} (index {:+.2})", hit.index),
        )
    }

    pub fn set_mode(&mut self, mode: Mode, t: f64) {
        let from = self.config.mode;
        self.config.mode = mode;
        self.events.push(InterpretEvent::ModeChanged { t, from, to: mode });
    }

    pub fn set_weight(&mut self, source: CueSource, weight: f64, t: f64) -> Result<()> {
        self.config.weights.set(source, weight)?;
        self.events
            .push(InterpretEvent::WeightChanged { t, source, weight });
        Ok(())
    }

    pub fn set_context(&mut self, context: ContextState, t: f64) -> Result<()> {
        if context.scenario_id.is_empty() {
            return Err(invalid("context needs a scenario id"));
        }
        self.context = context;
        self.events.push(InterpretEvent::ContextChanged {
            t,
            context: self.context.clone(),
        });
        Ok(())
    }

    pub fn set_flag(&mut self, key: &str, value: FlagValue, t: f64) -> Result<()> {
        let mut ctx = self.context.clone();
        ctx.flags.insert(key.into(), value);
        self.set_context(ctx, t)
    }

    /// Marks pending proposals older than the expiry horizon as expired.
    pub fn expire(&mut self, t: f64) {
        for p in &mut self.proposals {
            if p.status == ProposalStatus::Pending && t - p.t > self.config.expiry_s {
                p.status = ProposalStatus::Expired;
                self.events.push(InterpretEvent::Expired { id: p.id.clone(), t });
            }
        }
    }

    /// Fuses the fresh cues at time `t` and applies the rules. Returns `None`
    /// when no cue currently contributes.
    pub fn evaluate(&mut self, t: f64) -> Result<Option<FusedSnapshot>> {
        if !t.is_finite() {
            return Err(Error::NonFinite);
        }
        self.expire(t);
        let fresh: Vec<Cue> = self
            .cues
            .values()
            .filter(|c| c.t <= t && t - c.t <= self.config.cue_max_age_s)
            .cloned()
            .collect();
        let snapshot = match fuse_cues(t, &fresh, &self.config.weights) {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        self.apply_rules(&snapshot);
        Ok(Some(snapshot))
    }

    fn apply_rules(&mut self, s: &FusedSnapshot) {
        let Some(rule) = self.config.rules.matching(s.risk_score, &self.context).cloned() else {
            return;
        };
        let rationale = rationale(s, &rule, &self.config.weights);
        if s.uncertain {
            if self.config.cooldown.allows(self.last_review_t, s.t) {
                self.last_review_t = Some(s.t);
                self.events.push(InterpretEvent::Review(ReviewItem {
                    t: s.t,
                    rule: rule.name,
                    risk_score: s.risk_score,
                    rationale,
                }));
            }
            return;
        }
        if !self.config.cooldown.allows(self.last_proposal_t, s.t) {
            return;
        }
        self.last_proposal_t = Some(s.t);
        let id = format!("p{:05}", self.next_id);
        self.next_id += 1;
        let auto = self.config.mode == Mode::Auto;
        let proposal = AdaptationProposal {
            id: id.clone(),
            t: s.t,
            rule: rule.name,
            risk_score: s.risk_score,
            actions: rule.actions,
            rationale,
            status: if auto {
                ProposalStatus::AutoApplied
            } else {
                ProposalStatus::Pending
            },
        };
        self.events.push(InterpretEvent::Proposal(proposal.clone()));
        if auto {
            self.events.push(InterpretEvent::Decision(DecisionRecord {
                proposal_id: id,
                t: s.t,
                actor: AUTO_ACTOR.to_string(),
                decision: Decision::Approve,
                emitted_actions: proposal.actions.clone(),
            }));
        }
        self.proposals.push(proposal);
    }

    /// Applies a human decision to a pending proposal and returns the record
    /// carrying the actions to emit.
    pub fn record_decision(
        &mut self,
        proposal_id: &str,
        decision: Decision,
        actor: &str,
        t: f64,
    ) -> Result<DecisionRecord> {
        if actor.is_empty() {
            return Err(invalid("decision needs an actor"));
        }
        if let Decision::Override { actions } = &decision {
            ActionSpec::validate_all(actions)?;
        }
        self.expire(t);
        let p = self
            .proposals
            .iter_mut()
            .find(|p| p.id == proposal_id)
            .ok_or_else(|| Error::UnknownProposal(proposal_id.into()))?;
        if p.status != ProposalStatus::Pending {
            return Err(Error::AlreadyDecided(proposal_id.into()));
        }
        let emitted_actions = match &decision {
            Decision::Approve => p.actions.clone(),
            Decision::Reject => Vec::new(),
            Decision::Override { actions } => actions.clone(),
        };
        p.status = match decision {
            Decision::Reject => ProposalStatus::Rejected,
            _ => ProposalStatus::Approved,
        };
        let record = DecisionRecord {
            proposal_id: proposal_id.into(),
            t,
            actor: actor.into(),
            decision,
            emitted_actions,
        };
        self.events.push(InterpretEvent::Decision(record.clone()));
        Ok(record)
    }
}

/// Rule, score and the contributing cues ordered by their share of the score.
fn rationale(s: &FusedSnapshot, rule: &Rule, weights: &ModalityWeights) -> String {
    let mut parts: Vec<(f64, &Cue)> = s
        .cues
        .iter()
        .map(|c| (weights.get(c.source) * c.reliability * c.value, c))
        .collect();
    parts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.source.cmp(&b.1.source)));
    let cues: Vec<String> = parts
        .iter()
        .map(|(_, c)| format!("{}: {} (c={:.2}, r={:.2})", c.source.name(), c.label, c.value, c.reliability))
        .collect();
    format!(
        "risk {:.2} reached `{}` threshold {:.2}; {}",
        s.risk_score,
        rule.name,
        rule.threshold,
        cues.join("; ")
    )
}
