//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use cuelayer::analysis::AnalysisConfig;
use cuelayer::sim::SimulatorConfig;

/// A 60 s session: calm, escalation from 20 s, recovery from 50 s.
pub fn short_session() -> SimulatorConfig {
    let mut cfg = SimulatorConfig::default();
    cfg.duration_s = 60.0;
    cfg.phases[1].start_s = 20.0;
    cfg.phases[2].start_s = 50.0;
    cfg
}

/// Analysis settings scaled to [`short_session`].
pub fn short_analysis() -> AnalysisConfig {
    let mut a = AnalysisConfig::default();
    a.autonomic.baseline_s = 20.0;
    a.emotion.baseline_s = 15.0;
    a.gesture.per_class = 12;
    a.gesture.forest.n_trees = 30;
    a.emotion.per_class = 12;
    a
}
