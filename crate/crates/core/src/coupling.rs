//! Two policies driven by one sample path, restarted from a common state at
//! every epoch of the left policy, to measure how often their idle-server
//! processes separate.

use serde::{Deserialize, Serialize};

use crate::engine::{EngineError, RunConfig, SystemState};
use crate::estimators::EpochRule;
use crate::model::ModelParams;
use crate::policy::PolicyKind;
use crate::samplepath::SamplePath;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingStats {
    pub servers: usize,
    pub seed: u64,
    pub horizon: f64,
    pub epoch_rule: EpochRule,
    /// Completed epochs of the left policy.
    pub epochs: u64,
    /// Completed epochs in which the two idle processes separated.
    pub decoupled_epochs: u64,
    pub frequency: f64,
    /// Absolute time of the first separation, including the stretch before
    /// the first epoch.
    pub first_decoupling_time: Option<f64>,
    /// Separation time measured from its epoch's start, one per decoupled
    /// completed epoch.
    pub offsets: Vec<f64>,
}

/// Runs `left` over `[0, horizon]`. At time zero and at every left epoch
/// start the right system is reset to a copy of the left one; both then
/// process the same events until the idle counts differ.
pub fn coupled_run(
    params: ModelParams,
    left: &PolicyKind,
    right: &PolicyKind,
    config: &RunConfig,
    seed: u64,
) -> Result<CouplingStats, EngineError> {
    config.validate()?;
    left.validate(&params).map_err(EngineError::BadConfig)?;
    right.validate(&params).map_err(EngineError::BadConfig)?;
    let path = SamplePath::new(seed);
    let rule = EpochRule::for_policy(left);
    let window = left.window().unwrap_or(0.0);
    let mut state = SystemState::new(params, &path);
    let mut shadow = Some(state.clone());

    let mut epoch_start: Option<f64> = None;
    let mut epoch_decoupled = false;
    let mut epochs = 0u64;
    let mut decoupled_epochs = 0u64;
    let mut first_decoupling_time = None;
    let mut offsets = Vec::new();
    let mut pending_offset = None;

    while state.next_event_time() <= config.horizon {
        if config.max_events.is_some_and(|cap| state.events() >= cap) {
            break;
        }
        let (t, idle, flags) = state.upcoming(window);
        if rule.starts_at(idle, &flags) && epoch_start.is_none_or(|s| t > s) {
            if epoch_start.is_some() {
                epochs += 1;
                if epoch_decoupled {
                    decoupled_epochs += 1;
                    offsets.extend(pending_offset.take());
                }
            }
            epoch_start = Some(t);
            epoch_decoupled = false;
            pending_offset = None;
            shadow = Some(state.clone());
        }
        let a = state.step(left)?;
        if let Some(other) = shadow.as_mut() {
            let b = other.step(right)?;
            debug_assert_eq!(a.time, b.time);
            if a.idle_after != b.idle_after {
                shadow = None;
                first_decoupling_time.get_or_insert(a.time);
                if let Some(s) = epoch_start {
                    epoch_decoupled = true;
                    pending_offset = Some(a.time - s);
                }
            }
        }
    }
    let frequency = if epochs > 0 { decoupled_epochs as f64 / epochs as f64 } else { f64::NAN };
    Ok(CouplingStats {
        servers: params.servers(),
        seed,
        horizon: config.horizon,
        epoch_rule: rule,
        epochs,
        decoupled_epochs,
        frequency,
        first_decoupling_time,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ActionKind;
    use crate::model::JobClass;
    use crate::policy::Decision;

    #[test]
    fn identical_policies_never_separate() {
        let p = ModelParams::reference(20);
        let cfg = RunConfig::new(50.0);
        for policy in [PolicyKind::AcceptAll, PolicyKind::Threshold(3), PolicyKind::Pfi] {
            let s = coupled_run(p, &policy, &policy, &cfg, 4).unwrap();
            assert!(s.epochs > 0, "{policy}");
            assert_eq!(s.decoupled_epochs, 0);
            assert_eq!(s.first_decoupling_time, None);
        }
    }

    #[test]
    fn accept_all_against_reject_all_low() {
        let p = ModelParams::reference(12);
        let cfg = RunConfig::new(30.0);
        let s = coupled_run(p, &PolicyKind::AcceptAll, &PolicyKind::Threshold(12), &cfg, 9).unwrap();
        let path = SamplePath::new(9);
        let mut st = SystemState::new(p, &path);
        let first = loop {
            let a = st.step(&PolicyKind::AcceptAll).unwrap();
            if a.kind == ActionKind::Arrival(JobClass::Low) && a.decision == Some(Decision::Accept) {
                break a.time;
            }
        };
        assert_eq!(s.first_decoupling_time, Some(first));
        assert!(s.decoupled_epochs > 0);
    }
}
