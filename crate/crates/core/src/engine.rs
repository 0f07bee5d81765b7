//! Event-driven N-server loss system with two arrival classes.
//!
//! The state keeps absolute completion times sorted in descending order so the
//! next departure is `in_service.last()` and the lookahead oracle can walk the
//! live completions in ascending order without copying them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EpochDetector, EpochRecord, EpochRule, SlabSeries};
use crate::history::{HistoryFlags, HistoryTracker};
use crate::lookahead::{LookaheadError, LookaheadTrace};
use crate::model::{JobClass, ModelParams, ParamError};
use crate::policy::{Decision, PolicyKind};
use crate::samplepath::{Cursor, SamplePath, StreamId};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("policy admitted a {class:?} job at t={time} with no idle server")]
    AdmissionIntoFullSystem { class: JobClass, time: f64 },
    #[error(transparent)]
    Lookahead(#[from] LookaheadError),
    #[error("horizon must be finite and positive, got {0}")]
    BadHorizon(f64),
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
}

/// A job in service and the absolute time it will finish.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub time: f64,
    pub class: JobClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Arrival(JobClass),
    Departure(JobClass),
}

/// One processed event, with the pre-action history flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub time: f64,
    pub kind: ActionKind,
    pub decision: Option<Decision>,
    pub idle_before: usize,
    pub idle_after: usize,
    pub flags: HistoryFlags,
    pub reward: f64,
}

impl Action {
    pub fn is_rejection_of(&self, class: JobClass) -> bool {
        self.kind == ActionKind::Arrival(class) && self.decision == Some(Decision::Reject)
    }

    pub fn is_acceptance_of(&self, class: JobClass) -> bool {
        self.kind == ActionKind::Arrival(class) && self.decision == Some(Decision::Accept)
    }

    /// Newline-delimited debug record: time, kind, class, decision, idle count.
    pub fn log_record(&self) -> serde_json::Value {
        let (kind, class) = match self.kind {
            ActionKind::Arrival(c) => ("arrival", c),
            ActionKind::Departure(c) => ("departure", c),
        };
        serde_json::json!({
            "time": self.time,
            "kind": kind,
            "class": class.as_str(),
            "decision": self.decision.map(|d| d.as_str()),
            "idle": self.idle_after,
        })
    }
}

/// Read-only view of the live state handed to policies.
#[derive(Clone, Copy, Debug)]
pub struct StateView<'a> {
    pub params: &'a ModelParams,
    pub path: &'a SamplePath,
    pub now: f64,
    pub idle: usize,
    /// Jobs in service, sorted by descending completion time.
    pub in_service: &'a [Completion],
    pub next_high_arrival: f64,
    pub cursor: Cursor,
}

#[derive(Clone, Debug)]
pub struct SystemState<'p> {
    params: ModelParams,
    path: &'p SamplePath,
    now: f64,
    in_service: Vec<Completion>,
    idle: usize,
    next_arrival: [f64; 2],
    cursor: Cursor,
    tracker: HistoryTracker,
    accepted: [u64; 2],
    rejected: [u64; 2],
    completed: [u64; 2],
    reward: f64,
    idleness_integral: f64,
    busy_integral: f64,
    service_booked: f64,
    events: u64,
}

#[inline]
fn slot(class: JobClass) -> usize {
    match class {
        JobClass::High => 0,
        JobClass::Low => 1,
    }
}

impl<'p> SystemState<'p> {
    /// Empty system at time zero with the first arrival of each class scheduled.
    pub fn new(params: ModelParams, path: &'p SamplePath) -> Self {
        let mut cursor = Cursor::new();
        let first_h = cursor.draw_next(path, StreamId::ArrivalHigh) / params.arrival_rate(JobClass::High);
        let first_l = cursor.draw_next(path, StreamId::ArrivalLow) / params.arrival_rate(JobClass::Low);
        let n = params.servers();
        Self {
            params,
            path,
            now: 0.0,
            in_service: Vec::with_capacity(n),
            idle: n,
            next_arrival: [first_h, first_l],
            cursor,
            tracker: HistoryTracker::new(params.sqrt_level(), n),
            accepted: [0; 2],
            rejected: [0; 2],
            completed: [0; 2],
            reward: 0.0,
            idleness_integral: 0.0,
            busy_integral: 0.0,
            service_booked: 0.0,
            events: 0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn path(&self) -> &'p SamplePath {
        self.path
    }
    pub fn now(&self) -> f64 {
        self.now
    }
    pub fn idle(&self) -> usize {
        self.idle
    }
    pub fn in_service(&self) -> &[Completion] {
        &self.in_service
    }
    pub fn next_arrival(&self, class: JobClass) -> f64 {
        self.next_arrival[slot(class)]
    }
    pub fn cursor(&self) -> Cursor {
        self.cursor
    }
    pub fn tracker(&self) -> &HistoryTracker {
        &self.tracker
    }
    pub fn accepted(&self, class: JobClass) -> u64 {
        self.accepted[slot(class)]
    }
    pub fn rejected(&self, class: JobClass) -> u64 {
        self.rejected[slot(class)]
    }
    pub fn completed(&self, class: JobClass) -> u64 {
        self.completed[slot(class)]
    }
    pub fn in_service_of(&self, class: JobClass) -> usize {
        self.in_service.iter().filter(|c| c.class == class).count()
    }
    pub fn reward(&self) -> f64 {
        self.reward
    }
    /// Integral of the idle count over `[0, now]` (server-hours).
    pub fn idleness_integral(&self) -> f64 {
        self.idleness_integral
    }
    /// Integral of the busy count over `[0, now]` (server-hours).
    pub fn busy_integral(&self) -> f64 {
        self.busy_integral
    }
    /// Service effort delivered by `now`: full durations of completed jobs plus
    /// elapsed time of jobs still in service.
    pub fn delivered_service(&self) -> f64 {
        let remaining: f64 = self.in_service.iter().map(|c| c.time - self.now).sum();
        self.service_booked - remaining
    }
    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn view(&self) -> StateView<'_> {
        StateView {
            params: &self.params,
            path: self.path,
            now: self.now,
            idle: self.idle,
            in_service: &self.in_service,
            next_high_arrival: self.next_arrival[0],
            cursor: self.cursor,
        }
    }

    /// Time and kind of the next event; ties go H arrival, L arrival, departure.
    pub fn next_event(&self) -> (f64, ActionKind) {
        let [h, l] = self.next_arrival;
        let d = self.in_service.last();
        let mut best = (h, ActionKind::Arrival(JobClass::High));
        if l < best.0 {
            best = (l, ActionKind::Arrival(JobClass::Low));
        }
        if let Some(c) = d {
            if c.time < best.0 {
                best = (c.time, ActionKind::Departure(c.class));
            }
        }
        best
    }

    pub fn next_event_time(&self) -> f64 {
        self.next_event().0
    }

    /// Idle count and history flags as they will read immediately before the
    /// next action.
    pub fn upcoming(&self, window: f64) -> (f64, usize, HistoryFlags) {
        let t = self.next_event_time();
        (t, self.idle, self.tracker.flags(t, window))
    }

    /// Accrues idleness up to `t` without processing an event.
    pub fn advance_to(&mut self, t: f64) {
        debug_assert!(t >= self.now && t <= self.next_event_time());
        self.accrue(t);
    }

    fn accrue(&mut self, t: f64) {
        let dt = t - self.now;
        self.idleness_integral += self.idle as f64 * dt;
        self.busy_integral += (self.params.servers() - self.idle) as f64 * dt;
        self.now = t;
    }

    /// Processes the next event, consulting `policy` on arrivals.
    pub fn step(&mut self, policy: &PolicyKind) -> Result<Action, EngineError> {
        self.step_traced(policy, &mut LookaheadTrace::default())
    }

    pub fn step_traced(&mut self, policy: &PolicyKind, trace: &mut LookaheadTrace) -> Result<Action, EngineError> {
        let (t, kind) = self.next_event();
        self.accrue(t);
        self.events += 1;
        let flags = self.tracker.flags(t, policy.window().unwrap_or(0.0));
        let idle_before = self.idle;
        let mut decision = None;
        let mut reward = 0.0;
        match kind {
            ActionKind::Arrival(class) => {
                let (stream, rate) = match class {
                    JobClass::High => (StreamId::ArrivalHigh, self.params.arrival_rate(JobClass::High)),
                    JobClass::Low => (StreamId::ArrivalLow, self.params.arrival_rate(JobClass::Low)),
                };
                self.next_arrival[slot(class)] = t + self.cursor.draw_next(self.path, stream) / rate;
                let d = policy.decide_traced(class, &self.view(), trace)?;
                decision = Some(d);
                match d {
                    Decision::Accept => {
                        if self.idle == 0 {
                            return Err(EngineError::AdmissionIntoFullSystem { class, time: t });
                        }
                        reward = self.admit(class);
                    }
                    Decision::Reject => {
                        self.rejected[slot(class)] += 1;
                        if class == JobClass::Low {
                            self.tracker.on_l_reject(t);
                        }
                    }
                }
            }
            ActionKind::Departure(class) => {
                let done = self.in_service.pop().expect("departure implies a job in service");
                debug_assert_eq!(done.class, class);
                self.completed[slot(class)] += 1;
                self.idle += 1;
                self.tracker.on_idle_change(t, self.idle);
            }
        }
        Ok(Action { time: t, kind, decision, idle_before, idle_after: self.idle, flags, reward })
    }

    fn admit(&mut self, class: JobClass) -> f64 {
        let stream = match class {
            JobClass::High => StreamId::ServiceHigh,
            JobClass::Low => StreamId::ServiceLow,
        };
        let service = self.cursor.draw_next(self.path, stream) / self.params.mu();
        let done = Completion { time: self.now + service, class };
        let pos = self.in_service.partition_point(|c| c.time > done.time);
        self.in_service.insert(pos, done);
        self.idle -= 1;
        self.service_booked += service;
        self.accepted[slot(class)] += 1;
        let r = self.params.reward(class);
        self.reward += r;
        match class {
            JobClass::Low => self.tracker.on_l_accept(self.now, service, self.idle),
            JobClass::High => self.tracker.on_idle_change(self.now, self.idle),
        }
        r
    }
}

/// Controls a finite-horizon run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Simulated hours.
    pub horizon: f64,
    /// Fraction of the horizon excluded from the post-warm-up reward rate.
    pub warmup_fraction: f64,
    /// Number of equal-width time slabs recorded for batch means.
    pub slabs: usize,
    /// Optional cap on processed events; the run stops early when reached.
    pub max_events: Option<u64>,
}

impl RunConfig {
    pub fn new(horizon: f64) -> Self {
        Self { horizon, warmup_fraction: 0.05, slabs: 200, max_events: None }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(EngineError::BadHorizon(self.horizon));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(EngineError::BadConfig(format!("warmup fraction {} outside [0, 1)", self.warmup_fraction)));
        }
        if self.slabs == 0 {
            return Err(EngineError::BadConfig("need at least one slab".into()));
        }
        Ok(())
    }
}

/// Summary of one simulated trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub servers: usize,
    pub seed: u64,
    /// Simulated hours (shorter than requested only under an event budget).
    pub horizon: f64,
    pub warmup: f64,
    pub events: u64,
    pub reward_total: f64,
    pub reward_rate: f64,
    pub reward_rate_after_warmup: f64,
    /// Time-average number of idle servers.
    pub mean_idle: f64,
    pub accepted: [u64; 2],
    pub rejected: [u64; 2],
    pub completed: [u64; 2],
    pub in_service_at_end: [u64; 2],
    pub rejection_rate_high: f64,
    pub rejection_rate_low: f64,
    pub epoch_rule: EpochRule,
    pub epochs: Vec<EpochRecord>,
    pub series: SlabSeries,
    pub lookahead: LookaheadTrace,
}

/// Simulates `policy` on the world generated by `seed`.
pub fn run(
    params: ModelParams,
    policy: &PolicyKind,
    config: &RunConfig,
    seed: u64,
) -> Result<TrajectoryStats, EngineError> {
    run_observed(params, policy, config, seed, |_| {})
}

/// As [`run`], calling `observe` after every processed action.
pub fn run_observed(
    params: ModelParams,
    policy: &PolicyKind,
    config: &RunConfig,
    seed: u64,
    mut observe: impl FnMut(&Action),
) -> Result<TrajectoryStats, EngineError> {
    config.validate()?;
    policy.validate(&params).map_err(EngineError::BadConfig)?;
    let path = SamplePath::new(seed);
    let mut state = SystemState::new(params, &path);
    let rule = EpochRule::for_policy(policy);
    let mut detector = EpochDetector::new(rule);
    let mut series = SlabSeries::new(config.horizon / config.slabs as f64, config.slabs);
    let mut trace = LookaheadTrace::default();
    let warmup = config.warmup_fraction * config.horizon;
    let mut reward_before_warmup = 0.0;
    let mut end = config.horizon;

    while state.next_event_time() <= config.horizon {
        if config.max_events.is_some_and(|cap| state.events() >= cap) {
            end = state.now();
            break;
        }
        let before = state.now();
        let action = state.step_traced(policy, &mut trace)?;
        series.accrue_idle(before, action.time, action.idle_before);
        if action.reward > 0.0 {
            series.add_reward(action.time, action.reward);
            if action.time < warmup {
                reward_before_warmup += action.reward;
            }
        }
        if action.is_rejection_of(JobClass::High) {
            series.add_high_rejection(action.time);
        }
        detector.observe(&action);
        observe(&action);
    }
    let before = state.now();
    state.advance_to(end);
    series.accrue_idle(before, end, state.idle());
    series.truncate(end);

    let reward_total = state.reward();
    let warmup = warmup.min(end);
    let after = if end > warmup { (reward_total - reward_before_warmup) / (end - warmup) } else { f64::NAN };
    Ok(TrajectoryStats {
        servers: params.servers(),
        seed,
        horizon: end,
        warmup,
        events: state.events(),
        reward_total,
        reward_rate: reward_total / end,
        reward_rate_after_warmup: after,
        mean_idle: state.idleness_integral() / end,
        accepted: [state.accepted(JobClass::High), state.accepted(JobClass::Low)],
        rejected: [state.rejected(JobClass::High), state.rejected(JobClass::Low)],
        completed: [state.completed(JobClass::High), state.completed(JobClass::Low)],
        in_service_at_end: [state.in_service_of(JobClass::High) as u64, state.in_service_of(JobClass::Low) as u64],
        rejection_rate_high: state.rejected(JobClass::High) as f64 / end,
        rejection_rate_low: state.rejected(JobClass::Low) as f64 / end,
        epoch_rule: rule,
        epochs: detector.finish(),
        series,
        lookahead: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> ModelParams {
        ModelParams::reference(n)
    }

    #[test]
    fn fresh_state() {
        let path = SamplePath::new(5);
        let s = SystemState::new(params(10), &path);
        assert_eq!(s.idle(), 10);
        assert!(s.in_service().is_empty());
        let expected = path.value_at(StreamId::ArrivalHigh, 0) / (0.7 * 10.0);
        assert_eq!(s.next_arrival(JobClass::High), expected);
    }

    #[test]
    fn full_system_rejects_without_change() {
        let path = SamplePath::new(3);
        let mut s = SystemState::new(params(2), &path);
        let policy = PolicyKind::AcceptAll;
        let mut checked = 0;
        for _ in 0..10_000 {
            let (_, kind) = s.next_event();
            if s.idle() == 0 && kind == ActionKind::Arrival(JobClass::High) {
                let before = s.in_service().to_vec();
                let a = s.step(&policy).unwrap();
                assert_eq!(a.decision, Some(Decision::Reject));
                assert_eq!(s.in_service(), &before[..]);
                assert_eq!(s.idle(), 0);
                checked += 1;
            } else {
                s.step(&policy).unwrap();
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn accepted_high_job_uses_first_service_variate() {
        let path = SamplePath::new(8);
        let mut s = SystemState::new(params(2), &path);
        // advance until the first H arrival
        loop {
            let (_, kind) = s.next_event();
            let a = s.step(&PolicyKind::Threshold(2)).unwrap();
            if kind == ActionKind::Arrival(JobClass::High) {
                assert_eq!(a.decision, Some(Decision::Accept));
                assert_eq!(s.idle(), 1);
                let expect = a.time + path.value_at(StreamId::ServiceHigh, 0) / 1.0;
                assert_eq!(s.in_service()[0].time, expect);
                break;
            }
        }
    }

    #[test]
    fn illegal_admission_is_an_error() {
        let path = SamplePath::new(1);
        let mut s = SystemState::new(params(1), &path);
        let rogue = PolicyKind::AlwaysAccept;
        let mut saw_error = false;
        for _ in 0..100 {
            match s.step(&rogue) {
                Ok(_) => {}
                Err(EngineError::AdmissionIntoFullSystem { .. }) => {
                    saw_error = true;
                    break;
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(saw_error);
    }

    #[test]
    fn runs_are_replayable() {
        let cfg = RunConfig::new(200.0);
        let a = run(params(10), &PolicyKind::Pfi, &cfg, 77).unwrap();
        let b = run(params(10), &PolicyKind::Pfi, &cfg, 77).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn bad_horizon() {
        let cfg = RunConfig::new(0.0);
        assert!(matches!(run(params(10), &PolicyKind::AcceptAll, &cfg, 1), Err(EngineError::BadHorizon(_))));
    }

    #[test]
    fn event_budget_stops_early() {
        let mut cfg = RunConfig::new(1e6);
        cfg.max_events = Some(1000);
        let s = run(params(10), &PolicyKind::AcceptAll, &cfg, 4).unwrap();
        assert_eq!(s.events, 1000);
        assert!(s.horizon < 1e6);
    }
}
