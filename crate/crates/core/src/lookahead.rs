//! The reject-all-L counterfactual: what the idle count would do if, from the
//! decision instant on, every low-type job were turned away and every
//! high-type job admitted while a server is free.
//!
//! The walk reads the same future the live system will see: pending
//! completions, the pending high-type arrival, and the high-type arrival and
//! service variates from the live cursors onward. Low-type arrivals never move
//! the counterfactual idle count, so they are not read at all.

use std::borrow::Cow;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Completion, StateView};
use crate::model::{JobClass, ModelParams};
use crate::policy::Decision;
use crate::samplepath::{SamplePath, StreamId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LookaheadError {
    #[error("counterfactual race from idle={idle} between {lower} and {upper} exceeded {cap} transitions")]
    TransitionCapExceeded { idle: usize, lower: usize, upper: usize, cap: u64 },
    #[error("invalid race levels: lower={lower}, upper={upper}")]
    BadLevels { lower: usize, upper: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    HitLower,
    HitUpper,
    WindowExpired,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaceOutcome {
    pub verdict: Verdict,
    /// Hours after the start of the counterfactual.
    pub hit_time: f64,
    pub transitions: u64,
}

/// Read-access accounting for counterfactual walks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LookaheadTrace {
    pub queries: u64,
    pub transitions: u64,
    /// Largest number of high-type arrival variates read past the live cursor.
    pub arrival_reads_ahead: usize,
    /// Largest number of high-type service variates read past the live cursor.
    pub service_reads_ahead: usize,
    /// Largest offset from the decision instant of any event the walk applied.
    pub latest_event_offset: f64,
}

impl LookaheadTrace {
    pub fn merge(&mut self, other: &LookaheadTrace) {
        self.queries += other.queries;
        self.transitions += other.transitions;
        self.arrival_reads_ahead = self.arrival_reads_ahead.max(other.arrival_reads_ahead);
        self.service_reads_ahead = self.service_reads_ahead.max(other.service_reads_ahead);
        self.latest_event_offset = self.latest_event_offset.max(other.latest_event_offset);
    }
}

/// Starting point of a counterfactual walk. Building one never touches the
/// live state: completions are borrowed immutably and cursors are copies.
#[derive(Clone, Debug)]
pub struct CounterfactualState<'a> {
    pub start_time: f64,
    pub idle: usize,
    /// Pending completions, sorted by descending time.
    completions: Cow<'a, [Completion]>,
    pub next_high_arrival: f64,
    /// Index of the high-type arrival variate after `next_high_arrival`.
    pub arrival_cursor: usize,
    /// Index of the next unused high-type service variate.
    pub service_cursor: usize,
    pub path: &'a SamplePath,
    pub params: ModelParams,
}

impl<'a> CounterfactualState<'a> {
    /// The counterfactual at a decision instant. Any low-type job being
    /// decided is not part of the view's occupancy, so it is treated as rejected.
    pub fn from_view(view: &StateView<'a>) -> Self {
        Self {
            start_time: view.now,
            idle: view.idle,
            completions: Cow::Borrowed(view.in_service),
            next_high_arrival: view.next_high_arrival,
            arrival_cursor: view.cursor.position(StreamId::ArrivalHigh),
            service_cursor: view.cursor.position(StreamId::ServiceHigh),
            path: view.path,
            params: *view.params,
        }
    }

    /// A counterfactual from explicit ingredients; `completion_times` may be in
    /// any order.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        params: ModelParams,
        path: &'a SamplePath,
        start_time: f64,
        idle: usize,
        completion_times: &[f64],
        next_high_arrival: f64,
        arrival_cursor: usize,
        service_cursor: usize,
    ) -> Self {
        let mut completions: Vec<Completion> =
            completion_times.iter().map(|&time| Completion { time, class: JobClass::High }).collect();
        completions.sort_by(|a, b| b.time.total_cmp(&a.time));
        Self {
            start_time,
            idle,
            completions: Cow::Owned(completions),
            next_high_arrival,
            arrival_cursor,
            service_cursor,
            path,
            params,
        }
    }

    pub fn completions(&self) -> &[Completion] {
        &self.completions
    }
}

#[derive(Clone, Copy)]
struct Time(f64);
impl PartialEq for Time {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for Time {}
impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Time {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Walks the counterfactual until the idle count equals `lower` or `upper`, or
/// until the next event falls after `horizon` hours.
fn walk(
    cf: &CounterfactualState<'_>,
    lower: usize,
    upper: usize,
    horizon: f64,
    cap: u64,
    trace: &mut LookaheadTrace,
) -> Result<RaceOutcome, LookaheadError> {
    trace.queries += 1;
    let done = |verdict, hit_time, transitions| RaceOutcome { verdict, hit_time, transitions };
    let mut idle = cf.idle;
    if idle <= lower {
        return Ok(done(Verdict::HitLower, 0.0, 0));
    }
    if idle >= upper {
        return Ok(done(Verdict::HitUpper, 0.0, 0));
    }
    let arrival_rate = cf.params.arrival_rate(JobClass::High);
    let mu = cf.params.mu();
    let live = cf.completions();
    let mut live_left = live.len();
    let mut extra: BinaryHeap<Reverse<Time>> = BinaryHeap::new();
    let mut next_h = cf.next_high_arrival;
    let mut ah = cf.arrival_cursor;
    let mut sh = cf.service_cursor;
    let mut transitions = 0u64;
    let end = cf.start_time + horizon;

    let outcome = loop {
        let live_next = if live_left > 0 { live[live_left - 1].time } else { f64::INFINITY };
        let extra_next = extra.peek().map_or(f64::INFINITY, |Reverse(t)| t.0);
        let departure = live_next.min(extra_next);
        let t = next_h.min(departure);
        if t > end {
            break done(Verdict::WindowExpired, horizon, transitions);
        }
        transitions += 1;
        if transitions > cap {
            return Err(LookaheadError::TransitionCapExceeded { idle: cf.idle, lower, upper, cap });
        }
        if next_h <= departure {
            if idle > 0 {
                idle -= 1;
                let service = cf.path.value_at(StreamId::ServiceHigh, sh) / mu;
                sh += 1;
                extra.push(Reverse(Time(t + service)));
            }
            next_h = t + cf.path.value_at(StreamId::ArrivalHigh, ah) / arrival_rate;
            ah += 1;
        } else {
            if live_next <= extra_next {
                live_left -= 1;
            } else {
                extra.pop();
            }
            idle += 1;
        }
        let offset = t - cf.start_time;
        trace.latest_event_offset = trace.latest_event_offset.max(offset);
        if idle == lower {
            break done(Verdict::HitLower, offset, transitions);
        }
        if idle == upper {
            break done(Verdict::HitUpper, offset, transitions);
        }
    };
    trace.transitions += outcome.transitions;
    trace.arrival_reads_ahead = trace.arrival_reads_ahead.max(ah - cf.arrival_cursor);
    trace.service_reads_ahead = trace.service_reads_ahead.max(sh - cf.service_cursor);
    Ok(outcome)
}

/// Which of `lower` and `upper` the counterfactual idle count reaches first.
pub fn race_to_levels(
    cf: &CounterfactualState<'_>,
    lower: usize,
    upper: usize,
    max_transitions: u64,
) -> Result<RaceOutcome, LookaheadError> {
    race_to_levels_traced(cf, lower, upper, max_transitions, &mut LookaheadTrace::default())
}

pub fn race_to_levels_traced(
    cf: &CounterfactualState<'_>,
    lower: usize,
    upper: usize,
    max_transitions: u64,
    trace: &mut LookaheadTrace,
) -> Result<RaceOutcome, LookaheadError> {
    if lower >= upper {
        return Err(LookaheadError::BadLevels { lower, upper });
    }
    walk(cf, lower, upper, f64::INFINITY, max_transitions, trace)
}

/// True iff the counterfactual idle count stays at 2 or above throughout
/// `[start, start + w]`, i.e. `w < min(tau_0, tau_1)`.
pub fn window_check(cf: &CounterfactualState<'_>, w: f64) -> bool {
    window_check_traced(cf, w, &mut LookaheadTrace::default())
}

pub fn window_check_traced(cf: &CounterfactualState<'_>, w: f64, trace: &mut LookaheadTrace) -> bool {
    // The horizon bounds the walk; the cap is only a backstop.
    match walk(cf, 1, usize::MAX, w, u64::MAX, trace) {
        Ok(o) => o.verdict == Verdict::WindowExpired,
        Err(_) => unreachable!("window walk has no transition cap"),
    }
}

/// Offline rule: admit H whenever a server is free; admit L iff rejecting it
/// (and every later L) would bring the idle count to `floor(sqrt N)` before 1.
pub fn pfi_decide(
    view: &StateView<'_>,
    class: JobClass,
    trace: &mut LookaheadTrace,
) -> Result<Decision, LookaheadError> {
    let params = view.params;
    match class {
        JobClass::High => Ok(Decision::from_bool(view.idle > 0)),
        JobClass::Low => {
            let upper = params.sqrt_level();
            if view.idle <= 1 {
                return Ok(Decision::Reject);
            }
            if view.idle >= upper {
                return Ok(Decision::Accept);
            }
            let cf = CounterfactualState::from_view(view);
            let out = race_to_levels_traced(&cf, 1, upper, params.default_transition_cap(), trace)?;
            Ok(Decision::from_bool(out.verdict == Verdict::HitUpper))
        }
    }
}

/// Window rule: admit L iff the counterfactual idle count avoids {0, 1} for
/// the next `w` hours.
pub fn sss_decide(view: &StateView<'_>, class: JobClass, w: f64, trace: &mut LookaheadTrace) -> Decision {
    match class {
        JobClass::High => Decision::from_bool(view.idle > 0),
        JobClass::Low => {
            if view.idle <= 1 {
                return Decision::Reject;
            }
            let cf = CounterfactualState::from_view(view);
            Decision::from_bool(window_check_traced(&cf, w, trace))
        }
    }
}
