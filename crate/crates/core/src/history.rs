//! Memory of the realized idle-server process needed to recognise regeneration
//! instants: recent low-type acceptance/rejection times and the last visits to
//! a handful of tracked idle levels.

use serde::{Deserialize, Serialize};

/// Event indicators evaluated immediately before an action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryFlags {
    /// A low-type job was rejected since the idle process last equaled 1.
    pub u: bool,
    /// The last accepted low-type job was admitted since the last visit to
    /// `floor(sqrt N)`, and the process has not equaled `floor(sqrt N) - 1`
    /// while that job was in service.
    pub p: bool,
    /// The last accepted low-type job is still in service.
    pub w: bool,
    /// A low-type job was accepted within the lookahead window.
    pub p_sss: bool,
}

const ZERO: usize = 0;
const ONE: usize = 1;
const UPPER_MINUS_ONE: usize = 2;
const UPPER: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryTracker {
    levels: [usize; 4],
    last_hit: [Option<f64>; 4],
    idle: usize,
    last_l_reject: Option<f64>,
    last_l_accept: Option<f64>,
    last_l_service: Option<f64>,
    first_l_reject_after_level1: Option<f64>,
    visited_upper_since_l: bool,
    hit_upper_minus_one_during_l: bool,
}

impl HistoryTracker {
    /// Tracks levels `{0, 1, upper - 1, upper}` starting from `idle` at time 0.
    pub fn new(upper: usize, idle: usize) -> Self {
        let levels = [0, 1, upper.saturating_sub(1), upper];
        let last_hit = levels.map(|l| (l == idle).then_some(0.0));
        Self {
            levels,
            last_hit,
            idle,
            last_l_reject: None,
            last_l_accept: None,
            last_l_service: None,
            first_l_reject_after_level1: None,
            visited_upper_since_l: false,
            hit_upper_minus_one_during_l: false,
        }
    }

    pub fn tracked_levels(&self) -> [usize; 4] {
        self.levels
    }

    /// Most recent time at or before `now` at which the idle process equaled
    /// `level`; `now` itself if it currently does. `None` for untracked levels
    /// or levels never visited.
    pub fn last_hit(&self, level: usize, now: f64) -> Option<f64> {
        if level == self.idle {
            return Some(now);
        }
        self.levels.iter().position(|&l| l == level).and_then(|i| self.last_hit[i])
    }

    pub fn last_l_reject(&self) -> Option<f64> {
        self.last_l_reject
    }
    pub fn last_l_accept(&self) -> Option<f64> {
        self.last_l_accept
    }
    pub fn last_l_service(&self) -> Option<f64> {
        self.last_l_service
    }
    pub fn first_l_reject_after_level1(&self) -> Option<f64> {
        self.first_l_reject_after_level1
    }

    /// Completion time of the last accepted low-type job.
    pub fn last_l_completion(&self) -> Option<f64> {
        Some(self.last_l_accept? + self.last_l_service?)
    }

    /// Records the idle count after a change at time `now`.
    pub fn on_idle_change(&mut self, now: f64, idle: usize) {
        if idle == self.idle {
            return;
        }
        // The level being left was occupied up to `now`.
        for (i, &l) in self.levels.iter().enumerate() {
            if l == self.idle || l == idle {
                self.last_hit[i] = Some(now);
            }
        }
        self.idle = idle;
        if idle == self.levels[ONE] {
            self.first_l_reject_after_level1 = None;
        }
        if idle == self.levels[UPPER] {
            self.visited_upper_since_l = true;
        }
        if idle == self.levels[UPPER_MINUS_ONE] {
            if let Some(done) = self.last_l_completion() {
                if now < done {
                    self.hit_upper_minus_one_during_l = true;
                }
            }
        }
    }

    /// A low-type job was admitted at `now` with service duration `service`;
    /// `idle` is the count after admission.
    pub fn on_l_accept(&mut self, now: f64, service: f64, idle: usize) {
        self.last_l_accept = Some(now);
        self.last_l_service = Some(service);
        self.visited_upper_since_l = idle == self.levels[UPPER];
        self.hit_upper_minus_one_during_l = idle == self.levels[UPPER_MINUS_ONE];
        self.on_idle_change(now, idle);
    }

    pub fn on_l_reject(&mut self, now: f64) {
        self.last_l_reject = Some(now);
        if self.idle != self.levels[ONE] && self.first_l_reject_after_level1.is_none() {
            self.first_l_reject_after_level1 = Some(now);
        }
    }

    pub fn u(&self, now: f64) -> bool {
        match (self.last_l_reject, self.last_hit(self.levels[ONE], now)) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(r), Some(h)) => r > h,
        }
    }

    pub fn p(&self) -> bool {
        self.last_l_accept.is_some() && !self.visited_upper_since_l && !self.hit_upper_minus_one_during_l
    }

    pub fn w(&self, now: f64) -> bool {
        self.last_l_completion().is_some_and(|c| c > now)
    }

    pub fn p_sss(&self, now: f64, window: f64) -> bool {
        self.last_l_accept.is_some_and(|a| now - a < window)
    }

    pub fn flags(&self, now: f64, window: f64) -> HistoryFlags {
        HistoryFlags { u: self.u(now), p: self.p(), w: self.w(now), p_sss: self.p_sss(now, window) }
    }

    pub fn last_hit_zero(&self, now: f64) -> Option<f64> {
        self.last_hit(self.levels[ZERO], now)
    }
}
