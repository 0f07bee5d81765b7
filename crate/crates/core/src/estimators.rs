//! From trajectories to gap estimates: regeneration epochs, renewal-reward
//! ratio estimators, batch means, and the regret decomposition table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::fluid_reward;
use crate::engine::Action;
use crate::model::{JobClass, ModelParams};
use crate::policy::PolicyKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("need at least {needed} epochs, have {have}")]
    TooFewEpochs { have: usize, needed: usize },
    #[error("need at least 10 batches, asked for {0}")]
    TooFewBatches(usize),
    #[error("series of {have} slabs is too short for {batches} batches")]
    HorizonTooShort { have: usize, batches: usize },
}

/// Which regeneration condition delimits epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochRule {
    /// One idle server, no pending full-utilization promise, and a weak
    /// promise of future idleness from a low-type job still in service.
    Pfi,
    /// No idle server.
    ZeroIdle,
}

impl EpochRule {
    pub fn for_policy(policy: &PolicyKind) -> Self {
        match policy {
            PolicyKind::Pfi => EpochRule::Pfi,
            _ => EpochRule::ZeroIdle,
        }
    }

    /// Whether an epoch begins immediately before `action`.
    pub fn starts_before(self, action: &Action) -> bool {
        self.starts_at(action.idle_before, &action.flags)
    }

    pub fn starts_at(self, idle: usize, flags: &crate::history::HistoryFlags) -> bool {
        match self {
            EpochRule::Pfi => idle == 1 && !flags.u && flags.p && flags.w,
            EpochRule::ZeroIdle => idle == 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub start: f64,
    pub end: f64,
    /// Server-hours of idleness over `[start, end)`.
    pub idleness_integral: f64,
    pub h_rejections: u64,
    pub l_acceptances: u64,
    pub action_count: u64,
}

impl EpochRecord {
    fn open(start: f64) -> Self {
        Self { start, end: start, idleness_integral: 0.0, h_rejections: 0, l_acceptances: 0, action_count: 0 }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Streaming epoch segmentation. The trailing, unfinished epoch is dropped.
#[derive(Clone, Debug)]
pub struct EpochDetector {
    rule: EpochRule,
    last_time: f64,
    open: Option<EpochRecord>,
    done: Vec<EpochRecord>,
}

impl EpochDetector {
    pub fn new(rule: EpochRule) -> Self {
        Self { rule, last_time: 0.0, open: None, done: Vec::new() }
    }

    pub fn observe(&mut self, action: &Action) {
        if let Some(cur) = self.open.as_mut() {
            cur.idleness_integral += action.idle_before as f64 * (action.time - self.last_time);
        }
        self.last_time = action.time;
        if self.rule.starts_before(action) {
            if let Some(mut cur) = self.open.take() {
                cur.end = action.time;
                // zero-length epochs can only come from tied event times
                if cur.end > cur.start {
                    self.done.push(cur);
                } else {
                    self.open = Some(cur);
                }
            }
            if self.open.is_none() {
                self.open = Some(EpochRecord::open(action.time));
            }
        }
        if let Some(cur) = self.open.as_mut() {
            cur.action_count += 1;
            if action.is_rejection_of(JobClass::High) {
                cur.h_rejections += 1;
            }
            if action.is_acceptance_of(JobClass::Low) {
                cur.l_acceptances += 1;
            }
        }
    }

    pub fn completed(&self) -> &[EpochRecord] {
        &self.done
    }

    pub fn finish(self) -> Vec<EpochRecord> {
        self.done
    }
}

/// Epochs of a recorded action sequence under `rule`.
pub fn detect_epochs(actions: &[Action], rule: EpochRule) -> Vec<EpochRecord> {
    let mut d = EpochDetector::new(rule);
    actions.iter().for_each(|a| d.observe(a));
    d.finish()
}

pub fn detect_pfi_epochs(actions: &[Action]) -> Vec<EpochRecord> {
    detect_epochs(actions, EpochRule::Pfi)
}

pub fn detect_sss_epochs(actions: &[Action]) -> Vec<EpochRecord> {
    detect_epochs(actions, EpochRule::ZeroIdle)
}

/// Per-slab totals over equal-width time slabs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSeries {
    pub width: f64,
    pub reward: Vec<f64>,
    pub idleness: Vec<f64>,
    pub h_rejections: Vec<f64>,
}

impl SlabSeries {
    pub fn new(width: f64, slabs: usize) -> Self {
        Self { width, reward: vec![0.0; slabs], idleness: vec![0.0; slabs], h_rejections: vec![0.0; slabs] }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    fn slab_of(&self, t: f64) -> usize {
        ((t / self.width) as usize).min(self.len().saturating_sub(1))
    }

    pub fn add_reward(&mut self, t: f64, r: f64) {
        let i = self.slab_of(t);
        self.reward[i] += r;
    }

    pub fn add_high_rejection(&mut self, t: f64) {
        let i = self.slab_of(t);
        self.h_rejections[i] += 1.0;
    }

    /// Adds `idle * (t1 - t0)`, split across slab boundaries.
    pub fn accrue_idle(&mut self, t0: f64, t1: f64, idle: usize) {
        if idle == 0 || t1 <= t0 {
            return;
        }
        let y = idle as f64;
        let mut a = t0;
        let mut i = self.slab_of(t0);
        while a < t1 {
            let slab_end = if i + 1 >= self.len() { f64::INFINITY } else { (i + 1) as f64 * self.width };
            let b = t1.min(slab_end);
            if b > a {
                self.idleness[i] += y * (b - a);
                a = b;
            }
            i += 1;
        }
    }

    /// Drops the slabs not fully covered by `[0, end]`.
    pub fn truncate(&mut self, end: f64) {
        let full = ((end / self.width) * (1.0 + 1e-12)).floor() as usize;
        let keep = full.min(self.len());
        self.reward.truncate(keep);
        self.idleness.truncate(keep);
        self.h_rejections.truncate(keep);
    }

    fn skip(&self, warmup: f64) -> usize {
        ((warmup / self.width) * (1.0 - 1e-12)).ceil() as usize
    }

    /// Per-slab reward rates after `warmup` hours.
    pub fn reward_rates(&self, warmup: f64) -> Vec<f64> {
        let s = self.skip(warmup).min(self.len());
        self.reward[s..].iter().map(|r| r / self.width).collect()
    }

    /// Per-slab `fluid - reward rate`, i.e. the instantaneous gap series.
    pub fn gap_rates(&self, warmup: f64, params: &ModelParams) -> Vec<f64> {
        let f = fluid_reward(params);
        self.reward_rates(warmup).into_iter().map(|r| f - r).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapMethod {
    Regenerative,
    BatchMeans,
    Exact,
}

impl GapMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GapMethod::Regenerative => "regenerative",
            GapMethod::BatchMeans => "batch-means",
            GapMethod::Exact => "exact",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub point: f64,
    pub std_error: f64,
    /// Epochs (regenerative) or batches (batch means) behind the estimate.
    pub samples: usize,
    pub method: GapMethod,
}

/// Ratio `sum(numerator) / sum(duration)` over epochs with a delta-method
/// standard error.
pub fn epoch_ratio(epochs: &[EpochRecord], numerator: impl Fn(&EpochRecord) -> f64) -> (f64, f64) {
    let n = epochs.len();
    let xs: Vec<f64> = epochs.iter().map(&numerator).collect();
    let ds: Vec<f64> = epochs.iter().map(EpochRecord::duration).collect();
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_d = ds.iter().sum::<f64>() / n as f64;
    let ratio = mean_x / mean_d;
    if n < 2 {
        return (ratio, f64::NAN);
    }
    let ss: f64 = xs.iter().zip(&ds).map(|(x, d)| (x - ratio * d).powi(2)).sum();
    let se = (ss / ((n - 1) as f64 * n as f64)).sqrt() / mean_d;
    (ratio, se)
}

/// Renewal-reward estimate of `fluid - reward`:
/// `r_L mu E[int Y] / E[T] + (r_H - r_L) E[H rejections] / E[T]`.
pub fn regenerative_gap(
    epochs: &[EpochRecord],
    params: &ModelParams,
    min_epochs: usize,
) -> Result<GapEstimate, EstimateError> {
    let needed = min_epochs.max(2);
    if epochs.len() < needed {
        return Err(EstimateError::TooFewEpochs { have: epochs.len(), needed });
    }
    let r = params.rates();
    let (point, std_error) = epoch_ratio(epochs, |e| {
        r.reward_l * r.mu * e.idleness_integral + (r.reward_h - r.reward_l) * e.h_rejections as f64
    });
    Ok(GapEstimate { point, std_error, samples: epochs.len(), method: GapMethod::Regenerative })
}

/// Mean idle servers per unit epoch time: `E[int Y] / E[T]`.
pub fn idleness_ratio(epochs: &[EpochRecord]) -> (f64, f64) {
    epoch_ratio(epochs, |e| e.idleness_integral)
}

/// High-type rejections per hour over epochs: `E[H rejections] / E[T]`.
pub fn rejection_ratio(epochs: &[EpochRecord]) -> (f64, f64) {
    epoch_ratio(epochs, |e| e.h_rejections as f64)
}

/// Batch means over an equally spaced series; leading slabs that do not fill
/// a whole batch are discarded.
pub fn batch_means(series: &[f64], n_batches: usize) -> Result<GapEstimate, EstimateError> {
    if n_batches < 10 {
        return Err(EstimateError::TooFewBatches(n_batches));
    }
    if series.len() < n_batches {
        return Err(EstimateError::HorizonTooShort { have: series.len(), batches: n_batches });
    }
    let size = series.len() / n_batches;
    let tail = &series[series.len() - size * n_batches..];
    let means: Vec<f64> = tail.chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(GapEstimate { point: mean, std_error: (var / k).sqrt(), samples: means.len(), method: GapMethod::BatchMeans })
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let denom: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let num: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / denom
}

/// A value with its standard error (zero for exact quantities).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }

    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    fn minus(self, other: Estimate) -> Estimate {
        Estimate { value: self.value - other.value, std_error: self.std_error.hypot(other.std_error) }
    }
}

/// Reward estimates feeding the decomposition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyEstimates {
    pub pfi: Option<Estimate>,
    pub sss: Option<Estimate>,
    /// Best trunk-reservation reward, exact.
    pub online: Option<Estimate>,
    pub best_theta: Option<usize>,
}

/// Fluid gap split into volatility and uncertainty components. The PFI reward
/// lower-bounds the offline optimum, so `vol_upper` bounds the volatility cost
/// from above; the best threshold lower-bounds the online optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretDecomposition {
    pub servers: usize,
    pub fluid: f64,
    pub pfi: Option<Estimate>,
    pub sss: Option<Estimate>,
    pub online: Option<Estimate>,
    pub best_theta: Option<usize>,
    /// fluid - PFI.
    pub vol_upper: Option<Estimate>,
    /// PFI - best threshold.
    pub uncertainty: Option<Estimate>,
    /// SSS - best threshold.
    pub short_upper: Option<Estimate>,
    pub notes: Vec<String>,
}

impl RegretDecomposition {
    /// Components more than `k` standard errors below zero.
    pub fn violations(&self, k: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, e: Option<Estimate>| {
            if let Some(e) = e {
                if e.value < -k * e.std_error {
                    out.push(format!("{name} = {:.6} < -{k} x {:.6}", e.value, e.std_error));
                }
            }
        };
        check("fluid - pfi", self.vol_upper);
        check("pfi - online", self.uncertainty);
        check("sss - online", self.short_upper);
        out
    }
}

pub fn decomposition_report(params: &ModelParams, est: &PolicyEstimates) -> RegretDecomposition {
    let fluid = Estimate::exact(fluid_reward(params));
    let vol_upper = est.pfi.map(|p| fluid.minus(p));
    let uncertainty = est.pfi.zip(est.online).map(|(p, o)| p.minus(o));
    let short_upper = est.sss.zip(est.online).map(|(s, o)| s.minus(o));
    let notes = vec![
        "PFI reward is a lower bound on the offline optimum; vol_upper >= volatility cost".into(),
        "best threshold reward is a lower bound on the online optimum".into(),
    ];
    RegretDecomposition {
        servers: params.servers(),
        fluid: fluid.value,
        pfi: est.pfi,
        sss: est.sss,
        online: est.online,
        best_theta: est.best_theta,
        vol_upper,
        uncertainty,
        short_upper,
        notes,
    }
}
