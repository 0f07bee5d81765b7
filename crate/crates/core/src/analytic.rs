//! Exactly solvable quantities: the fluid reward, the sufficient lookahead
//! window, birth-death stationary laws, threshold-policy rewards, hitting
//! probabilities and finite-horizon absorption.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::model::{JobClass, ModelParams, Rates};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("birth-death chain is malformed: {0}")]
    BadChain(String),
    #[error("levels must satisfy lower <= start <= upper (got {lower} <= {start} <= {upper})")]
    BadLevels { lower: usize, start: usize, upper: usize },
    #[error("threshold {theta} exceeds server count {servers}")]
    BadThreshold { theta: usize, servers: usize },
    #[error("uniformization would need more than {limit} steps")]
    TooManySteps { limit: u64 },
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

/// Fluid-approximation reward `N r_H lambda_H + N r_L (mu - lambda_H)`.
pub fn fluid_reward(params: &ModelParams) -> f64 {
    let r = params.rates();
    let n = params.servers() as f64;
    n * r.reward_h * r.lambda_h + n * r.reward_l * (r.mu - r.lambda_h)
}

/// Constant `C` of the sufficient lookahead window `C log N / N`.
pub fn window_constant(rates: &Rates) -> f64 {
    let Rates { lambda_h: lh, lambda_l: ll, mu, .. } = *rates;
    let total = lh + ll + mu;
    8.0 * (7.0 * lh + mu) * (lh + mu) * total * total / (lh * (mu - lh).powi(2) * (lh + ll - mu).powi(2))
}

/// Lookahead window in hours: `c log N / N`, with `c` defaulting to the
/// sufficient-window constant.
pub fn sss_window(params: &ModelParams, c_override: Option<f64>) -> f64 {
    let n = params.servers() as f64;
    let c = c_override.unwrap_or_else(|| window_constant(&params.rates()));
    c * n.ln() / n
}

/// Birth-death chain on `0..=M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathSpec {
    birth: Vec<f64>,
    death: Vec<f64>,
}

impl BirthDeathSpec {
    pub fn new(birth: Vec<f64>, death: Vec<f64>) -> Result<Self, AnalyticError> {
        if birth.is_empty() || birth.len() != death.len() {
            return Err(AnalyticError::BadChain("rate vectors must be non-empty and equal length".into()));
        }
        if birth.iter().chain(&death).any(|r| !r.is_finite() || *r < 0.0) {
            return Err(AnalyticError::BadChain("rates must be finite and non-negative".into()));
        }
        if death[0] != 0.0 || *birth.last().unwrap() != 0.0 {
            return Err(AnalyticError::BadChain("death at 0 and birth at M must vanish".into()));
        }
        Ok(Self { birth, death })
    }

    pub fn max_state(&self) -> usize {
        self.birth.len() - 1
    }
    pub fn birth(&self) -> &[f64] {
        &self.birth
    }
    pub fn death(&self) -> &[f64] {
        &self.death
    }

    /// `(pi Q)_k` for a candidate distribution; zero under global balance.
    pub fn balance_residual(&self, pi: &[f64]) -> Vec<f64> {
        let m = self.max_state();
        (0..=m)
            .map(|k| {
                let mut flow = -pi[k] * (self.birth[k] + self.death[k]);
                if k > 0 {
                    flow += pi[k - 1] * self.birth[k - 1];
                }
                if k < m {
                    flow += pi[k + 1] * self.death[k + 1];
                }
                flow
            })
            .collect()
    }
}

/// Busy-server count under trunk reservation `theta`.
pub fn threshold_chain(params: &ModelParams, theta: usize) -> Result<BirthDeathSpec, AnalyticError> {
    let n = params.servers();
    if theta > n {
        return Err(AnalyticError::BadThreshold { theta, servers: n });
    }
    let nf = n as f64;
    let all = nf * (params.lambda_h() + params.lambda_l());
    let high = nf * params.lambda_h();
    let birth = (0..=n)
        .map(|k| match k {
            k if k == n => 0.0,
            k if k < n - theta => all,
            _ => high,
        })
        .collect();
    let death = (0..=n).map(|k| k as f64 * params.mu()).collect();
    BirthDeathSpec::new(birth, death)
}

/// Idle count of the reject-all-L process: up `mu (N - y)`, down `N lambda_H`.
pub fn reject_all_low_idle_chain(params: &ModelParams) -> BirthDeathSpec {
    let n = params.servers();
    let up = (0..=n).map(|y| params.mu() * (n - y) as f64).collect();
    let down = (0..=n).map(|y| if y == 0 { 0.0 } else { n as f64 * params.lambda_h() }).collect();
    BirthDeathSpec::new(up, down).expect("idle chain is well formed")
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Product-form stationary law, accumulated in log space.
pub fn stationary_distribution(spec: &BirthDeathSpec) -> Result<Vec<f64>, AnalyticError> {
    let m = spec.max_state();
    let mut logw = Vec::with_capacity(m + 1);
    logw.push(0.0f64);
    for k in 1..=m {
        let (b, d) = (spec.birth[k - 1], spec.death[k]);
        if b <= 0.0 || d <= 0.0 {
            return Err(AnalyticError::BadChain(format!("chain is reducible at state {k}")));
        }
        logw.push(logw[k - 1] + b.ln() - d.ln());
    }
    let log_z = logw.iter().fold(f64::NEG_INFINITY, |acc, &x| log_add_exp(acc, x));
    Ok(logw.iter().map(|&x| (x - log_z).exp()).collect())
}

/// Exact long-run reward of trunk reservation `theta`.
pub fn threshold_reward(params: &ModelParams, theta: usize) -> Result<f64, AnalyticError> {
    let n = params.servers();
    let pi = stationary_distribution(&threshold_chain(params, theta)?)?;
    let below_full: f64 = pi[..n].iter().sum();
    let below_cut: f64 = pi[..n - theta].iter().sum();
    let r = params.rates();
    let nf = n as f64;
    Ok(r.reward_h * nf * r.lambda_h * below_full + r.reward_l * nf * r.lambda_l * below_cut)
}

/// Stationary performance of trunk reservation `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub theta: usize,
    pub reward_rate: f64,
    pub mean_idle: f64,
    /// High-type rejections per hour.
    pub high_rejection_rate: f64,
}

pub fn threshold_metrics(params: &ModelParams, theta: usize) -> Result<ThresholdMetrics, AnalyticError> {
    let n = params.servers();
    let pi = stationary_distribution(&threshold_chain(params, theta)?)?;
    let mean_idle = pi.iter().enumerate().map(|(k, p)| (n - k) as f64 * p).sum();
    Ok(ThresholdMetrics {
        theta,
        reward_rate: threshold_reward(params, theta)?,
        mean_idle,
        high_rejection_rate: params.arrival_rate(JobClass::High) * pi[n],
    })
}

/// Exact rewards of every threshold `0..=N`, in O(N) total via prefix sums
/// of the log product-form weights.
pub fn threshold_rewards(params: &ModelParams) -> Vec<f64> {
    let n = params.servers();
    let r = params.rates();
    let nf = n as f64;
    let ln_all = (nf * (r.lambda_h + r.lambda_l) / r.mu).ln();
    let ln_high = (nf * r.lambda_h / r.mu).ln();
    // Unnormalized log weights of pure Erlang chains with the two loads.
    let lgam: Vec<f64> = (0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect();
    let e: Vec<f64> = (0..=n).map(|k| k as f64 * ln_all - lgam[k]).collect();
    let h: Vec<f64> = (0..=n).map(|k| k as f64 * ln_high - lgam[k]).collect();
    // prefix_e[c] = logsumexp e[0..=c]; suffix_h[c] = logsumexp h[c..=n]
    let mut prefix_e = vec![0.0; n + 1];
    let mut acc = f64::NEG_INFINITY;
    for k in 0..=n {
        acc = log_add_exp(acc, e[k]);
        prefix_e[k] = acc;
    }
    let mut suffix_h = vec![0.0; n + 2];
    suffix_h[n + 1] = f64::NEG_INFINITY;
    for k in (0..=n).rev() {
        suffix_h[k] = log_add_exp(suffix_h[k + 1], h[k]);
    }
    (0..=n)
        .map(|theta| {
            let c = n - theta;
            // log w_k = e[c] + h[k] - h[c] for k >= c
            let shift = e[c] - h[c];
            let log_z = log_add_exp(prefix_e[c], shift + suffix_h[c + 1]);
            let log_full = shift + h[n];
            let log_at_or_above_cut = shift + suffix_h[c];
            let below_full = -(log_full - log_z).exp_m1();
            let below_cut = -(log_at_or_above_cut - log_z).exp_m1();
            r.reward_h * nf * r.lambda_h * below_full + r.reward_l * nf * r.lambda_l * below_cut
        })
        .collect()
}

/// Best trunk-reservation level and its reward; ties go to the smaller level.
pub fn best_threshold(params: &ModelParams) -> (usize, f64) {
    let rewards = threshold_rewards(params);
    let mut best = (0, rewards[0]);
    for (theta, &v) in rewards.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (theta, v);
        }
    }
    best
}

/// Solves a tridiagonal system by forward elimination and back substitution.
/// `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Probability that the chain started at `start` reaches `upper` before
/// `lower`, from the harmonic equations on the interior states.
pub fn hitting_probability(
    spec: &BirthDeathSpec,
    start: usize,
    lower: usize,
    upper: usize,
) -> Result<f64, AnalyticError> {
    if !(lower <= start && start <= upper) || upper > spec.max_state() {
        return Err(AnalyticError::BadLevels { lower, start, upper });
    }
    if start == upper {
        return Ok(1.0);
    }
    if start == lower {
        return Ok(0.0);
    }
    // Unknowns h(lower+1..upper-1); (b+d) h(y) - b h(y+1) - d h(y-1) = 0.
    let m = upper - lower - 1;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let y = lower + 1 + i;
        let (b, d) = (spec.birth[y], spec.death[y]);
        if b + d <= 0.0 {
            return Err(AnalyticError::BadChain(format!("state {y} is absorbing")));
        }
        diag[i] = b + d;
        sub[i] = -d;
        sup[i] = -b;
        if y + 1 == upper {
            rhs[i] = b;
        }
    }
    Ok(solve_tridiagonal(&sub, &diag, &sup, &rhs)[start - lower - 1])
}

/// Probability that the reject-all-L idle count goes from `start` to `upper`
/// before `lower`.
pub fn race_probability(params: &ModelParams, start: usize, lower: usize, upper: usize) -> Result<f64, AnalyticError> {
    hitting_probability(&reject_all_low_idle_chain(params), start, lower, upper)
}

/// Classical gambler's ruin: probability a +/-1 walk with up-probability
/// `p_up` reaches `b` before `a`, from `y`.
pub fn walk_ruin_prob(p_up: f64, y: i64, a: i64, b: i64) -> Result<f64, AnalyticError> {
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(AnalyticError::BadArgument(format!("p_up must lie in (0,1), got {p_up}")));
    }
    if !(a <= y && y <= b) || a == b {
        return Err(AnalyticError::BadArgument(format!("need a <= y <= b with a < b, got {a}, {y}, {b}")));
    }
    if p_up == 0.5 {
        return Ok((y - a) as f64 / (b - a) as f64);
    }
    let rho = (1.0 - p_up) / p_up;
    Ok((1.0 - rho.powi((y - a) as i32)) / (1.0 - rho.powi((b - a) as i32)))
}

/// Steps beyond which uniformization is refused.
pub const UNIFORMIZATION_STEP_LIMIT: u64 = 10_000_000;
const POISSON_TAIL: f64 = 1e-10;

/// Probability that the reject-all-L idle count, started at `start >= 2`,
/// enters `{0, 1}` within `horizon` hours. Uniformized transient solve; the
/// Poisson tail dropped is below 1e-10, which bounds the truncation error
/// because the absorbed mass is non-decreasing in the step count.
pub fn transient_absorption(params: &ModelParams, start: usize, horizon: f64) -> Result<f64, AnalyticError> {
    let n = params.servers();
    if start < 2 || start > n {
        return Err(AnalyticError::BadArgument(format!("start {start} must lie in 2..={n}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(AnalyticError::BadArgument(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    if horizon == 0.0 {
        return Ok(0.0);
    }
    let chain = reject_all_low_idle_chain(params);
    let (up, down) = (chain.birth(), chain.death());
    // Transient states 2..=n map to 0..n-1; absorbed mass tracked separately.
    let lambda = (2..=n).map(|y| up[y] + down[y]).fold(0.0f64, f64::max);
    let mean = lambda * horizon;
    let steps_needed = (mean + 10.0 * mean.sqrt() + 50.0).ceil() as u64;
    if steps_needed > UNIFORMIZATION_STEP_LIMIT {
        return Err(AnalyticError::TooManySteps { limit: UNIFORMIZATION_STEP_LIMIT });
    }
    let m = n - 1;
    let mut p = vec![0.0; m];
    p[start - 2] = 1.0;
    let mut absorbed = 0.0;
    let mut next = vec![0.0; m];
    let mut result = 0.0;
    let mut cumulative = 0.0;
    let ln_mean = mean.ln();
    let mut k: u64 = 0;
    loop {
        let weight = (-mean + k as f64 * ln_mean - ln_gamma(k as f64 + 1.0)).exp();
        result += weight * absorbed;
        cumulative += weight;
        if (k as f64) > mean && 1.0 - cumulative < POISSON_TAIL {
            break;
        }
        if k >= steps_needed {
            break;
        }
        // one uniformized step
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let y = i + 2;
            let mass = p[i];
            if mass == 0.0 {
                continue;
            }
            let pu = up[y] / lambda;
            let pd = down[y] / lambda;
            next[i] += mass * (1.0 - pu - pd);
            if y < n {
                next[i + 1] += mass * pu;
            }
            if y == 2 {
                absorbed += mass * pd;
            } else {
                next[i - 1] += mass * pd;
            }
        }
        std::mem::swap(&mut p, &mut next);
        k += 1;
    }
    // Remaining Poisson mass sees absorption at most 1.
    Ok(result + (1.0 - cumulative).max(0.0) * absorbed)
}
