//! Model primitives: server count, per-server rates and per-job rewards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("server count must be at least 1")]
    NoServers,
    #[error("rates must be finite and positive")]
    BadRate,
    #[error("overload condition violated: need lambda_h < mu < lambda_h + lambda_l (got lambda_h={lambda_h}, lambda_l={lambda_l}, mu={mu})")]
    NotOverloaded { lambda_h: f64, lambda_l: f64, mu: f64 },
    #[error("reward order violated: need reward_h > reward_l > 0 (got {reward_h}, {reward_l})")]
    RewardOrder { reward_h: f64, reward_l: f64 },
}

/// Job type: premium (`High`) or discount (`Low`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JobClass {
    High,
    Low,
}

impl JobClass {
    pub fn as_str(self) -> &'static str {
        match self {
            JobClass::High => "H",
            JobClass::Low => "L",
        }
    }
}

/// Per-server rates and per-job rewards, shared across every system size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub lambda_h: f64,
    pub lambda_l: f64,
    pub mu: f64,
    pub reward_h: f64,
    pub reward_l: f64,
}

impl Rates {
    /// The reference point used throughout the test suite.
    pub const REFERENCE: Rates = Rates { lambda_h: 0.7, lambda_l: 0.8, mu: 1.0, reward_h: 2.0, reward_l: 1.0 };

    pub fn with_servers(self, servers: usize) -> Result<ModelParams, ParamError> {
        ModelParams::new(servers, self)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let all = [self.lambda_h, self.lambda_l, self.mu];
        if all.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(ParamError::BadRate);
        }
        if !(self.lambda_h < self.mu && self.mu < self.lambda_h + self.lambda_l) {
            return Err(ParamError::NotOverloaded { lambda_h: self.lambda_h, lambda_l: self.lambda_l, mu: self.mu });
        }
        if !(self.reward_h > self.reward_l && self.reward_l > 0.0) || !self.reward_h.is_finite() {
            return Err(ParamError::RewardOrder { reward_h: self.reward_h, reward_l: self.reward_l });
        }
        Ok(())
    }
}

/// A validated N-server model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    servers: usize,
    rates: Rates,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    servers: usize,
    #[serde(flatten)]
    rates: Rates,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = ParamError;
    fn try_from(raw: RawParams) -> Result<Self, ParamError> {
        ModelParams::new(raw.servers, raw.rates)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { servers: p.servers, rates: p.rates }
    }
}

impl ModelParams {
    pub fn new(servers: usize, rates: Rates) -> Result<Self, ParamError> {
        if servers == 0 {
            return Err(ParamError::NoServers);
        }
        rates.validate()?;
        Ok(Self { servers, rates })
    }

    /// Reference rates at the given size. Panics only if `servers == 0`.
    pub fn reference(servers: usize) -> Self {
        Self::new(servers, Rates::REFERENCE).expect("reference parameters are valid")
    }

    pub fn servers(&self) -> usize {
        self.servers
    }
    pub fn rates(&self) -> Rates {
        self.rates
    }
    pub fn lambda_h(&self) -> f64 {
        self.rates.lambda_h
    }
    pub fn lambda_l(&self) -> f64 {
        self.rates.lambda_l
    }
    pub fn mu(&self) -> f64 {
        self.rates.mu
    }

    pub fn reward(&self, class: JobClass) -> f64 {
        match class {
            JobClass::High => self.rates.reward_h,
            JobClass::Low => self.rates.reward_l,
        }
    }

    /// System-wide arrival rate of `class` (jobs per hour).
    pub fn arrival_rate(&self, class: JobClass) -> f64 {
        let per_server = match class {
            JobClass::High => self.rates.lambda_h,
            JobClass::Low => self.rates.lambda_l,
        };
        per_server * self.servers as f64
    }

    /// `floor(sqrt(N))`, computed exactly on integers.
    pub fn sqrt_level(&self) -> usize {
        isqrt(self.servers)
    }

    /// Upper bound on the number of counterfactual transitions a race may use.
    pub fn default_transition_cap(&self) -> u64 {
        64 * self.servers as u64 * self.sqrt_level().max(1) as u64
    }
}

pub fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_underloaded_and_reward_inversions() {
        let mut r = Rates::REFERENCE;
        r.lambda_h = 1.2;
        assert!(matches!(ModelParams::new(10, r), Err(ParamError::NotOverloaded { .. })));
        let mut r = Rates::REFERENCE;
        r.lambda_l = 0.2;
        assert!(matches!(ModelParams::new(10, r), Err(ParamError::NotOverloaded { .. })));
        let mut r = Rates::REFERENCE;
        r.reward_l = 3.0;
        assert!(matches!(ModelParams::new(10, r), Err(ParamError::RewardOrder { .. })));
        assert_eq!(ModelParams::new(0, Rates::REFERENCE), Err(ParamError::NoServers));
    }

    #[test]
    fn integer_square_root() {
        for n in 1..5000usize {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
        assert_eq!(ModelParams::reference(100).sqrt_level(), 10);
        assert_eq!(ModelParams::reference(99).sqrt_level(), 9);
    }

    #[test]
    fn serde_validates() {
        let ok = r#"{"servers":10,"lambda_h":0.7,"lambda_l":0.8,"mu":1.0,"reward_h":2.0,"reward_l":1.0}"#;
        let p: ModelParams = serde_json::from_str(ok).unwrap();
        assert_eq!(p.servers(), 10);
        let bad = r#"{"servers":10,"lambda_h":1.2,"lambda_l":0.8,"mu":1.0,"reward_h":2.0,"reward_l":1.0}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }
}
