//! Analytic-only sweep of trunk reservation over N.

use lossnet::analytic::{best_threshold, fluid_reward};
use lossnet::Rates;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub best_theta: usize,
    pub best_reward: f64,
    pub fluid_reward: f64,
    pub gap: f64,
}

pub fn exact_table(rates: &Rates, n_list: &[usize]) -> Result<Vec<ExactRow>, CliError> {
    n_list
        .iter()
        .map(|&n| {
            let p = rates.with_servers(n).map_err(|e| CliError::Config(e.to_string()))?;
            let (theta, best) = best_threshold(&p);
            let fluid = fluid_reward(&p);
            Ok(ExactRow { n, best_theta: theta, best_reward: best, fluid_reward: fluid, gap: fluid - best })
        })
        .collect()
}

/// Powers of two from `2^lo` to `2^hi`.
pub fn doubling_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}
