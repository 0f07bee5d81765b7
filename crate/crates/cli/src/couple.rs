//! Coupling diagnostic: how often two policies' idle processes separate
//! within an epoch of the first one, as N grows.

use lossnet::{coupled_run, RunConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub epochs: u64,
    pub decoupled_epochs: u64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledCoupling {
    #[serde(rename = "N")]
    pub n: usize,
    pub epochs: u64,
    pub decoupled_epochs: u64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub left: String,
    pub right: String,
    pub rows: Vec<CouplingRow>,
    pub pooled: Vec<PooledCoupling>,
    /// Pooled frequency never rises from one N to the next.
    pub non_increasing: bool,
}

/// Couples `left` against `right` for every N and seed of `config`; the
/// policy strings follow the config's `sss` window convention.
pub fn coupling_report(
    config: &SweepConfig,
    left: &str,
    right: &str,
    workers: usize,
) -> Result<CouplingReport, CliError> {
    let mut check = config.clone();
    check.policies = vec![left.to_string(), right.to_string()];
    check.validate()?;
    let run_cfg: RunConfig = config.run_config();
    let cells: Vec<(usize, u64)> =
        config.n_list.iter().flat_map(|&n| config.seeds.iter().map(move |&s| (n, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let rows: Vec<CouplingRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, seed)| {
                let params = config.params(n)?;
                let l = config.policy_spec(left)?.resolve(&params);
                let r = config.policy_spec(right)?.resolve(&params);
                let s = coupled_run(params, &l, &r, &run_cfg, seed).map_err(|e| CliError::Cell(e.to_string()))?;
                Ok(CouplingRow {
                    n,
                    seed,
                    epochs: s.epochs,
                    decoupled_epochs: s.decoupled_epochs,
                    frequency: s.frequency,
                })
            })
            .collect::<Result<_, CliError>>()
    })?;
    let pooled: Vec<PooledCoupling> = config
        .n_list
        .iter()
        .map(|&n| {
            let (e, d) =
                rows.iter().filter(|r| r.n == n).fold((0, 0), |(e, d), r| (e + r.epochs, d + r.decoupled_epochs));
            PooledCoupling {
                n,
                epochs: e,
                decoupled_epochs: d,
                frequency: if e > 0 { d as f64 / e as f64 } else { f64::NAN },
            }
        })
        .collect();
    let non_increasing = pooled.windows(2).all(|w| w[1].frequency <= w[0].frequency);
    Ok(CouplingReport { left: left.to_string(), right: right.to_string(), rows, pooled, non_increasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_policies_give_zero_column() {
        let c = SweepConfig::new(vec![16, 25], vec!["pfi".into()], 40.0, vec![1, 2]);
        let r = coupling_report(&c, "sss:c=10", "sss:c=10", 2).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows.iter().all(|row| row.decoupled_epochs == 0 && row.epochs > 0));
        assert!(r.pooled.iter().all(|p| p.frequency == 0.0));
        assert!(r.non_increasing);
    }

    #[test]
    fn bad_policy_is_reported() {
        let c = SweepConfig::new(vec![16], vec!["pfi".into()], 40.0, vec![1]);
        assert!(coupling_report(&c, "sss:c=10", "nope", 1).is_err());
    }
}
