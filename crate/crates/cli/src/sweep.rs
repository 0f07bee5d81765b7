//! Sweep execution: one row per `(N, policy, seed)` cell, computed on a
//! worker pool and emitted in canonical order.

use std::path::Path;
use std::time::Instant;

use lossnet::analytic::{best_threshold, fluid_reward, threshold_metrics};
use lossnet::estimators::{
    batch_means, decomposition_report, idleness_ratio, regenerative_gap, Estimate, PolicyEstimates, RegretDecomposition,
};
use lossnet::{run, GapMethod, PolicySpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;
use crate::CliError;

/// One output row; field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "N")]
    pub n: usize,
    pub policy: String,
    pub seed: u64,
    pub method: String,
    pub reward_rate: f64,
    pub gap_point: f64,
    pub gap_stderr: f64,
    pub idleness_per_epoch: f64,
    pub hrej_per_hour: f64,
    pub epoch_count: usize,
    pub wallclock_s: f64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "N",
    "policy",
    "seed",
    "method",
    "reward_rate",
    "gap_point",
    "gap_stderr",
    "idleness_per_epoch",
    "hrej_per_hour",
    "epoch_count",
    "wallclock_s",
];

impl Row {
    fn failed(n: usize, policy: &str, seed: u64, wallclock_s: f64) -> Self {
        Self {
            n,
            policy: policy.to_string(),
            seed,
            method: "failed".into(),
            reward_rate: f64::NAN,
            gap_point: f64::NAN,
            gap_stderr: f64::NAN,
            idleness_per_epoch: f64::NAN,
            hrej_per_hour: f64::NAN,
            epoch_count: 0,
            wallclock_s,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.method == "failed"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub n: usize,
    pub policy: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<Row>,
    pub failures: Vec<CellFailure>,
    pub decompositions: Vec<RegretDecomposition>,
}

/// Computes one cell. Threshold policies take the exact birth-death route.
pub fn run_cell(config: &SweepConfig, n: usize, policy: &str, seed: u64) -> Result<Row, CliError> {
    let started = Instant::now();
    let params = config.params(n)?;
    let spec = config.policy_spec(policy)?;
    let fluid = fluid_reward(&params);
    let mut row = if let PolicySpec::Threshold(theta) = spec {
        let m = threshold_metrics(&params, theta).map_err(|e| CliError::Cell(e.to_string()))?;
        Row {
            n,
            policy: policy.to_string(),
            seed,
            method: GapMethod::Exact.as_str().into(),
            reward_rate: m.reward_rate,
            gap_point: fluid - m.reward_rate,
            gap_stderr: 0.0,
            idleness_per_epoch: m.mean_idle,
            hrej_per_hour: m.high_rejection_rate,
            epoch_count: 0,
            wallclock_s: 0.0,
        }
    } else {
        let kind = spec.resolve(&params);
        let stats = run(params, &kind, &config.run_config(), seed).map_err(|e| CliError::Cell(e.to_string()))?;
        let (gap, idleness) = match regenerative_gap(&stats.epochs, &params, config.min_epochs) {
            Ok(g) => (g, idleness_ratio(&stats.epochs).0),
            Err(e) => {
                log::warn!("N={n} policy={policy} seed={seed}: {e}; falling back to batch means");
                let series = stats.series.gap_rates(stats.warmup, &params);
                let g = batch_means(&series, config.batches).map_err(|e| CliError::Cell(e.to_string()))?;
                (g, stats.mean_idle)
            }
        };
        Row {
            n,
            policy: policy.to_string(),
            seed,
            method: gap.method.as_str().into(),
            reward_rate: stats.reward_rate_after_warmup,
            gap_point: gap.point,
            gap_stderr: gap.std_error,
            idleness_per_epoch: idleness,
            hrej_per_hour: stats.rejection_rate_high,
            epoch_count: stats.epochs.len(),
            wallclock_s: 0.0,
        }
    };
    row.wallclock_s = started.elapsed().as_secs_f64();
    Ok(row)
}

/// Runs every cell of `config` on `workers` threads.
pub fn run_sweep(config: &SweepConfig, workers: usize) -> Result<SweepResult, CliError> {
    config.validate()?;
    let cells: Vec<(usize, &str, u64)> = config
        .n_list
        .iter()
        .flat_map(|&n| config.policies.iter().flat_map(move |p| config.seeds.iter().map(move |&s| (n, p.as_str(), s))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<Row, Box<(Row, CellFailure)>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, policy, seed)| {
                let started = Instant::now();
                run_cell(config, n, policy, seed).map_err(|e| {
                    log::error!("N={n} policy={policy} seed={seed}: {e}");
                    Box::new((
                        Row::failed(n, policy, seed, started.elapsed().as_secs_f64()),
                        CellFailure { n, policy: policy.to_string(), seed, error: e.to_string() },
                    ))
                })
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(failed) => {
                let (r, f) = *failed;
                rows.push(r);
                failures.push(f);
            }
        }
    }
    let decompositions =
        config.n_list.iter().map(|&n| decomposition_for(config, n, &rows)).collect::<Result<_, _>>()?;
    Ok(SweepResult { rows, failures, decompositions })
}

/// Pools the seeds of one policy at one N into a reward estimate.
fn pooled_reward(rows: &[&Row], fluid: f64) -> Option<Estimate> {
    let ok: Vec<&&Row> = rows.iter().filter(|r| !r.is_failed()).collect();
    if ok.is_empty() {
        return None;
    }
    let k = ok.len() as f64;
    let gap = ok.iter().map(|r| r.gap_point).sum::<f64>() / k;
    let se = ok.iter().map(|r| r.gap_stderr.powi(2)).sum::<f64>().sqrt() / k;
    Some(Estimate::new(fluid - gap, se))
}

fn decomposition_for(config: &SweepConfig, n: usize, rows: &[Row]) -> Result<RegretDecomposition, CliError> {
    let params = config.params(n)?;
    let fluid = fluid_reward(&params);
    let mut pfi = Vec::new();
    let mut sss = Vec::new();
    for r in rows.iter().filter(|r| r.n == n) {
        match config.policy_spec(&r.policy)? {
            PolicySpec::Pfi => pfi.push(r),
            PolicySpec::Sss(_) => sss.push(r),
            _ => {}
        }
    }
    let (theta, best) = best_threshold(&params);
    let est = PolicyEstimates {
        pfi: pooled_reward(&pfi, fluid),
        sss: pooled_reward(&sss, fluid),
        online: Some(Estimate::exact(best)),
        best_theta: Some(theta),
    };
    Ok(decomposition_report(&params, &est))
}

/// Creates the parent directory of `path` if it is missing.
pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
        }
        _ => Ok(()),
    }
}

pub fn write_csv(rows: &[Row], path: &Path) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Csv(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Csv(e.to_string()))?;
    let headers = r.headers().map_err(|e| CliError::Csv(e.to_string()))?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(CliError::Csv(format!("unexpected columns in {}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| CliError::Csv(e.to_string()))).collect()
}

/// Running `(N, gap sum, count)` per policy.
type Accumulators = Vec<(String, Vec<(usize, f64, usize)>)>;

/// Mean gap per N of each policy, as `(policy, [(N, gap)])` in first-seen order.
pub fn gap_curves(rows: &[Row]) -> Vec<(String, Vec<(usize, f64)>)> {
    let mut curves: Accumulators = Vec::new();
    for r in rows.iter().filter(|r| !r.is_failed()) {
        let idx = match curves.iter().position(|c| c.0 == r.policy) {
            Some(i) => i,
            None => {
                curves.push((r.policy.clone(), Vec::new()));
                curves.len() - 1
            }
        };
        let pts = &mut curves[idx].1;
        match pts.iter_mut().find(|p| p.0 == r.n) {
            Some(p) => {
                p.1 += r.gap_point;
                p.2 += 1;
            }
            None => pts.push((r.n, r.gap_point, 1)),
        }
    }
    curves.into_iter().map(|(p, pts)| (p, pts.into_iter().map(|(n, s, k)| (n, s / k as f64)).collect())).collect()
}

/// Writes a whitespace-delimited two-column data file.
pub fn write_dat(path: &Path, header: &str, points: &[(f64, f64)]) -> Result<(), CliError> {
    let mut text = format!("# {header}\n");
    for (x, y) in points {
        text.push_str(&format!("{x} {y}\n"));
    }
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn curve_file_name(policy: &str) -> String {
    let stem: String =
        policy.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    format!("gap_{stem}.dat")
}

/// Writes every output path named in the config.
pub fn write_outputs(config: &SweepConfig, result: &SweepResult) -> Result<(), CliError> {
    if let Some(p) = &config.output.csv {
        write_csv(&result.rows, p)?;
    }
    if let Some(dir) = &config.output.plots {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        for (policy, pts) in gap_curves(&result.rows) {
            let xy: Vec<(f64, f64)> = pts.iter().map(|&(n, g)| (n as f64, g)).collect();
            write_dat(&dir.join(curve_file_name(&policy)), &format!("N gap ({policy})"), &xy)?;
        }
    }
    if let Some(p) = &config.output.decomposition {
        let text = serde_json::to_string_pretty(&result.decompositions).expect("decomposition serializes");
        ensure_parent(p)?;
        std::fs::write(p, text).map_err(|e| CliError::Io(p.clone(), e))?;
    }
    Ok(())
}
