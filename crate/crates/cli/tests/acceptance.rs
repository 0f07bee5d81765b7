//! Acceptance suite: ten criteria at the reference parameters
//! (lambda_H = 0.7, lambda_L = 0.8, mu = 1, r_H = 2, r_L = 1). Each prints
//! one PASS/FAIL line; the process fails if any criterion fails.

use lossnet::analytic::{fluid_reward, race_probability, threshold_reward, transient_absorption};
use lossnet::estimators::batch_means;
use lossnet::lookahead::{race_to_levels, window_check, CounterfactualState};
use lossnet::*;
use lossnet_cli::config::{SssWindowMode, SweepConfig};
use lossnet_cli::couple::coupling_report;
use lossnet_cli::exact::{doubling_grid, exact_table};
use lossnet_cli::fit::{fit_log_slope, spearman, SlopeFit};
use lossnet_cli::sweep::{run_sweep, Row, SweepResult};

const SEEDS: [u64; 3] = [1, 2, 3];
const GRID: [usize; 5] = [25, 50, 100, 200, 400];
const HORIZON: f64 = 2000.0;
/// Window constant for the windowed policy, w = c ln N / N.
const SSS_C: f64 = 15.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn workers() -> usize {
    lossnet_cli::workers_from_env()
}

fn reference_sweep(policies: &[&str], c: f64) -> SweepResult {
    let mut cfg =
        SweepConfig::new(GRID.to_vec(), policies.iter().map(|s| s.to_string()).collect(), HORIZON, SEEDS.to_vec());
    cfg.sss_window = SssWindowMode::COverride(c);
    run_sweep(&cfg, workers()).expect("sweep runs")
}

fn rows_of<'a>(r: &'a SweepResult, policy: &str) -> Vec<&'a Row> {
    r.rows.iter().filter(|row| row.policy == policy).collect()
}

fn points(rows: &[&Row]) -> Vec<(usize, f64)> {
    rows.iter().map(|r| (r.n, r.gap_point)).collect()
}

fn mean_by_n(rows: &[&Row], f: impl Fn(&Row) -> f64) -> Vec<(usize, f64)> {
    GRID.iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| f(r)).collect();
            (n, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

fn flatness(fit: &SlopeFit, b: f64) -> (bool, String) {
    let pass = fit.p_value_zero_slope > 0.05 && fit.slope.abs() < b / 10.0;
    (
        pass,
        format!(
            "slope {:.4} +- {:.4} (p = {:.4}, need p > 0.05), |slope| < b/10 = {:.4}",
            fit.slope,
            fit.slope_std_error,
            fit.p_value_zero_slope,
            b / 10.0
        ),
    )
}

fn c1_fluid() -> Verdict {
    let v = fluid_reward(&ModelParams::reference(100));
    verdict(v == 170.0, format!("fluid reward at N=100 is {v}"))
}

fn c2_simulator_vs_exact() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    let mut skipped = Vec::new();
    let mut checked = 0;
    for n in [2usize, 10, 50] {
        for theta in [0usize, 2, 5] {
            if theta > n {
                skipped.push(format!("theta={theta},N={n}"));
                continue;
            }
            let p = ModelParams::reference(n);
            let exact = threshold_reward(&p, theta).unwrap();
            for seed in SEEDS {
                let cfg = RunConfig { slabs: 1000, ..RunConfig::new(1e4) };
                let s = run(p, &PolicyKind::Threshold(theta), &cfg, seed).unwrap();
                let bm = batch_means(&s.series.reward_rates(s.warmup), 50).unwrap();
                let z = (bm.point - exact).abs() / bm.std_error;
                worst = worst.max(z);
                checked += 1;
                if z > 3.0 {
                    fails.push(format!("N={n} theta={theta} seed={seed} z={z:.2}"));
                }
            }
        }
    }
    verdict(
        fails.is_empty(),
        format!(
            "{checked} runs, max |z| = {worst:.2} (limit 3); skipped theta > N: {}{}",
            skipped.join(" "),
            if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }
        ),
    )
}

fn c3_exact_log_growth() -> (Verdict, f64) {
    let table = exact_table(&Rates::REFERENCE, &doubling_grid(4, 14)).unwrap();
    let fit = fit_log_slope(&table.iter().map(|r| (r.n, r.gap)).collect::<Vec<_>>()).unwrap();
    (
        verdict(
            fit.slope > 0.0 && fit.r_squared > 0.98,
            format!("b = {:.4}, a = {:.4}, R^2 = {:.5} over N = 16..16384", fit.slope, fit.intercept, fit.r_squared),
        ),
        fit.slope,
    )
}

fn c4_pfi_flat(sweep: &SweepResult, b: f64) -> Verdict {
    let rows = rows_of(sweep, "pfi");
    let fit = fit_log_slope(&points(&rows)).unwrap();
    let (pass, detail) = flatness(&fit, b);
    let means: Vec<String> = mean_by_n(&rows, |r| r.gap_point).iter().map(|(n, g)| format!("{n}:{g:.3}")).collect();
    verdict(pass, format!("{detail}; mean gaps {}", means.join(" ")))
}

fn c5_idleness_bounded(sweep: &SweepResult) -> Verdict {
    let rows = rows_of(sweep, "pfi");
    let means = mean_by_n(&rows, |r| r.idleness_per_epoch);
    let hi = means.iter().map(|m| m.1).fold(f64::MIN, f64::max);
    let lo = means.iter().map(|m| m.1).fold(f64::MAX, f64::min);
    let ratio = hi / lo;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.idleness_per_epoch).collect();
    let trend = spearman(&xs, &ys).unwrap();
    let listing: Vec<String> = means.iter().map(|(n, m)| format!("{n}:{m:.3}")).collect();
    verdict(
        ratio < 2.0 && trend.p_value_positive >= 0.05,
        format!(
            "max/min ratio {ratio:.3} (limit 2); Spearman rho {:.3}, one-sided p {:.4} (need >= 0.05); {}",
            trend.rho,
            trend.p_value_positive,
            listing.join(" ")
        ),
    )
}

fn c6_high_rejections(sweep: &SweepResult) -> Verdict {
    let rows: Vec<&Row> = rows_of(sweep, "pfi").into_iter().filter(|r| r.n >= 100).collect();
    let counts: Vec<String> =
        rows.iter().map(|r| format!("N={}/s{}:{}", r.n, r.seed, (r.hrej_per_hour * HORIZON).round())).collect();
    let zero = rows.iter().all(|r| r.hrej_per_hour == 0.0);
    let p9 = ModelParams::reference(9);
    let small: Vec<u64> =
        SEEDS.iter().map(|&s| run(p9, &PolicyKind::Pfi, &RunConfig::new(HORIZON), s).unwrap().rejected[0]).collect();
    let positive = small.iter().all(|&c| c > 0);
    verdict(
        zero && positive,
        format!("H rejections at N>=100 (need all 0): {}; at N=9: {small:?} (need > 0)", counts.join(" ")),
    )
}

fn c7_sss_flat(sweep: &SweepResult, tiny: &SweepResult, b: f64) -> Verdict {
    let sss = rows_of(sweep, "sss");
    let fit = fit_log_slope(&points(&sss)).unwrap();
    let (flat, detail) = flatness(&fit, b);
    let pfi = mean_by_n(&rows_of(sweep, "pfi"), |r| r.gap_point);
    let small = mean_by_n(&rows_of(tiny, "sss"), |r| r.gap_point);
    let worse = pfi.iter().zip(&small).all(|(a, b)| b.1 > a.1);
    let cmp: Vec<String> = pfi.iter().zip(&small).map(|(a, b)| format!("{}:{:.2}>{:.2}", a.0, b.1, a.1)).collect();
    verdict(flat && worse, format!("c = {SSS_C}: {detail}; tiny window gap > PFI gap: {}", cmp.join(" ")))
}

/// Fresh counterfactual: busy servers with exponential residuals and an
/// exponential wait to the next high-type arrival, drawn from streams the
/// walk does not read.
fn fresh<'a>(p: &ModelParams, path: &'a SamplePath, y: usize) -> CounterfactualState<'a> {
    let residuals: Vec<f64> = (0..p.servers() - y).map(|j| path.value_at(StreamId::ServiceLow, j) / p.mu()).collect();
    let next_h = path.value_at(StreamId::ArrivalLow, 0) / p.arrival_rate(JobClass::High);
    CounterfactualState::from_parts(*p, path, 0.0, y, &residuals, next_h, 0, 0)
}

fn c8_lookahead_oracles() -> Verdict {
    let rollouts = 10_000usize;
    let mut parts = Vec::new();
    let mut pass = true;
    let p = ModelParams::reference(50);
    let upper = p.sqrt_level();
    for y in [2, 5, upper - 1] {
        let exact = race_probability(&p, y, 1, upper).unwrap();
        let hits = (0..rollouts)
            .filter(|&r| {
                let path = SamplePath::new(1_000_000 + r as u64);
                race_to_levels(&fresh(&p, &path, y), 1, upper, p.default_transition_cap()).unwrap().verdict
                    == lossnet::Verdict::HitUpper
            })
            .count();
        let f = hits as f64 / rollouts as f64;
        let se = (exact * (1.0 - exact) / rollouts as f64).sqrt();
        let z = (f - exact).abs() / se;
        pass &= z <= 3.0;
        parts.push(format!("race y={y}: {f:.4} vs {exact:.4} (z={z:.2})"));
    }
    let p = ModelParams::reference(10);
    let y = 3;
    for w in [0.05, 0.2] {
        let exact = 1.0 - transient_absorption(&p, y, w).unwrap();
        let hits =
            (0..rollouts).filter(|&r| window_check(&fresh(&p, &SamplePath::new(2_000_000 + r as u64), y), w)).count();
        let f = hits as f64 / rollouts as f64;
        let se = (exact * (1.0 - exact) / rollouts as f64).sqrt();
        let z = (f - exact).abs() / se;
        pass &= z <= 3.0;
        parts.push(format!("window y={y} w={w}: {f:.4} vs {exact:.4} (z={z:.2})"));
    }
    verdict(pass, parts.join("; "))
}

fn c9_decomposition(sweeps: &[&SweepResult]) -> Verdict {
    let mut bad = Vec::new();
    let mut count = 0;
    for s in sweeps {
        for d in &s.decompositions {
            count += 1;
            for (name, e) in [("fluid - pfi", d.vol_upper), ("pfi - best threshold", d.uncertainty)] {
                match e {
                    Some(e) if e.value >= -3.0 * e.std_error => {}
                    Some(e) => bad.push(format!("N={} {name} = {:.4} (se {:.4})", d.servers, e.value, e.std_error)),
                    None => bad.push(format!("N={} {name} missing", d.servers)),
                }
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "{count} reports checked{}",
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join(", ")) }
        ),
    )
}

fn c10_coupling() -> Verdict {
    let mut cfg = SweepConfig::new(vec![25, 100], vec!["sss".into()], HORIZON, SEEDS.to_vec());
    cfg.sss_window = SssWindowMode::COverride(SSS_C);
    let r = coupling_report(&cfg, "sss", "ae:sss,pfi", workers()).unwrap();
    let listing: Vec<String> = r
        .pooled
        .iter()
        .map(|p| format!("N={}: {}/{} = {:.4}", p.n, p.decoupled_epochs, p.epochs, p.frequency))
        .collect();
    verdict(r.non_increasing, format!("c = {SSS_C}: {}", listing.join(", ")))
}

fn main() {
    let started = std::time::Instant::now();
    let sweep = reference_sweep(&["pfi", "sss"], SSS_C);
    let tiny = reference_sweep(&["sss"], 1e-9);
    let (c3, b) = c3_exact_log_growth();
    let results = [
        ("1 fluid reward", c1_fluid()),
        ("2 simulator vs exact threshold rewards", c2_simulator_vs_exact()),
        ("3 online gap grows like log N", c3),
        ("4 PFI gap slope is flat", c4_pfi_flat(&sweep, b)),
        ("5 PFI idleness per epoch is bounded", c5_idleness_bounded(&sweep)),
        ("6 PFI high-type rejections", c6_high_rejections(&sweep)),
        ("7 SSS gap slope is flat, window matters", c7_sss_flat(&sweep, &tiny, b)),
        ("8 lookahead oracles", c8_lookahead_oracles()),
        ("9 decomposition ordering", c9_decomposition(&[&sweep])),
        ("10 coupling frequency non-increasing", c10_coupling()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("[{}] criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
