//! Least-squares fits of gaps against `ln N`, and a rank-trend check.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::CliError;

/// Ordinary least squares of `gap = intercept + slope * ln N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_error: f64,
    pub points: usize,
    /// Two-sided p-value for a zero slope (Student t, `points - 2` df).
    pub p_value_zero_slope: f64,
}

pub fn fit_log_slope(points: &[(usize, f64)]) -> Result<SlopeFit, CliError> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(CliError::Fit("need at least two distinct N".into()));
    }
    if distinct[0] == 0 {
        return Err(CliError::Fit("N must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(CliError::Fit("gap values must be finite".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let (slope_std_error, p_value_zero_slope) = if points.len() > 2 {
        let se = (sse / (n - 2.0) / sxx).sqrt();
        let p = if se > 0.0 {
            let t = StudentsT::new(0.0, 1.0, n - 2.0).expect("positive degrees of freedom");
            2.0 * t.sf((slope / se).abs())
        } else if slope == 0.0 {
            1.0
        } else {
            0.0
        };
        (se, p)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SlopeFit { slope, intercept, r_squared, slope_std_error, points: points.len(), p_value_zero_slope })
}

/// Spearman rank correlation and its one-sided p-value for a positive
/// association (t approximation, `n - 2` df).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTrend {
    pub rho: f64,
    pub p_value_positive: f64,
    pub points: usize,
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<RankTrend, CliError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(CliError::Fit("rank correlation needs at least three paired points".into()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m).powi(2)).sum();
    let rho = if vx > 0.0 && vy > 0.0 { cov / (vx * vy).sqrt() } else { 0.0 };
    let p_value_positive = if rho >= 1.0 {
        0.0
    } else {
        let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
        StudentsT::new(0.0, 1.0, n - 2.0).expect("positive degrees of freedom").sf(t)
    };
    Ok(RankTrend { rho, p_value_positive, points: xs.len() })
}
