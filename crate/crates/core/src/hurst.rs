//! Hurst exponent estimators: R/S analysis over non-overlapping subseries,
//! the block rescaled adjusted range, and the local Whittle estimator.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::HurstError;

/// Shortest series any estimator accepts.
pub const MIN_SERIES_LEN: usize = 16;
/// Smallest window / lag used in the R/S regressions.
pub const MIN_WINDOW: usize = 8;
/// Number of blocks `K` in the rescaled adjusted range.
pub const DEFAULT_BLOCKS: usize = 10;
/// Default Whittle bandwidth exponent, `m = floor(N^0.65)`.
pub const DEFAULT_BANDWIDTH_EXPONENT: f64 = 0.65;
const WHITTLE_BRACKET: (f64, f64) = (0.01, 0.99);
const WHITTLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HurstMethod {
    RsAnalysis,
    RescaledRange,
    LocalWhittle,
}

impl HurstMethod {
    pub const ALL: [HurstMethod; 3] = [
        HurstMethod::RsAnalysis,
        HurstMethod::RescaledRange,
        HurstMethod::LocalWhittle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HurstMethod::RsAnalysis => "rs_analysis",
            HurstMethod::RescaledRange => "rescaled_range",
            HurstMethod::LocalWhittle => "local_whittle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub method: HurstMethod,
    pub value: f64,
    /// Number of regression points, or the bandwidth `m` for local Whittle.
    pub n_points: usize,
    /// `(scale, statistic)` pairs fed to the log-log regression.
    pub diagnostics: Vec<(f64, f64)>,
    /// `1/√L`, the white-noise standard deviation heuristic.
    pub significance: f64,
    /// Set when the estimate falls outside (0, 1). The value is not clamped.
    pub out_of_range: bool,
}

impl HurstEstimate {
    fn new(
        method: HurstMethod,
        value: f64,
        n_points: usize,
        diagnostics: Vec<(f64, f64)>,
        len: usize,
    ) -> Self {
        HurstEstimate {
            method,
            value,
            n_points,
            diagnostics,
            significance: 1.0 / (len as f64).sqrt(),
            out_of_range: !(value > 0.0 && value < 1.0),
        }
    }

    /// Diagnostics as CSV `scale,statistic`.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("scale,statistic\n");
        for (s, v) in &self.diagnostics {
            let _ = writeln!(out, "{s},{v}");
        }
        out
    }
}

/// Estimate with the named method using its default schedule.
pub fn estimate(method: HurstMethod, series: &[f64]) -> Result<HurstEstimate, HurstError> {
    match method {
        HurstMethod::RsAnalysis => {
            estimate_rs_analysis(series, &default_window_sizes(series.len()))
        }
        HurstMethod::RescaledRange => {
            estimate_rescaled_range(series, &default_window_sizes(series.len()))
        }
        HurstMethod::LocalWhittle => estimate_local_whittle(series, None),
    }
}

/// Powers of two from 8 up to `floor(len / 2)`.
pub fn default_window_sizes(len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = MIN_WINDOW;
    while n <= len / 2 {
        out.push(n);
        n *= 2;
    }
    out
}

/// Default Whittle bandwidth `floor(N^0.65)`, kept inside `[2, N/2]`.
pub fn default_bandwidth(len: usize) -> usize {
    let m = (len as f64).powf(DEFAULT_BANDWIDTH_EXPONENT).floor() as usize;
    m.clamp(2, (len / 2).max(2))
}

fn check_len(series: &[f64]) -> Result<(), HurstError> {
    if series.len() < MIN_SERIES_LEN {
        return Err(HurstError::InsufficientData(format!(
            "series of length {} is shorter than the minimum {MIN_SERIES_LEN}",
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(HurstError::InvalidArgument(
            "series contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Range of the cumulated deviations over the block's standard deviation
/// (population convention). `None` when the block is constant.
fn rescaled_range(block: &[f64]) -> Option<f64> {
    let n = block.len() as f64;
    let mean = block.iter().sum::<f64>() / n;
    let var = block.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE)) {
        return None;
    }
    // The cumulated deviations end at W(r) = 0, so 0 is always in the range.
    let (mut acc, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for x in block {
        acc += x - mean;
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    Some((hi - lo) / sd)
}

fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// R/S analysis: split into `d = floor(L/n)` subseries of length `n`,
/// average `R_m/S_m` over them and regress `log (R/S)_n` on `log n`.
///
/// Windows with `n < 8` or `d < 2` are ignored; constant subseries are
/// skipped and windows left with none are dropped.
pub fn estimate_rs_analysis(
    series: &[f64],
    window_sizes: &[usize],
) -> Result<HurstEstimate, HurstError> {
    check_len(series)?;
    let len = series.len();
    let mut points = Vec::new();
    for &n in window_sizes {
        if n < MIN_WINDOW || len / n < 2 {
            continue;
        }
        let stats: Vec<f64> = series.chunks_exact(n).filter_map(rescaled_range).collect();
        if stats.is_empty() {
            continue;
        }
        let avg = stats.iter().sum::<f64>() / stats.len() as f64;
        if avg > 0.0 {
            points.push((n as f64, avg));
        }
    }
    finish_regression(HurstMethod::RsAnalysis, points, len)
}

/// Rescaled adjusted range with [`DEFAULT_BLOCKS`] block starts.
pub fn estimate_rescaled_range(
    series: &[f64],
    lags: &[usize],
) -> Result<HurstEstimate, HurstError> {
    estimate_rescaled_range_with_blocks(series, lags, DEFAULT_BLOCKS)
}

/// Rescaled adjusted range: block starts `t_i = M(i−1)` with `M = floor(N/K)`;
/// for each lag `r` every start with `t_i + r ≤ N` yields one `R/S` sample.
/// `log` of the mean sample is regressed on `log r`.
pub fn estimate_rescaled_range_with_blocks(
    series: &[f64],
    lags: &[usize],
    blocks: usize,
) -> Result<HurstEstimate, HurstError> {
    check_len(series)?;
    if blocks == 0 {
        return Err(HurstError::InvalidArgument(
            "number of blocks must be positive".into(),
        ));
    }
    let len = series.len();
    let block_len = (len / blocks).max(1);
    let mut points = Vec::new();
    for &r in lags {
        if r < MIN_WINDOW || r > len {
            continue;
        }
        let stats: Vec<f64> = (0..blocks)
            .map(|i| i * block_len)
            .filter(|&start| start + r <= len)
            .filter_map(|start| rescaled_range(&series[start..start + r]))
            .collect();
        if stats.is_empty() {
            continue;
        }
        let avg = stats.iter().sum::<f64>() / stats.len() as f64;
        if avg > 0.0 {
            points.push((r as f64, avg));
        }
    }
    finish_regression(HurstMethod::RescaledRange, points, len)
}

fn finish_regression(
    method: HurstMethod,
    points: Vec<(f64, f64)>,
    len: usize,
) -> Result<HurstEstimate, HurstError> {
    if points.len() < 2 {
        return Err(HurstError::InsufficientData(format!(
            "{} usable window sizes, need at least 2",
            points.len()
        )));
    }
    let slope = log_log_slope(&points);
    if !slope.is_finite() {
        return Err(HurstError::NumericalDegeneracy(
            "non-finite regression slope".into(),
        ));
    }
    Ok(HurstEstimate::new(method, slope, points.len(), points, len))
}

/// Periodogram `I(λ_j) = |Σ_t X_t e^{iλ_j t}|² / (2πN)` at the Fourier
/// frequencies `λ_j = 2πj/N`, `j = 1..=floor(N/2)`.
pub fn periodogram(series: &[f64]) -> Result<Vec<(f64, f64)>, HurstError> {
    let n = series.len();
    if n < 2 {
        return Err(HurstError::InsufficientData(format!(
            "periodogram needs at least 2 points, got {n}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let norm = 2.0 * PI * n as f64;
    Ok((1..=n / 2)
        .map(|j| (2.0 * PI * j as f64 / n as f64, buf[j].norm_sqr() / norm))
        .collect())
}

/// Local Whittle objective with the scale `c` profiled out:
/// `R(H) = ln(mean_j I_j λ_j^{2H−1}) − (2H−1) mean_j ln λ_j`.
pub fn whittle_objective(pgram: &[(f64, f64)], h: f64) -> f64 {
    let m = pgram.len() as f64;
    let e = 2.0 * h - 1.0;
    let c_hat = pgram.iter().map(|(lam, i)| i * lam.powf(e)).sum::<f64>() / m;
    let mean_log = pgram.iter().map(|(lam, _)| lam.ln()).sum::<f64>() / m;
    c_hat.ln() - e * mean_log
}

/// Local Whittle estimate using the lowest `m` Fourier frequencies
/// (`None` selects [`default_bandwidth`]).
pub fn estimate_local_whittle(
    series: &[f64],
    bandwidth: Option<usize>,
) -> Result<HurstEstimate, HurstError> {
    let len = series.len();
    if series.iter().any(|x| !x.is_finite()) {
        return Err(HurstError::InvalidArgument(
            "series contains non-finite values".into(),
        ));
    }
    let m = bandwidth.unwrap_or_else(|| default_bandwidth(len));
    if m < 2 || m > len / 2 {
        return Err(HurstError::InvalidArgument(format!(
            "bandwidth m = {m} must satisfy 2 <= m <= N/2 = {}",
            len / 2
        )));
    }
    let pgram = periodogram(series)?;
    let low = &pgram[..m];
    let peak = pgram.iter().map(|p| p.1).fold(0.0, f64::max);
    let energy: f64 = series.iter().map(|x| x * x).sum();
    if peak <= 1e-24 * energy.max(f64::MIN_POSITIVE) || low.iter().all(|p| p.1 == 0.0) {
        return Err(HurstError::InsufficientData(
            "periodogram vanishes (constant input)".into(),
        ));
    }
    let h = golden_section(
        |h| whittle_objective(low, h),
        WHITTLE_BRACKET.0,
        WHITTLE_BRACKET.1,
        WHITTLE_TOL,
    )?;
    Ok(HurstEstimate::new(
        HurstMethod::LocalWhittle,
        h,
        m,
        Vec::new(),
        len,
    ))
}

fn golden_section<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<f64, HurstError> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if !fc.is_finite() || !fd.is_finite() {
            return Err(HurstError::NumericalDegeneracy(
                "non-finite Whittle objective".into(),
            ));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Estimates from every method over sliding windows of `window` points,
/// advancing by `step`. A failed estimate is recorded as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingComparison {
    pub start: usize,
    pub end: usize,
    pub rs_analysis: Option<f64>,
    pub rescaled_range: Option<f64>,
    pub local_whittle: Option<f64>,
}

pub fn compare_sliding(
    series: &[f64],
    window: usize,
    step: usize,
) -> Result<Vec<SlidingComparison>, HurstError> {
    if window < MIN_SERIES_LEN || window > series.len() || step == 0 {
        return Err(HurstError::InvalidArgument(format!(
            "window {window} / step {step} invalid for a series of length {}",
            series.len()
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= series.len() {
        let w = &series[start..start + window];
        let get = |m| estimate(m, w).ok().map(|e| e.value);
        out.push(SlidingComparison {
            start,
            end: start + window,
            rs_analysis: get(HurstMethod::RsAnalysis),
            rescaled_range: get(HurstMethod::RescaledRange),
            local_whittle: get(HurstMethod::LocalWhittle),
        });
        start += step;
    }
    Ok(out)
}
