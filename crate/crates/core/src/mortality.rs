//! Log-hazard model `h(t) = h₀ exp(α₀t + α₁Y_t)` with an fOU residual `Y`.
//!
//! Fitting runs on the unscaled residual `ln h(t) − ln h₀ − α₀t` (so `α₁ = 1`
//! while estimating); the fitted model then carries `α₁ = T^{−H}` for
//! simulation, where `T` is the number of years spanned by the fit.

use std::fmt;
use std::fmt::Write as _;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MortalityError, QgvError};
use crate::fgn::{FgnSampler, HurstIndex};
use crate::fou::{integrate_noise, FouParams};
use crate::hurst::{self, HurstEstimate, HurstMethod};
use crate::qgv::{self, Filter, QgvEstimates};

/// Shortest cohort accepted by [`fit_model`].
pub const MIN_FIT_LEN: usize = 16;
/// Largest Hurst index a fitted model may carry.
pub const MAX_MODEL_HURST: f64 = 0.99;
pub const DEFAULT_N_PATHS: usize = 10_000;
pub const DEFAULT_COVERAGE: f64 = 0.955;
/// Survival integrals use a monthly grid.
pub const SURVIVAL_STEPS_PER_YEAR: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    Total,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::Female, Sex::Male, Sex::Total];

    /// Single-letter code `F`, `M` or `T`.
    pub fn code(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
            Sex::Total => "T",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Sex {
    type Err = MortalityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Sex::Female),
            "m" | "male" => Ok(Sex::Male),
            "t" | "total" => Ok(Sex::Total),
            _ => Err(MortalityError::InvalidArgument(format!(
                "unknown sex {s:?}"
            ))),
        }
    }
}

/// Annual death rates of one age and sex over consecutive calendar years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSeries {
    pub age: u32,
    pub sex: Sex,
    pub years: Vec<i32>,
    pub rates: Vec<f64>,
}

impl CohortSeries {
    pub fn new(
        age: u32,
        sex: Sex,
        years: Vec<i32>,
        rates: Vec<f64>,
    ) -> Result<Self, MortalityError> {
        let s = CohortSeries {
            age,
            sex,
            years,
            rates,
        };
        s.validate()?;
        Ok(s)
    }

    /// Series starting at `first_year` with one rate per year.
    pub fn from_rates(
        age: u32,
        sex: Sex,
        first_year: i32,
        rates: Vec<f64>,
    ) -> Result<Self, MortalityError> {
        let years = (0..rates.len()).map(|i| first_year + i as i32).collect();
        CohortSeries::new(age, sex, years, rates)
    }

    pub fn validate(&self) -> Result<(), MortalityError> {
        if self.years.len() != self.rates.len() {
            return Err(MortalityError::InvalidSeries(format!(
                "{} years but {} rates",
                self.years.len(),
                self.rates.len()
            )));
        }
        if self.years.is_empty() {
            return Err(MortalityError::InvalidSeries("series is empty".into()));
        }
        if let Some(w) = self.years.windows(2).find(|w| w[1] != w[0] + 1) {
            return Err(MortalityError::InvalidSeries(format!(
                "years must be contiguous, found {} followed by {}",
                w[0], w[1]
            )));
        }
        if let Some((i, r)) = self
            .rates
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r > 0.0 && r.is_finite()))
        {
            return Err(MortalityError::InvalidSeries(format!(
                "rate for {} must be positive and finite, got {r}",
                self.years[i]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Years spanned, `T = len − 1`.
    pub fn horizon(&self) -> f64 {
        (self.len() - 1) as f64
    }

    pub fn log_rates(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.ln()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha0Fit {
    pub h0: f64,
    pub alpha0: f64,
}

/// `h₀` is the first observed rate and
/// `α̂₀ = Σ t (ln h(t) − ln h₀) / Σ t²` over `t = 0..T`.
pub fn fit_alpha0(series: &CohortSeries) -> Result<Alpha0Fit, MortalityError> {
    series.validate()?;
    if series.len() < 2 {
        return Err(MortalityError::InvalidSeries(
            "drift needs at least two observations".into(),
        ));
    }
    let h0 = series.rates[0];
    let ln_h0 = h0.ln();
    let (mut num, mut den) = (0.0, 0.0);
    for (t, r) in series.rates.iter().enumerate() {
        let t = t as f64;
        num += t * (r.ln() - ln_h0);
        den += t * t;
    }
    Ok(Alpha0Fit {
        h0,
        alpha0: num / den,
    })
}

/// `Ŷ_t = ln h(t) − ln h₀ − α₀ t`.
pub fn residuals(series: &CohortSeries, fit: &Alpha0Fit) -> Vec<f64> {
    let ln_h0 = fit.h0.ln();
    series
        .rates
        .iter()
        .enumerate()
        .map(|(t, r)| r.ln() - ln_h0 - fit.alpha0 * t as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFields")]
pub struct MortalityModel {
    pub age: u32,
    pub sex: Sex,
    pub h0: f64,
    pub alpha0: f64,
    /// `T^{−H}`.
    pub alpha1: f64,
    pub hurst: HurstIndex,
    pub sigma: f64,
    pub lambda: f64,
    /// `T`, years spanned by the fit.
    pub horizon: f64,
    pub fit_window: (i32, i32),
}

#[derive(Deserialize)]
struct ModelFields {
    age: u32,
    sex: Sex,
    h0: f64,
    alpha0: f64,
    alpha1: f64,
    hurst: HurstIndex,
    sigma: f64,
    lambda: f64,
    horizon: f64,
    fit_window: (i32, i32),
}

impl TryFrom<ModelFields> for MortalityModel {
    type Error = MortalityError;
    fn try_from(f: ModelFields) -> Result<Self, MortalityError> {
        let m = MortalityModel {
            age: f.age,
            sex: f.sex,
            h0: f.h0,
            alpha0: f.alpha0,
            alpha1: f.alpha1,
            hurst: f.hurst,
            sigma: f.sigma,
            lambda: f.lambda,
            horizon: f.horizon,
            fit_window: f.fit_window,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Parameters of a model apart from the cohort labels and `α₁`, which is
/// derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub h0: f64,
    pub alpha0: f64,
    pub hurst: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub horizon: f64,
}

impl MortalityModel {
    pub fn new(
        age: u32,
        sex: Sex,
        params: ModelParams,
        fit_window: (i32, i32),
    ) -> Result<Self, MortalityError> {
        let hurst = HurstIndex::new(params.hurst)?;
        let m = MortalityModel {
            age,
            sex,
            h0: params.h0,
            alpha0: params.alpha0,
            alpha1: params.horizon.powf(-params.hurst),
            hurst,
            sigma: params.sigma,
            lambda: params.lambda,
            horizon: params.horizon,
            fit_window,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MortalityError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(MortalityError::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("h0", self.h0)?;
        positive("sigma", self.sigma)?;
        positive("lambda", self.lambda)?;
        positive("horizon", self.horizon)?;
        positive("alpha1", self.alpha1)?;
        if !self.alpha0.is_finite() {
            return Err(MortalityError::InvalidArgument(format!(
                "alpha0 must be finite, got {}",
                self.alpha0
            )));
        }
        let h = self.hurst.value();
        if !(0.5..1.0).contains(&h) {
            return Err(MortalityError::InvalidArgument(format!(
                "model Hurst index must lie in [0.5, 1), got {h}"
            )));
        }
        if (self.alpha1 * self.horizon.powf(h) - 1.0).abs() > 1e-12 {
            return Err(MortalityError::InvalidArgument(format!(
                "alpha1 = {} is not horizon^-H = {}",
                self.alpha1,
                self.horizon.powf(-h)
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            h0: self.h0,
            alpha0: self.alpha0,
            hurst: self.hurst.value(),
            sigma: self.sigma,
            lambda: self.lambda,
            horizon: self.horizon,
        }
    }

    /// The same model with a different Hurst index and `α₁` recomputed.
    pub fn with_hurst(&self, h: f64) -> Result<Self, MortalityError> {
        MortalityModel::new(
            self.age,
            self.sex,
            ModelParams {
                hurst: h,
                ..self.params()
            },
            self.fit_window,
        )
    }

    /// Residual dynamics on the given mesh.
    pub fn fou_params(&self, mesh: f64) -> Result<FouParams, MortalityError> {
        Ok(FouParams::new(self.lambda, self.sigma, self.hurst, mesh)?)
    }

    /// `h₀ exp(α₀t + α₁y)`.
    #[inline]
    pub fn hazard(&self, t: f64, y: f64) -> f64 {
        self.h0 * (self.alpha0 * t + self.alpha1 * y).exp()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MortalityError> {
        serde_json::from_str(s)
            .map_err(|e| MortalityError::InvalidArgument(format!("model JSON: {e}")))
    }
}

/// A fitted model together with the intermediate estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: MortalityModel,
    pub hurst_estimate: HurstEstimate,
    /// Hurst value before clamping into the model range.
    pub raw_hurst: f64,
    pub qgv: QgvEstimates,
    pub warnings: Vec<String>,
}

/// Fit `(h₀, α₀)`, then the residual dynamics.
///
/// `H` comes from `hurst_method` on the residuals and is clamped into
/// `[0.5, 0.99]`. `σ` and `λ` come from the quadratic-variation estimators on
/// the residuals at unit mesh; `λ` is always computed and a warning records
/// when `Ĥ_N` lies outside the range where that estimator is consistent. If
/// that still yields no positive finite `λ`, both `σ` and `λ` are evaluated
/// at the model's `H`, which matches the simulated stationary second moment
/// to the observed one.
pub fn fit_model(
    series: &CohortSeries,
    hurst_method: HurstMethod,
    filter: &Filter,
) -> Result<FitReport, MortalityError> {
    series.validate()?;
    if series.len() < MIN_FIT_LEN {
        return Err(MortalityError::InvalidSeries(format!(
            "fit needs at least {MIN_FIT_LEN} years, got {}",
            series.len()
        )));
    }
    let a0 = fit_alpha0(series)?;
    let resid = residuals(series, &a0);
    let scale = series
        .log_rates()
        .iter()
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let rms = (resid.iter().map(|y| y * y).sum::<f64>() / resid.len() as f64).sqrt();
    if rms <= 1e-10 * scale {
        return Err(QgvError::InsufficientVariation(format!(
            "residuals vanish (rms {rms:e}); series is exactly log-linear"
        ))
        .into());
    }

    let mut warnings = Vec::new();
    let est = hurst::estimate(hurst_method, &resid)?;
    let raw_hurst = est.value;
    let h = if !raw_hurst.is_finite() {
        return Err(MortalityError::InvalidArgument(format!(
            "{} produced a non-finite Hurst estimate",
            hurst_method.name()
        )));
    } else if raw_hurst < 0.5 {
        warnings.push(format!(
            "hurst estimate {raw_hurst:.4} below 0.5; clamped to 0.5"
        ));
        0.5
    } else if raw_hurst > MAX_MODEL_HURST {
        warnings.push(format!(
            "hurst estimate {raw_hurst:.4} above {MAX_MODEL_HURST}; clamped to {MAX_MODEL_HURST}"
        ));
        MAX_MODEL_HURST
    } else {
        raw_hurst
    };

    let q = qgv::estimate_all(&resid, filter, 1.0, true)?;
    warnings.extend(q.warnings.iter().cloned());
    let usable = |v: f64| v > 0.0 && v.is_finite();
    let (sigma, lambda) = match q.lambda_hat {
        Some(l) if usable(l) && usable(q.sigma_hat) => (q.sigma_hat, l),
        _ => {
            // Ĥ_N is far from the model range (typical when λΔ is large);
            // evaluate both estimators at the model's H instead.
            warnings.push(format!(
                "h_hat = {:.4} gives no usable lambda; sigma and lambda evaluated at H = {h:.4} from {}",
                q.h_hat,
                hurst_method.name()
            ));
            let v1 = qgv::mean_quadratic_variation(&resid, filter)?;
            let s = qgv::sigma_given_h(v1, filter, 1.0, h)?;
            (s, qgv::lambda_from_moment(q.mu2_hat, h, s)?)
        }
    };
    if !(sigma > 0.0 && sigma.is_finite() && lambda > 0.0 && lambda.is_finite()) {
        return Err(MortalityError::InvalidArgument(format!(
            "estimated sigma = {sigma}, lambda = {lambda} are not usable"
        )));
    }
    let fit_window = (series.years[0], *series.years.last().expect("non-empty"));
    let model = MortalityModel::new(
        series.age,
        series.sex,
        ModelParams {
            h0: a0.h0,
            alpha0: a0.alpha0,
            hurst: h,
            sigma,
            lambda,
            horizon: series.horizon(),
        },
        fit_window,
    )?;
    Ok(FitReport {
        model,
        hurst_estimate: est,
        raw_hurst,
        qgv: q,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// `mean ± 2·sd`, lower edge floored at the smallest simulated value.
    TwoSigma,
    /// Empirical quantiles at `(1 ∓ coverage)/2`.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub n_years: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub coverage: f64,
    /// Use empirical quantiles even at the default coverage.
    pub quantile_band: bool,
}

impl ForecastConfig {
    pub fn new(n_years: usize, seed: u64) -> Self {
        ForecastConfig {
            n_years,
            n_paths: DEFAULT_N_PATHS,
            seed,
            coverage: DEFAULT_COVERAGE,
            quantile_band: false,
        }
    }

    /// Two-sigma bands at the default coverage, quantile bands otherwise.
    pub fn band_kind(&self) -> BandKind {
        if self.quantile_band || self.coverage != DEFAULT_COVERAGE {
            BandKind::Quantile
        } else {
            BandKind::TwoSigma
        }
    }

    fn validate(&self) -> Result<(), MortalityError> {
        if self.n_years == 0 || self.n_paths == 0 {
            return Err(MortalityError::InvalidArgument(
                "n_years and n_paths must be at least 1".into(),
            ));
        }
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return Err(MortalityError::InvalidArgument(format!(
                "coverage must lie in (0, 1), got {}",
                self.coverage
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBand {
    pub years: Vec<i32>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_paths: usize,
    pub coverage: f64,
    pub kind: BandKind,
    pub seed: u64,
}

impl ForecastBand {
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }

    /// CSV with header `year,mean,lower,upper`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("year,mean,lower,upper\n");
        for i in 0..self.years.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.years[i], self.mean[i], self.lower[i], self.upper[i]
            );
        }
        out
    }

    pub fn contains(&self, i: usize, value: f64) -> bool {
        self.lower[i] <= value && value <= self.upper[i]
    }
}

/// Seed of path `i` in a run seeded with `seed`.
#[inline]
pub fn path_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// Residual paths `Y` on the annual grid `t = 0..n_years`, one per row.
pub fn simulate_residual_paths(
    model: &MortalityModel,
    n_years: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, MortalityError> {
    let params = model.fou_params(1.0)?;
    let sampler = FgnSampler::new(model.hurst, n_years.saturating_sub(1).max(1), 1.0)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let noise = sampler.sample(path_seed(seed, i));
            let mut y = integrate_noise(&params, 0.0, &noise.increments);
            y.truncate(n_years);
            y
        })
        .collect())
}

/// Hazard paths on the annual grid, one per row.
pub fn simulate_hazard_paths(
    model: &MortalityModel,
    n_years: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, MortalityError> {
    let mut paths = simulate_residual_paths(model, n_years, n_paths, seed)?;
    paths.par_iter_mut().for_each(|row| {
        for (t, v) in row.iter_mut().enumerate() {
            *v = model.hazard(t as f64, *v);
        }
    });
    Ok(paths)
}

/// Simulate `n_paths` hazard paths and summarise them year by year.
pub fn forecast(
    model: &MortalityModel,
    config: &ForecastConfig,
) -> Result<ForecastBand, MortalityError> {
    config.validate()?;
    let paths = simulate_hazard_paths(model, config.n_years, config.n_paths, config.seed)?;
    Ok(summarize_paths(
        &paths,
        model.fit_window.0,
        config.coverage,
        config.band_kind(),
        config.seed,
    ))
}

/// Per-year band over paths stored one per row. Sums run in a fixed
/// pairwise order so the result does not depend on how paths were produced.
pub fn summarize_paths(
    paths: &[Vec<f64>],
    first_year: i32,
    coverage: f64,
    kind: BandKind,
    seed: u64,
) -> ForecastBand {
    let n_paths = paths.len();
    let n_years = paths.first().map_or(0, Vec::len);
    let mut band = ForecastBand {
        years: (0..n_years).map(|t| first_year + t as i32).collect(),
        mean: Vec::with_capacity(n_years),
        lower: Vec::with_capacity(n_years),
        upper: Vec::with_capacity(n_years),
        n_paths,
        coverage,
        kind,
        seed,
    };
    let mut column = vec![0.0; n_paths];
    for t in 0..n_years {
        for (c, row) in column.iter_mut().zip(paths) {
            *c = row[t];
        }
        let mean = shifted_mean(&column);
        let (lo, hi) = match kind {
            BandKind::TwoSigma => {
                let sd = sample_sd(&column, mean);
                let min = column.iter().copied().fold(f64::INFINITY, f64::min);
                ((mean - 2.0 * sd).max(min), mean + 2.0 * sd)
            }
            BandKind::Quantile => {
                column.sort_by(f64::total_cmp);
                let lo = quantile_sorted(&column, 0.5 * (1.0 - coverage));
                let hi = quantile_sorted(&column, 0.5 * (1.0 + coverage));
                (lo.min(mean), hi.max(mean))
            }
        };
        band.mean.push(mean);
        band.lower.push(lo);
        band.upper.push(hi);
    }
    band
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Mean computed about the first value, exact when all values agree.
pub fn shifted_mean(xs: &[f64]) -> f64 {
    let Some(&first) = xs.first() else {
        return f64::NAN;
    };
    let dev: Vec<f64> = xs.iter().map(|x| x - first).collect();
    first + pairwise_sum(&dev) / xs.len() as f64
}

/// Sample standard deviation (divisor `n − 1`; zero for a single value).
pub fn sample_sd(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data (`(n−1)p` convention).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub t: f64,
    pub horizon: f64,
    /// Monte Carlo mean of `exp(−∫ₜ^horizon h du)`.
    pub estimate: f64,
    pub std_error: f64,
    /// Monte Carlo mean of `∫ₜ^horizon h du`.
    pub mean_integrated_hazard: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub t: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Residual value `Y_t` the simulation restarts from; zero at `t = 0`.
    pub start: f64,
}

/// Survival probability over `[t, horizon]`.
pub fn survival_probability(
    model: &MortalityModel,
    horizon: f64,
    config: &SurvivalConfig,
) -> Result<SurvivalEstimate, MortalityError> {
    Ok(survival_curve(model, &[horizon], config)?[0])
}

/// Survival probabilities for several horizons from the same simulated
/// paths, so the estimates are nonincreasing in the horizon.
///
/// Each path restarts the residual from `config.start` at time `t` and runs on
/// a monthly grid; the memory of the path before `t` is ignored. Integrals
/// use the trapezoid rule, with the last segment cut at the horizon and the
/// hazard there interpolated linearly.
pub fn survival_curve(
    model: &MortalityModel,
    horizons: &[f64],
    config: &SurvivalConfig,
) -> Result<Vec<SurvivalEstimate>, MortalityError> {
    let t0 = config.t;
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(MortalityError::InvalidArgument(format!(
            "t must be non-negative, got {t0}"
        )));
    }
    if horizons.is_empty() || horizons.iter().any(|&h| !(h > t0 && h.is_finite())) {
        return Err(MortalityError::InvalidArgument(format!(
            "horizons must be finite and exceed t = {t0}"
        )));
    }
    if config.n_paths == 0 {
        return Err(MortalityError::InvalidArgument(
            "n_paths must be at least 1".into(),
        ));
    }
    if !config.start.is_finite() {
        return Err(MortalityError::InvalidArgument(
            "start value must be finite".into(),
        ));
    }
    let mesh = 1.0 / SURVIVAL_STEPS_PER_YEAR as f64;
    let longest = horizons.iter().copied().fold(t0, f64::max);
    let n_steps = (((longest - t0) / mesh) - 1e-9).ceil().max(1.0) as usize;
    let params = model.fou_params(mesh)?;
    let sampler = FgnSampler::new(model.hurst, n_steps, mesh)?;

    // integrals[i][j]: path i, horizon j
    let integrals: Vec<Vec<f64>> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let noise = sampler.sample(path_seed(config.seed, i));
            let y = integrate_noise(&params, config.start, &noise.increments);
            let hz: Vec<f64> = y
                .iter()
                .enumerate()
                .map(|(k, &v)| model.hazard(t0 + k as f64 * mesh, v))
                .collect();
            horizons
                .iter()
                .map(|&h| trapezoid_to(&hz, mesh, h - t0))
                .collect()
        })
        .collect();

    let n = config.n_paths as f64;
    let mut out = Vec::with_capacity(horizons.len());
    for (j, &h) in horizons.iter().enumerate() {
        let ints: Vec<f64> = integrals.iter().map(|row| row[j]).collect();
        let surv: Vec<f64> = ints.iter().map(|x| (-x).exp()).collect();
        let estimate = shifted_mean(&surv);
        out.push(SurvivalEstimate {
            t: t0,
            horizon: h,
            estimate,
            std_error: sample_sd(&surv, estimate) / n.sqrt(),
            mean_integrated_hazard: shifted_mean(&ints),
            n_paths: config.n_paths,
        });
    }
    Ok(out)
}

/// Trapezoid integral of grid values `f` (spacing `mesh`) over `[0, length]`.
fn trapezoid_to(f: &[f64], mesh: f64, length: f64) -> f64 {
    let full = ((length / mesh) + 1e-9).floor() as usize;
    let full = full.min(f.len() - 1);
    let mut acc = 0.0;
    for k in 0..full {
        acc += 0.5 * mesh * (f[k] + f[k + 1]);
    }
    let rest = length - full as f64 * mesh;
    if rest > 1e-12 && full + 1 < f.len() {
        let end = f[full] + (f[full + 1] - f[full]) * rest / mesh;
        acc += 0.5 * rest * (f[full] + end);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(rates: Vec<f64>) -> CohortSeries {
        CohortSeries::from_rates(50, Sex::Female, 1950, rates).unwrap()
    }

    fn model(h0: f64, alpha0: f64, h: f64, sigma: f64, lambda: f64) -> MortalityModel {
        MortalityModel::new(
            50,
            Sex::Female,
            ModelParams {
                h0,
                alpha0,
                hurst: h,
                sigma,
                lambda,
                horizon: 54.0,
            },
            (1950, 2004),
        )
        .unwrap()
    }

    #[test]
    fn series_validation() {
        assert!(CohortSeries::new(0, Sex::Male, vec![1950, 1952], vec![0.1, 0.1]).is_err());
        assert!(CohortSeries::new(0, Sex::Male, vec![1950, 1951], vec![0.1, 0.0]).is_err());
        assert!(CohortSeries::new(0, Sex::Male, vec![1950], vec![0.1, 0.2]).is_err());
        assert!(CohortSeries::new(0, Sex::Male, vec![1950, 1951], vec![0.1, 0.2]).is_ok());
    }

    #[test]
    fn sex_codes() {
        for s in Sex::ALL {
            assert_eq!(s.code().parse::<Sex>().unwrap(), s);
        }
        assert_eq!("female".parse::<Sex>().unwrap(), Sex::Female);
        assert!("x".parse::<Sex>().is_err());
    }

    #[test]
    fn alpha0_exact_exponential() {
        let s = series((0..55).map(|t| 0.01 * (0.1 * t as f64).exp()).collect());
        let fit = fit_alpha0(&s).unwrap();
        assert!((fit.alpha0 - 0.1).abs() < 1e-12);
        assert_eq!(fit.h0, 0.01);
        assert!(residuals(&s, &fit).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn alpha0_hand_example() {
        let s = series(vec![1.0, 0.1f64.exp(), 0.2f64.exp()]);
        let fit = fit_alpha0(&s).unwrap();
        assert_relative_eq!(fit.alpha0, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn alpha0_shift_invariant() {
        let base: Vec<f64> = (0..20)
            .map(|t| 0.02 * (1.0 + 0.3 * ((t * 7 % 5) as f64)))
            .collect();
        let a = fit_alpha0(&series(base.clone())).unwrap().alpha0;
        let b = fit_alpha0(&series(base.iter().map(|r| r * 3.0f64.exp()).collect()))
            .unwrap()
            .alpha0;
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn alpha0_rejects_single_observation() {
        assert!(fit_alpha0(&series(vec![0.1])).is_err());
    }

    #[test]
    fn residuals_reproduce_planted_noise() {
        let y: Vec<f64> = (0..30)
            .map(|t| if t == 0 { 0.0 } else { 0.1 * (t as f64).sin() })
            .collect();
        let (h0, a0) = (0.02, -0.01);
        let s = series(
            y.iter()
                .enumerate()
                .map(|(t, v)| h0 * (a0 * t as f64 + v).exp())
                .collect(),
        );
        let r = residuals(&s, &Alpha0Fit { h0, alpha0: a0 });
        for (a, b) in r.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn noiseless_fit_reports_insufficient_variation() {
        let s = series((0..55).map(|t| 0.01 * (0.02 * t as f64).exp()).collect());
        let err = fit_model(
            &s,
            HurstMethod::RescaledRange,
            &qgv::classical_filter(2).unwrap(),
        )
        .unwrap_err();
        assert!(
            matches!(err, MortalityError::Qgv(QgvError::InsufficientVariation(_))),
            "{err:?}"
        );
    }

    #[test]
    fn fit_too_short() {
        let s = series((0..10).map(|t| 0.01 + 0.001 * (t % 3) as f64).collect());
        assert!(matches!(
            fit_model(
                &s,
                HurstMethod::RsAnalysis,
                &qgv::classical_filter(2).unwrap()
            ),
            Err(MortalityError::InvalidSeries(_))
        ));
    }

    #[test]
    fn model_alpha1_definition() {
        let m = model(0.01, 0.02, 0.7, 0.3, 0.5);
        assert!((m.alpha1 * m.horizon.powf(0.7) - 1.0).abs() < 1e-12);
        assert!(MortalityModel::new(
            0,
            Sex::Male,
            ModelParams {
                hurst: 0.4,
                ..m.params()
            },
            (0, 1)
        )
        .is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = model(0.01, -0.02, 0.7, 0.3, 0.5);
        let back = MortalityModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let bad = m.to_json().replace("\"sigma\": 0.3", "\"sigma\": -0.3");
        assert!(MortalityModel::from_json(&bad).is_err());
    }

    #[test]
    fn vanishing_noise_collapses_to_drift() {
        let m = model(0.01, 0.02, 0.7, 1e-12, 0.5);
        let mut cfg = ForecastConfig::new(30, 5);
        cfg.n_paths = 200;
        let band = forecast(&m, &cfg).unwrap();
        for (t, ((mean, lo), hi)) in band
            .mean
            .iter()
            .zip(&band.lower)
            .zip(&band.upper)
            .enumerate()
        {
            let drift = 0.01 * (0.02 * t as f64).exp();
            assert_relative_eq!(*mean, drift, max_relative = 1e-9);
            assert!(hi - lo < 1e-9 * mean);
        }
    }

    #[test]
    fn first_year_is_h0() {
        let m = model(0.013, 0.0, 0.7, 0.3, 0.5);
        let mut cfg = ForecastConfig::new(10, 1);
        cfg.n_paths = 100;
        let band = forecast(&m, &cfg).unwrap();
        assert_eq!(band.mean[0], 0.013);
        assert_eq!(band.years[0], 1950);
        assert_eq!(band.years.len(), 10);
    }

    #[test]
    fn forecast_is_deterministic() {
        let m = model(0.01, -0.02, 0.7, 0.3, 0.5);
        let mut cfg = ForecastConfig::new(20, 42);
        cfg.n_paths = 500;
        let a = forecast(&m, &cfg).unwrap();
        let b = forecast(&m, &cfg).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        cfg.seed = 43;
        assert_ne!(forecast(&m, &cfg).unwrap().mean, a.mean);
    }

    #[test]
    fn band_kinds() {
        let m = model(0.01, -0.02, 0.7, 0.3, 0.5);
        let mut cfg = ForecastConfig::new(20, 42);
        cfg.n_paths = 400;
        assert_eq!(cfg.band_kind(), BandKind::TwoSigma);
        cfg.coverage = 0.9;
        assert_eq!(cfg.band_kind(), BandKind::Quantile);
        let band = forecast(&m, &cfg).unwrap();
        for i in 0..band.years.len() {
            assert!(band.lower[i] > 0.0);
            assert!(band.lower[i] <= band.mean[i] && band.mean[i] <= band.upper[i]);
        }
        cfg.coverage = 1.0;
        assert!(forecast(&m, &cfg).is_err());
    }

    #[test]
    fn single_year_forecast() {
        let m = model(0.01, -0.02, 0.7, 0.3, 0.5);
        let mut cfg = ForecastConfig::new(1, 0);
        cfg.n_paths = 10;
        let band = forecast(&m, &cfg).unwrap();
        assert_eq!(band.mean, vec![0.01]);
    }

    #[test]
    fn quantile_and_sums() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 2.5);
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_relative_eq!(sample_sd(&[1.0, 3.0], 2.0), 2f64.sqrt());
    }

    #[test]
    fn constant_hazard_closed_form() {
        let m = model(0.02, 0.0, 0.7, 1e-12, 0.5);
        let cfg = SurvivalConfig {
            t: 0.0,
            n_paths: 50,
            seed: 3,
            start: 0.0,
        };
        for h in [0.3, 1.0, 7.25, 20.0] {
            let s = survival_probability(&m, h, &cfg).unwrap();
            assert!(
                (s.estimate - (-0.02 * h).exp()).abs() < 1e-9,
                "{h}: {}",
                s.estimate
            );
        }
        let later = SurvivalConfig { t: 5.0, ..cfg };
        let s = survival_probability(&m, 15.0, &later).unwrap();
        assert!((s.estimate - (-0.2f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn tiny_hazard_survives() {
        let m = model(1e-14, 0.0, 0.7, 0.3, 0.5);
        let cfg = SurvivalConfig {
            t: 0.0,
            n_paths: 50,
            seed: 3,
            start: 0.0,
        };
        let s = survival_probability(&m, 10.0, &cfg).unwrap();
        assert!((s.estimate - 1.0).abs() < 1e-10);
    }

    #[test]
    fn survival_curve_monotone_and_bounded() {
        let m = model(0.05, 0.03, 0.7, 0.5, 0.5);
        let cfg = SurvivalConfig {
            t: 2.0,
            n_paths: 300,
            seed: 11,
            start: 0.1,
        };
        let hs = [2.5, 3.0, 4.2, 8.0, 12.0, 30.0];
        let curve = survival_curve(&m, &hs, &cfg).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].estimate <= w[0].estimate);
        }
        for s in &curve {
            assert!(s.estimate > 0.0 && s.estimate <= 1.0);
            // Jensen: E[e^{-X}] ≥ e^{-E[X]}
            assert!(s.estimate >= (-s.mean_integrated_hazard).exp() - 2.0 * s.std_error);
        }
        assert!(survival_curve(&m, &[1.0], &cfg).is_err());
    }

    #[test]
    fn trapezoid_partial_segment() {
        // f(x) = x on a grid of spacing 0.5
        let f = [0.0, 0.5, 1.0, 1.5];
        assert_relative_eq!(trapezoid_to(&f, 0.5, 1.2), 0.72, epsilon = 1e-12);
        assert_relative_eq!(trapezoid_to(&f, 0.5, 1.5), 1.125, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn residual_round_trip(
            ln_rates in prop::collection::vec(-9.0f64..0.0, 2..60),
        ) {
            let s = series(ln_rates.iter().map(|x| x.exp()).collect());
            let fit = fit_alpha0(&s).unwrap();
            let r = residuals(&s, &fit);
            for (t, (y, l)) in r.iter().zip(s.log_rates()).enumerate() {
                let back = fit.h0.ln() + fit.alpha0 * t as f64 + y;
                prop_assert!((back - l).abs() <= 1e-12 * (1.0 + l.abs()));
            }
        }

        #[test]
        fn hazards_positive(seed in 0u64..1000, sigma in 0.01f64..2.0, h in 0.5f64..0.95) {
            let m = model(0.01, -0.05, h, sigma, 0.7);
            let paths = simulate_hazard_paths(&m, 25, 8, seed).unwrap();
            prop_assert!(paths.iter().flatten().all(|v| *v > 0.0 && v.is_finite()));
        }
    }
}
