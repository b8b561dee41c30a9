//! Fractional Ornstein–Uhlenbeck process `dY = −λY dt + σ dB^H`, `Y₀ = 0`.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::FouError;
use crate::fgn::{generate_fgn, FgnPath, HurstIndex};
use crate::quadrature;
use crate::special::gamma;

/// Relative accuracy requested from the variance quadrature.
pub const VARIANCE_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FouParams {
    pub lambda: f64,
    pub sigma: f64,
    pub hurst: HurstIndex,
    pub mesh: f64,
}

impl FouParams {
    pub fn new(lambda: f64, sigma: f64, hurst: HurstIndex, mesh: f64) -> Result<Self, FouError> {
        let p = FouParams {
            lambda,
            sigma,
            hurst,
            mesh,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FouError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(FouError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda", self.lambda)?;
        positive("sigma", self.sigma)?;
        positive("mesh", self.mesh)
    }

    /// Stationary second moment `σ²Γ(2H+1)/(2λ^{2H})`.
    pub fn stationary_variance(&self) -> f64 {
        let two_h = self.hurst.two_h();
        self.sigma * self.sigma * gamma(two_h + 1.0) / (2.0 * self.lambda.powf(two_h))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FouPath {
    pub params: FouParams,
    pub values: Vec<f64>,
    pub driving: FgnPath,
}

impl FouPath {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.params.mesh)
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }

    /// CSV with header `t,y`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,y\n");
        for (t, y) in self.times().zip(&self.values) {
            let _ = writeln!(out, "{t},{y}");
        }
        out
    }
}

/// Simulate `n_steps` steps of the fOU on the mesh in `params`.
///
/// Exponential-Euler recursion with the noise increment weighted at the
/// step midpoint: `Y_{i+1} = e^{−λΔ} Y_i + σ e^{−λΔ/2} (B_{i+1} − B_i)`.
pub fn simulate_fou(params: FouParams, n_steps: usize, seed: u64) -> Result<FouPath, FouError> {
    params.validate()?;
    let driving = generate_fgn(params.hurst, n_steps, params.mesh, seed)?;
    let values = integrate_noise(&params, 0.0, &driving.increments);
    Ok(FouPath {
        params,
        values,
        driving,
    })
}

/// Run the fOU recursion from `start` over the given driving increments.
/// Returns `increments.len() + 1` values beginning with `start`.
pub fn integrate_noise(params: &FouParams, start: f64, increments: &[f64]) -> Vec<f64> {
    let decay = (-params.lambda * params.mesh).exp();
    let weight = params.sigma * (-0.5 * params.lambda * params.mesh).exp();
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut y = start;
    values.push(y);
    for dx in increments {
        y = decay * y + weight * dx;
        values.push(y);
    }
    values
}

/// Variance of `Y_t` started from `Y₀ = 0`.
///
/// Integrating `∫₀ᵗ e^{−λ(t−u)} dB_u` by parts and collapsing the fBm
/// covariance gives the one-dimensional form
///
/// `Var(Y_t) = σ² [ t^{2H} e^{−λt} + (λ/2) ∫₀ᵗ r^{2H} (e^{−λr} − e^{−λ(2t−r)}) dr ]`,
///
/// whose integrand is non-negative and bounded. At `H = ½` it reduces to
/// `σ²(1 − e^{−2λt})/(2λ)` and as `t → ∞` it tends to
/// [`FouParams::stationary_variance`].
pub fn fou_variance(params: &FouParams, t: f64) -> Result<f64, FouError> {
    params.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(FouError::InvalidParameter(format!(
            "t must be finite and non-negative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let lam = params.lambda;
    let two_h = params.hurst.two_h();
    let integrand = |r: f64| {
        // e^{−λr} − e^{−λ(2t−r)} = e^{−λr}(1 − e^{−2λ(t−r)})
        r.powf(two_h) * (-lam * r).exp() * -(-2.0 * lam * (t - r)).exp_m1()
    };

    // The integrand peaks near r = 2H/λ and decays like e^{−λr}; integrate
    // piecewise on blocks of width 4/λ and stop once past the peak the
    // blocks no longer contribute.
    let block = 4.0 / lam;
    let mut integral = 0.0;
    let mut a = 0.0;
    while a < t {
        let b = (a + block).min(t);
        let piece =
            quadrature::integrate(integrand, a, b, VARIANCE_REL_TOL * 0.1, 0.0).map_err(|est| {
                FouError::Quadrature(format!("variance integral on [{a}, {b}] stalled at {est}"))
            })?;
        integral += piece;
        if a > two_h / lam && piece <= 1e-17 * integral {
            break;
        }
        a = b;
    }
    let head = t.powf(two_h) * (-lam * t).exp();
    Ok(params.sigma * params.sigma * (head + 0.5 * lam * integral))
}

/// Variance of `α₁Y_t` with `α₁ = T^{−H}` and its time-free bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledVariance {
    pub value: f64,
    /// `σ²(t/T)^{2H}`, itself at most `σ²`.
    pub bound: f64,
}

pub fn scaled_variance_bound(
    params: &FouParams,
    t: f64,
    horizon: f64,
) -> Result<ScaledVariance, FouError> {
    if !(horizon > 0.0) {
        return Err(FouError::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(FouError::InvalidParameter(format!(
            "t = {t} lies outside [0, {horizon}]"
        )));
    }
    let two_h = params.hurst.two_h();
    let value = horizon.powf(-two_h) * fou_variance(params, t)?;
    let bound = params.sigma * params.sigma * (t / horizon).powf(two_h);
    Ok(ScaledVariance { value, bound })
}
