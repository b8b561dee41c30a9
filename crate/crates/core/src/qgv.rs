//! Generalized quadratic variation estimators of `(H, σ)` for a discretely
//! observed fOU, and the second-moment estimator of `λ`.
//!
//! A filter `a = (a₀..a_K)` of order `L` annihilates polynomials of degree
//! below `L`. The variation of the filtered samples at mesh `Δ` and at mesh
//! `2Δ` (the dilated filter) scale by `2^{2H}`, which identifies `H`; the
//! level of the variation then identifies `σ`.

use serde::{Deserialize, Serialize};

use crate::error::QgvError;
use crate::special::gamma;

/// Relative tolerance for the moment conditions checked at construction.
pub const MOMENT_TOL: f64 = 1e-10;

/// Range of `Ĥ` over which the `λ` estimator is known to be consistent.
pub const LAMBDA_VALID_RANGE: (f64, f64) = (0.5, 0.75);

const DAUBECHIES4: [f64; 4] = [
    0.48296291314453,
    -0.8365163037378,
    0.22414386804201,
    0.12940952255126,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub name: String,
    pub coefficients: Vec<f64>,
    pub order: usize,
}

impl Filter {
    /// Build a filter and determine its order numerically: the first `j` with
    /// `Σ a_k k^j` non-zero relative to `Σ |a_k| k^j`. Order must be at least 1.
    pub fn new(name: impl Into<String>, coefficients: Vec<f64>) -> Result<Self, QgvError> {
        if coefficients.len() < 2 {
            return Err(QgvError::InvalidFilter(
                "a filter needs at least two taps".into(),
            ));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(QgvError::InvalidFilter("non-finite coefficient".into()));
        }
        let k_max = coefficients.len() - 1;
        let mut order = None;
        for j in 0..=k_max + 1 {
            let (m, scale) = moment(&coefficients, j);
            if scale == 0.0 {
                return Err(QgvError::InvalidFilter("all coefficients are zero".into()));
            }
            if m.abs() > MOMENT_TOL * scale {
                order = Some(j);
                break;
            }
        }
        match order {
            Some(0) | None => Err(QgvError::InvalidFilter(
                "coefficients do not sum to zero (order 0)".into(),
            )),
            Some(order) => Ok(Filter {
                name: name.into(),
                coefficients,
                order,
            }),
        }
    }

    /// `K`, so the filter has `K + 1` taps.
    pub fn k(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `Σ (−1)^{1−k} a_k`.
    pub fn normalization(&self) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, a)| if k % 2 == 0 { -a } else { *a })
            .sum()
    }

    /// `Σ_k a_k k^j`.
    pub fn moment(&self, j: usize) -> f64 {
        moment(&self.coefficients, j).0
    }

    /// `Σ_{k,l} a_k a_l |k−l|^{2H}` with `0^{2H} = 0`.
    pub fn autocorrelation_sum(&self, h: f64) -> f64 {
        let a = &self.coefficients;
        let mut sum = 0.0;
        for (k, ak) in a.iter().enumerate() {
            for (l, al) in a.iter().enumerate() {
                if k != l {
                    sum += ak * al * (k.abs_diff(l) as f64).powf(2.0 * h);
                }
            }
        }
        sum
    }
}

fn moment(a: &[f64], j: usize) -> (f64, f64) {
    let mut m = 0.0;
    let mut scale = 0.0;
    for (k, ak) in a.iter().enumerate() {
        let p = (k as f64).powi(j as i32);
        m += ak * p;
        scale += (ak * p).abs();
    }
    (m, scale)
}

/// Binomial filter `a_k = (−1)^{1−k} C(K,k) / 2^K` of order `K`.
pub fn classical_filter(k_order: usize) -> Result<Filter, QgvError> {
    if k_order < 2 {
        return Err(QgvError::InvalidFilter(format!(
            "classical filter needs K >= 2, got {k_order}"
        )));
    }
    let denom = 2f64.powi(k_order as i32);
    let mut binom = 1.0f64;
    let mut coeffs = Vec::with_capacity(k_order + 1);
    for k in 0..=k_order {
        if k > 0 {
            binom = binom * (k_order + 1 - k) as f64 / k as f64;
        }
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        coeffs.push(sign * binom / denom);
    }
    Filter::new(format!("classical-k{k_order}"), coeffs)
}

/// Four-tap Daubechies wavelet filter scaled by `1/√2`.
pub fn daubechies_filter() -> Filter {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Filter::new("daubechies4", DAUBECHIES4.iter().map(|a| a * s).collect())
        .expect("Daubechies filter has order 2")
}

/// Spread the taps to even indices: `a²_{2k} = a_k`, zero elsewhere.
pub fn dilate_filter(f: &Filter) -> Filter {
    let mut coeffs = vec![0.0; 2 * f.k() + 1];
    for (k, a) in f.coefficients.iter().enumerate() {
        coeffs[2 * k] = *a;
    }
    Filter {
        name: format!("{}-dilated", f.name),
        coefficients: coeffs,
        order: f.order,
    }
}

/// Look up a filter by the names used on the command line.
pub fn filter_by_name(name: &str) -> Result<Filter, QgvError> {
    match name {
        "daubechies4" | "daubechies" => Ok(daubechies_filter()),
        other => match other.strip_prefix("classical-k") {
            Some(k) => classical_filter(
                k.parse()
                    .map_err(|_| QgvError::InvalidFilter(format!("unknown filter '{name}'")))?,
            ),
            None => Err(QgvError::InvalidFilter(format!("unknown filter '{name}'"))),
        },
    }
}

fn filtered<'a>(
    samples: &'a [f64],
    f: &Filter,
) -> Result<impl Iterator<Item = f64> + 'a, QgvError> {
    let taps = f.coefficients.len();
    if samples.len() < taps {
        return Err(QgvError::TooShort(format!(
            "{} samples, the filter has {taps} taps",
            samples.len()
        )));
    }
    let coeffs = f.coefficients.clone();
    Ok(samples
        .windows(taps)
        .map(move |w| w.iter().zip(&coeffs).map(|(x, a)| x * a).sum::<f64>()))
}

/// `V_{N,a} = Σ_{i=0}^{N−K} (Σ_k a_k X_{i+k})²` over all `N − K + 1` positions.
pub fn quadratic_variation(samples: &[f64], f: &Filter) -> Result<f64, QgvError> {
    Ok(filtered(samples, f)?.map(|y| y * y).sum())
}

/// Mean squared filter output, `V_{N,a} / (N − K + 1)`.
pub fn mean_quadratic_variation(samples: &[f64], f: &Filter) -> Result<f64, QgvError> {
    let positions = samples.len().saturating_sub(f.k());
    Ok(quadratic_variation(samples, f)? / positions as f64)
}

/// `(Ĥ, σ̂)` from one filter and its dilation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HSigma {
    pub h_hat: f64,
    pub sigma_hat: f64,
}

/// `Ĥ = ½ log₂(v₂/v₁)` and
/// `σ̂ = (−2 v₁ / (Σ a_k a_l |k−l|^{2Ĥ} Δ^{2Ĥ}))^{1/2}`,
/// where `v₁`, `v₂` are the mean squared outputs of the filter and of its
/// dilation.
pub fn estimate_h_sigma(samples: &[f64], f: &Filter, mesh: f64) -> Result<HSigma, QgvError> {
    if !(mesh > 0.0 && mesh.is_finite()) {
        return Err(QgvError::InvalidArgument(format!(
            "mesh must be positive, got {mesh}"
        )));
    }
    let dilated = dilate_filter(f);
    let min_len = 2 * f.coefficients.len() + 1;
    if samples.len() < min_len {
        return Err(QgvError::TooShort(format!(
            "{} samples, need at least {min_len}",
            samples.len()
        )));
    }
    let v1 = mean_quadratic_variation(samples, f)?;
    let v2 = mean_quadratic_variation(samples, &dilated)?;
    if !(v1 > 0.0) || !(v2 > 0.0) {
        return Err(QgvError::InsufficientVariation(
            "filtered samples have zero quadratic variation".into(),
        ));
    }
    let h_hat = 0.5 * (v2 / v1).log2();
    let sigma_hat = sigma_given_h(v1, f, mesh, h_hat)?;
    Ok(HSigma { h_hat, sigma_hat })
}

/// Evaluate the `σ` estimator at a supplied `H` from the mean squared
/// filter output `v1`.
pub fn sigma_given_h(v1: f64, f: &Filter, mesh: f64, h: f64) -> Result<f64, QgvError> {
    let denom = f.autocorrelation_sum(h) * mesh.powf(2.0 * h);
    let radicand = -2.0 * v1 / denom;
    if !(radicand > 0.0) || !radicand.is_finite() {
        return Err(QgvError::FilterInconsistency(format!(
            "σ² radicand {radicand} is not positive (H = {h})"
        )));
    }
    Ok(radicand.sqrt())
}

/// `(λ̂, μ̂₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    pub mu2_hat: f64,
}

/// `λ̂ = (2μ̂₂ / (σ̂² Γ(2Ĥ+1)))^{−1/(2Ĥ)}` with `μ̂₂ = (1/N) Σ_{n=1}^N X_n²`.
///
/// `samples[0]` is `X₀` and is left out of the moment.
pub fn estimate_lambda(
    samples: &[f64],
    h_hat: f64,
    sigma_hat: f64,
) -> Result<LambdaEstimate, QgvError> {
    if !(h_hat > 0.0 && h_hat < 1.0) {
        return Err(QgvError::InvalidArgument(format!(
            "h_hat = {h_hat} is outside (0, 1)"
        )));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(QgvError::InvalidArgument(format!(
            "sigma_hat = {sigma_hat} must be positive"
        )));
    }
    if samples.len() < 2 {
        return Err(QgvError::TooShort(
            "need X_0 and at least one more sample".into(),
        ));
    }
    let tail = &samples[1..];
    let mu2_hat = tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64;
    Ok(LambdaEstimate {
        lambda_hat: lambda_from_moment(mu2_hat, h_hat, sigma_hat)?,
        mu2_hat,
    })
}

/// Invert `μ₂ = σ²Γ(2H+1)/(2λ^{2H})` for `λ`.
pub fn lambda_from_moment(mu2: f64, h: f64, sigma: f64) -> Result<f64, QgvError> {
    if !(mu2 > 0.0) {
        return Err(QgvError::InsufficientVariation(
            "second empirical moment is zero".into(),
        ));
    }
    let base = 2.0 * mu2 / (sigma * sigma * gamma(2.0 * h + 1.0));
    Ok(base.powf(-1.0 / (2.0 * h)))
}

/// Full estimator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgvEstimates {
    pub h_hat: f64,
    pub sigma_hat: f64,
    /// Absent when `Ĥ ∉ (½, ¾)` and the caller did not force the estimate,
    /// or when `Ĥ ∉ (0, 1)`.
    pub lambda_hat: Option<f64>,
    pub mu2_hat: f64,
    pub filter: String,
    pub filter_used: Filter,
    /// `Ĥ` lies outside the range where the `λ` estimator is consistent.
    pub outside_validity: bool,
    pub warnings: Vec<String>,
}

/// Estimate `(H, σ, λ)` from regularly spaced samples `X_n = Y_{nΔ}`.
///
/// Outside `(½, ¾)` the `λ` estimate is computed only when `force_lambda`
/// is set; either way `outside_validity` is raised.
pub fn estimate_all(
    samples: &[f64],
    f: &Filter,
    mesh: f64,
    force_lambda: bool,
) -> Result<QgvEstimates, QgvError> {
    let HSigma { h_hat, sigma_hat } = estimate_h_sigma(samples, f, mesh)?;
    let outside_validity = !(h_hat > LAMBDA_VALID_RANGE.0 && h_hat < LAMBDA_VALID_RANGE.1);
    let mut warnings = Vec::new();
    let tail = &samples[1..];
    let mu2_hat = tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64;
    let lambda_hat = if !(h_hat > 0.0 && h_hat < 1.0) {
        warnings.push(format!(
            "h_hat = {h_hat:.4} outside (0, 1); lambda not estimated"
        ));
        None
    } else if outside_validity && !force_lambda {
        warnings.push(format!(
            "h_hat = {h_hat:.4} outside ({}, {}); lambda not estimated without override",
            LAMBDA_VALID_RANGE.0, LAMBDA_VALID_RANGE.1
        ));
        None
    } else {
        if outside_validity {
            warnings.push(format!(
                "h_hat = {h_hat:.4} outside ({}, {}); lambda estimate is not covered by the consistency result",
                LAMBDA_VALID_RANGE.0, LAMBDA_VALID_RANGE.1
            ));
        }
        Some(estimate_lambda(samples, h_hat, sigma_hat)?.lambda_hat)
    };
    Ok(QgvEstimates {
        h_hat,
        sigma_hat,
        lambda_hat,
        mu2_hat,
        filter: f.name.clone(),
        filter_used: f.clone(),
        outside_validity,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classical_k2() {
        let f = classical_filter(2).unwrap();
        assert_eq!(f.coefficients, vec![-0.25, 0.5, -0.25]);
        assert_eq!(f.order, 2);
        assert_eq!(f.normalization(), 1.0);
        assert_eq!(f.moment(1), 0.0);
        assert_eq!(f.moment(2), -0.5);
        assert!(classical_filter(1).is_err());
    }

    #[test]
    fn classical_orders_and_normalization() {
        for k in 2..=10 {
            let f = classical_filter(k).unwrap();
            assert_eq!(f.order, k);
            assert!((f.normalization() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn daubechies() {
        let f = daubechies_filter();
        assert!((f.coefficients[0] - 0.341506).abs() < 1e-6);
        assert!(f.moment(0).abs() < 1e-9);
        assert!(f.moment(1).abs() < 1e-8);
        assert_eq!(f.order, 2);
        // Wavelet sign convention: the alternating sum is −1, not +1.
        assert!((f.normalization() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn dilation() {
        let f = classical_filter(2).unwrap();
        let d = dilate_filter(&f);
        assert_eq!(d.coefficients, vec![-0.25, 0.0, 0.5, 0.0, -0.25]);
        assert_eq!(d.order, f.order);
        for g in [classical_filter(3).unwrap(), daubechies_filter()] {
            let d = dilate_filter(&g);
            let recomputed = Filter::new("x", d.coefficients.clone()).unwrap();
            assert_eq!(recomputed.order, g.order);
            for j in 0..4 {
                let lhs = d.moment(j);
                let rhs = 2f64.powi(j as i32) * g.moment(j);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_order_zero() {
        assert!(Filter::new("bad", vec![1.0, 1.0]).is_err());
        assert!(Filter::new("bad", vec![1.0]).is_err());
        assert_eq!(Filter::new("diff", vec![-1.0, 1.0]).unwrap().order, 1);
    }

    #[test]
    fn variation_examples() {
        let f = classical_filter(2).unwrap();
        assert_eq!(quadratic_variation(&[0.0, 1.0, 0.0], &f).unwrap(), 0.25);
        assert_eq!(quadratic_variation(&[4.2; 20], &f).unwrap(), 0.0);
        let ramp: Vec<f64> = (0..100).map(|i| 0.5 + 0.3 * i as f64).collect();
        assert!(quadratic_variation(&ramp, &f).unwrap() < 1e-12);
        assert!(matches!(
            quadratic_variation(&[1.0, 2.0], &f),
            Err(QgvError::TooShort(_))
        ));
    }

    #[test]
    fn annihilates_low_degree_polynomials() {
        for f in [
            classical_filter(2).unwrap(),
            classical_filter(4).unwrap(),
            daubechies_filter(),
        ] {
            for deg in 0..f.order {
                let x: Vec<f64> = (0..50)
                    .map(|i| (0.1 * i as f64 + 1.0).powi(deg as i32))
                    .collect();
                let energy: f64 = x.iter().map(|v| v * v).sum();
                let v = quadratic_variation(&x, &f).unwrap();
                assert!(v <= 1e-12 * energy, "{} deg {deg}: {v}", f.name);
            }
        }
    }

    #[test]
    fn brownian_hand_anchor_for_sigma() {
        // E[(−¼B₀ + ½B₁ − ¼B₂)²] = 1/8 and Σ a_k a_l |k−l| = −¼ give σ̂ = 1.
        let f = classical_filter(2).unwrap();
        assert!((f.autocorrelation_sum(0.5) + 0.25).abs() < 1e-15);
        assert!((sigma_given_h(0.125, &f, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverts_engineered_ratio() {
        // Two adjacent spikes (1, b): the dilated filter sees them differently
        // from the base filter, so b tunes the variation ratio. Bisect b until
        // the ratio equals 2^{2h}; the estimator must then return h.
        let f = classical_filter(2).unwrap();
        let d = dilate_filter(&f);
        let h = 0.7;
        let target = 2f64.powf(2.0 * h);
        let samples = |b: f64| {
            let mut z = vec![0.0; 41];
            z[20] = 1.0;
            z[21] = b;
            z
        };
        let gap = |b: f64| {
            let z = samples(b);
            mean_quadratic_variation(&z, &d).unwrap() / mean_quadratic_variation(&z, &f).unwrap()
                - target
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        assert!(gap(lo) * gap(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) * gap(lo) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let got = estimate_h_sigma(&samples(0.5 * (lo + hi)), &f, 1.0)
            .unwrap()
            .h_hat;
        assert!((got - h).abs() < 1e-12, "{got}");
    }

    #[test]
    fn zero_variation_is_rejected() {
        let f = classical_filter(2).unwrap();
        let flat = vec![1.0; 30];
        assert!(matches!(
            estimate_h_sigma(&flat, &f, 1.0),
            Err(QgvError::InsufficientVariation(_))
        ));
    }

    #[test]
    fn lambda_fixed_points() {
        let (h, s) = (0.6, 1.3);
        let mu2 = s * s * gamma(2.0 * h + 1.0) / 2.0;
        assert!((lambda_from_moment(mu2, h, s).unwrap() - 1.0).abs() < 1e-12);
        let mu2 = gamma(2.0) / 2.0 * 2f64.powf(-1.0);
        assert!((lambda_from_moment(mu2, 0.5, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            lambda_from_moment(0.0, 0.6, 1.0),
            Err(QgvError::InsufficientVariation(_))
        ));
    }

    #[test]
    fn lambda_skips_first_sample() {
        let x = [100.0, 1.0, -1.0];
        let e = estimate_lambda(&x, 0.5, 1.0).unwrap();
        assert_eq!(e.mu2_hat, 1.0);
        assert!(estimate_lambda(&x, 1.0, 1.0).is_err());
        assert!(estimate_lambda(&x, 0.5, 0.0).is_err());
    }

    #[test]
    fn validity_gate() {
        // White noise observed as levels gives Ĥ near 0, far below ½.
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::fgn::seeded_rng(4);
        let x: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = classical_filter(2).unwrap();
        let gated = estimate_all(&x, &f, 1.0, false).unwrap();
        assert!(gated.outside_validity);
        if gated.h_hat > 0.0 && gated.h_hat < 1.0 {
            assert!(gated.lambda_hat.is_none());
            let forced = estimate_all(&x, &f, 1.0, true).unwrap();
            assert!(forced.lambda_hat.unwrap() > 0.0);
            assert!(forced.outside_validity);
        }
        assert!(!gated.warnings.is_empty());
    }

    #[test]
    fn filter_lookup() {
        assert_eq!(
            filter_by_name("classical-k2").unwrap(),
            classical_filter(2).unwrap()
        );
        assert_eq!(filter_by_name("daubechies4").unwrap(), daubechies_filter());
        assert!(filter_by_name("haar").is_err());
        assert!(filter_by_name("classical-kx").is_err());
    }

    proptest! {
        #[test]
        fn scale_equivariance(c in 0.01f64..100.0, seed in 0u64..1000) {
            let path = crate::fgn::generate_fgn(crate::fgn::HurstIndex::new(0.7).unwrap(), 300, 0.1, seed).unwrap();
            let f = classical_filter(2).unwrap();
            let a = estimate_h_sigma(&path.cumulative, &f, 0.1).unwrap();
            let scaled: Vec<f64> = path.cumulative.iter().map(|x| c * x).collect();
            let b = estimate_h_sigma(&scaled, &f, 0.1).unwrap();
            prop_assert!((a.h_hat - b.h_hat).abs() < 1e-10);
            prop_assert!((c * a.sigma_hat - b.sigma_hat).abs() < 1e-9 * b.sigma_hat);
        }

        #[test]
        fn lambda_decreasing_in_moment(h in 0.51f64..0.99, s in 0.1f64..3.0, m in 0.01f64..10.0, bump in 1.001f64..5.0) {
            let a = lambda_from_moment(m, h, s).unwrap();
            let b = lambda_from_moment(m * bump, h, s).unwrap();
            prop_assert!(b < a);
        }
    }
}
