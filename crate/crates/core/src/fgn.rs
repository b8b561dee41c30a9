//! Fractional Brownian motion and fractional Gaussian noise.
//!
//! Sampling is exact: the fGN covariance matrix is embedded in a circulant
//! matrix of size `2n` and diagonalised with an FFT (Davies–Harte). If any
//! embedding eigenvalue is below `-1e-10` the generator falls back to a
//! Cholesky factorisation of the `n × n` Toeplitz covariance.

use std::fmt::Write as _;
use std::io;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::FgnError;

/// Embedding eigenvalues in `[-EIGEN_TOL, 0)` are clamped to zero; anything
/// more negative triggers the Cholesky fallback.
pub const EIGEN_TOL: f64 = 1e-10;

/// Hurst index, restricted to the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(value: f64) -> Result<Self, FgnError> {
        if value > 0.0 && value < 1.0 {
            Ok(HurstIndex(value))
        } else {
            Err(FgnError::InvalidHurst(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// The exponent `2H` that appears in every covariance formula.
    #[inline]
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }
}

impl TryFrom<f64> for HurstIndex {
    type Error = FgnError;
    fn try_from(v: f64) -> Result<Self, FgnError> {
        HurstIndex::new(v)
    }
}

impl From<HurstIndex> for f64 {
    fn from(h: HurstIndex) -> f64 {
        h.0
    }
}

/// Covariance of fractional Brownian motion, `E[B_t B_s]`.
pub fn fbm_covariance(h: HurstIndex, t: f64, s: f64) -> f64 {
    let e = h.two_h();
    if t == s {
        return t.powf(e);
    }
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// Autocovariance of unit-mesh fGN at lag `n`:
/// `½(|n+1|^{2H} + |n−1|^{2H} − 2n^{2H})`.
pub fn fgn_autocovariance(h: HurstIndex, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let e = h.two_h();
    let n = n as f64;
    0.5 * ((n + 1.0).powf(e) + (n - 1.0).powf(e) - 2.0 * n.powf(e))
}

/// Which exact algorithm produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMethod {
    CirculantEmbedding,
    Cholesky,
}

/// A sampled fGN sequence together with its cumulative fBm path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgnPath {
    pub hurst: HurstIndex,
    pub mesh: f64,
    /// `X_n = B_{nΔ} − B_{(n−1)Δ}`, n = 1..N.
    pub increments: Vec<f64>,
    /// `B_{nΔ}`, n = 0..N, with `cumulative[0] = 0`.
    pub cumulative: Vec<f64>,
    pub seed: u64,
    pub method: GenerationMethod,
}

impl FgnPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Grid times `nΔ`, n = 0..N.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cumulative.len()).map(move |i| i as f64 * self.mesh)
    }

    /// CSV with header `t,b_h,x`; `x` is empty on the first row.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,b_h,x\n");
        for (i, (t, b)) in self.times().zip(&self.cumulative).enumerate() {
            if i == 0 {
                let _ = writeln!(out, "{t},{b},");
            } else {
                let _ = writeln!(out, "{t},{b},{}", self.increments[i - 1]);
            }
        }
        out
    }
}

/// Seeded 64-bit generator shared by every stochastic routine in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw `n` increments of fGN with mesh `mesh` and cumulate them.
///
/// Deterministic in `(h, n, mesh, seed)`.
pub fn generate_fgn(h: HurstIndex, n: usize, mesh: f64, seed: u64) -> Result<FgnPath, FgnError> {
    Ok(FgnSampler::new(h, n, mesh)?.sample(seed))
}

/// Same contract as [`generate_fgn`] but always uses the O(n³) Cholesky route.
/// Useful as an independent check on the circulant embedding.
pub fn generate_fgn_cholesky(
    h: HurstIndex,
    n: usize,
    mesh: f64,
    seed: u64,
) -> Result<FgnPath, FgnError> {
    validate(n, mesh)?;
    let factor = cholesky_factor(h, n)?;
    let unit = cholesky_sample(&factor, n, seed);
    Ok(assemble(h, mesh, seed, unit, GenerationMethod::Cholesky))
}

enum Route {
    Circulant {
        /// `√(λ_k / 2n)` for each embedding eigenvalue.
        scales: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        factor: Vec<f64>,
    },
}

/// Precomputed sampler for many paths sharing `(H, n, mesh)`.
///
/// [`generate_fgn`] is `FgnSampler::new(h, n, mesh)?.sample(seed)`; reusing
/// one sampler across seeds skips the eigen-decomposition and FFT planning.
pub struct FgnSampler {
    hurst: HurstIndex,
    n: usize,
    mesh: f64,
    route: Route,
}

impl FgnSampler {
    pub fn new(h: HurstIndex, n: usize, mesh: f64) -> Result<Self, FgnError> {
        validate(n, mesh)?;
        let m = 2 * n;
        let mut eig = circulant_eigenvalues(h, n);
        let route = if eig.iter().all(|&e| e >= -EIGEN_TOL) {
            for e in eig.iter_mut() {
                *e = e.max(0.0);
            }
            Route::Circulant {
                scales: eig.iter().map(|&lam| (lam / m as f64).sqrt()).collect(),
                fft: FftPlanner::new().plan_fft_forward(m),
            }
        } else {
            Route::Cholesky {
                factor: cholesky_factor(h, n)?,
            }
        };
        Ok(FgnSampler {
            hurst: h,
            n,
            mesh,
            route,
        })
    }

    pub fn method(&self) -> GenerationMethod {
        match self.route {
            Route::Circulant { .. } => GenerationMethod::CirculantEmbedding,
            Route::Cholesky { .. } => GenerationMethod::Cholesky,
        }
    }

    pub fn sample(&self, seed: u64) -> FgnPath {
        let unit = match &self.route {
            Route::Circulant { scales, fft } => {
                let mut rng = seeded_rng(seed);
                // Y = F diag(√(λ/m)) (Z₁ + iZ₂): Re(Y) has the circulant covariance.
                let mut w: Vec<Complex<f64>> = scales
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex::new(re * s, im * s)
                    })
                    .collect();
                fft.process(&mut w);
                w.into_iter().take(self.n).map(|c| c.re).collect()
            }
            Route::Cholesky { factor } => cholesky_sample(factor, self.n, seed),
        };
        assemble(self.hurst, self.mesh, seed, unit, self.method())
    }
}

fn validate(n: usize, mesh: f64) -> Result<(), FgnError> {
    if n == 0 {
        return Err(FgnError::InvalidArgument("n must be at least 1".into()));
    }
    if !(mesh > 0.0 && mesh.is_finite()) {
        return Err(FgnError::InvalidArgument(format!(
            "mesh must be positive and finite, got {mesh}"
        )));
    }
    Ok(())
}

fn assemble(
    h: HurstIndex,
    mesh: f64,
    seed: u64,
    unit: Vec<f64>,
    method: GenerationMethod,
) -> FgnPath {
    // Self-similarity: increments over a mesh Δ are Δ^H times unit-mesh fGN.
    let scale = mesh.powf(h.value());
    let increments: Vec<f64> = unit.into_iter().map(|x| x * scale).collect();
    let mut cumulative = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    cumulative.push(acc);
    for x in &increments {
        acc += x;
        cumulative.push(acc);
    }
    FgnPath {
        hurst: h,
        mesh,
        increments,
        cumulative,
        seed,
        method,
    }
}

/// Eigenvalues of the size-2n circulant embedding of the fGN covariance.
pub fn circulant_eigenvalues(h: HurstIndex, n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex::new(fgn_autocovariance(h, k), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex::new(fgn_autocovariance(h, k), 0.0));
    }
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

fn cholesky_factor(h: HurstIndex, n: usize) -> Result<Vec<f64>, FgnError> {
    let acov: Vec<f64> = (0..n).map(|k| fgn_autocovariance(h, k)).collect();
    // Lower-triangular factor stored row-major.
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = acov[i - j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(FgnError::NumericalDegeneracy(format!(
                        "non-positive pivot {sum:e} at row {i} of the {n}x{n} fGN covariance"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn cholesky_sample(l: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    (0..n)
        .map(|i| (0..=i).map(|k| l[i * n + k] * z[k]).sum())
        .collect()
}
