//! The Fourier-spline estimator: shrunken empirical moments.
//!
//! Densities here are expressed relative to the uniform measure `dx / 2π`,
//! so the uniform density evaluates to 1. [`SplineDensityEstimate::density`]
//! gives the ordinary (Lebesgue) density.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle::{empirical_fourier, weighted_power_sums, AngularSample, FourierCoefficients};
use crate::error::{Error, Result};

/// Hard cap on the default truncation order.
pub const MAX_DEFAULT_ORDER: usize = 512;

/// `C_k(λ) = 1 / (1 + λ k⁴)`.
pub fn shrinkage(k: i64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(shrink(k.unsigned_abs() as usize, lambda))
}

#[inline]
fn shrink(k: usize, lambda: f64) -> f64 {
    let k2 = (k * k) as f64;
    1.0 / (1.0 + lambda * k2 * k2)
}

/// Default truncation order: `floor(n / 2)`, capped.
pub fn default_order(n: usize) -> usize {
    (n / 2).min(MAX_DEFAULT_ORDER)
}

/// The factors `C_0..C_K` for one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageProfile {
    pub lambda: f64,
    pub c: Vec<f64>,
}

impl ShrinkageProfile {
    pub fn new(lambda: f64, max_order: usize) -> Result<Self> {
        shrinkage(0, lambda)?;
        Ok(ShrinkageProfile {
            lambda,
            c: (0..=max_order).map(|k| shrink(k, lambda)).collect(),
        })
    }

    pub fn max_order(&self) -> usize {
        self.c.len() - 1
    }
}

/// A fitted Fourier-spline estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineDensityEstimate {
    pub shrunken: FourierCoefficients,
    pub lambda: f64,
    pub sample_size: usize,
    /// Weighted mass `(1/n) Σ w_j`; 1 for an unweighted fit.
    pub mass: f64,
}

impl SplineDensityEstimate {
    /// Shrink the given moments with penalty `lambda`.
    pub fn from_moments(moments: &FourierCoefficients, lambda: f64, sample_size: usize) -> Result<Self> {
        let profile = ShrinkageProfile::new(lambda, moments.max_order())?;
        let mut c: Vec<Complex64> = moments
            .nonnegative()
            .iter()
            .zip(&profile.c)
            .map(|(u, c)| u * c)
            .collect();
        c[0] = Complex64::new(1.0, 0.0);
        Ok(SplineDensityEstimate {
            shrunken: FourierCoefficients::from_nonnegative(c)?,
            lambda,
            sample_size,
            mass: 1.0,
        })
    }

    pub fn max_order(&self) -> usize {
        self.shrunken.max_order()
    }

    /// `1 + 2 Σ_{k=1}^{K} (x̂_k cos kx + ŷ_k sin kx)`, relative to the uniform density.
    pub fn evaluate(&self, x: f64) -> f64 {
        let c = self.shrunken.nonnegative();
        let step = Complex64::from_polar(1.0, -x);
        let mut e = Complex64::new(1.0, 0.0);
        let mut s = 0.0;
        for ck in &c[1..] {
            e *= step;
            s += ck.re * e.re - ck.im * e.im;
        }
        1.0 + 2.0 * s
    }

    /// Ordinary density with respect to arc length.
    pub fn density(&self, x: f64) -> f64 {
        self.evaluate(x) / TAU
    }

    /// Evaluate relative densities on many points.
    pub fn evaluate_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.evaluate(x)).collect()
    }
}

/// Alias matching the operation name.
pub fn evaluate_density(est: &SplineDensityEstimate, x: f64) -> f64 {
    est.evaluate(x)
}

/// Fit with penalty `lambda`; `max_order` defaults to [`default_order`].
pub fn fit_spline_density(
    sample: &AngularSample,
    lambda: f64,
    max_order: Option<usize>,
) -> Result<SplineDensityEstimate> {
    sample.require_nonempty("fit_spline_density")?;
    let k = max_order.unwrap_or_else(|| default_order(sample.len()));
    let u = empirical_fourier(sample, k)?;
    SplineDensityEstimate::from_moments(&u, lambda, sample.len())
}

/// Moments `(1/n) Σ w_j Z_j^k`, with the order-0 entry kept at 1.
pub fn weighted_moments(
    sample: &AngularSample,
    weights: &[f64],
    max_order: usize,
) -> Result<(FourierCoefficients, f64)> {
    sample.require_nonempty("weighted moments")?;
    if weights.len() != sample.len() {
        return Err(Error::Domain(format!(
            "{} weights for {} points",
            weights.len(),
            sample.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Domain(format!("weight {w} outside [0, 1]")));
    }
    let n = sample.len() as f64;
    let mut sums = weighted_power_sums(sample.angles(), Some(weights), max_order);
    let mass = sums[0].re / n;
    for s in sums.iter_mut() {
        *s /= n;
    }
    sums[0] = Complex64::new(1.0, 0.0);
    Ok((FourierCoefficients::from_nonnegative(sums)?, mass))
}

/// Fit from weighted power-sum means. The constant term stays 1; the
/// weighted mass is recorded in [`SplineDensityEstimate::mass`].
pub fn fit_spline_density_weighted(
    sample: &AngularSample,
    weights: &[f64],
    lambda: f64,
    max_order: Option<usize>,
) -> Result<SplineDensityEstimate> {
    let k = max_order.unwrap_or_else(|| default_order(sample.len()));
    let (u, mass) = weighted_moments(sample, weights, k)?;
    let mut est = SplineDensityEstimate::from_moments(&u, lambda, sample.len())?;
    est.mass = mass;
    Ok(est)
}

/// Order beyond which `C_k(λ) < 1e-12`.
pub fn kernel_truncation_order(lambda: f64) -> usize {
    ((1e12 / lambda).powf(0.25).ceil() as usize).clamp(1, 2_000_000)
}

/// The equivalent kernel `1 + 2 Σ cos(kx) / (1 + λ k⁴)`.
pub fn spline_kernel(x: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("kernel needs lambda > 0, got {lambda}")));
    }
    Ok(spline_kernel_order(x, lambda, kernel_truncation_order(lambda)))
}

/// Kernel truncated at order `k_max`.
pub fn spline_kernel_order(x: f64, lambda: f64, k_max: usize) -> f64 {
    // cos(kx) by the Chebyshev recurrence
    let c1 = x.cos();
    let (mut prev, mut cur) = (1.0, c1);
    let mut s = 0.0;
    for k in 1..=k_max {
        s += cur * shrink(k, lambda);
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
    1.0 + 2.0 * s
}

/// The two summands of the estimated MISE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiseEstimate {
    pub lambda: f64,
    pub bias_term: f64,
    pub variance_term: f64,
    pub total: f64,
}

/// Plug-in MISE: `2π Σ_{k≠0} |û_k|² (C_k − 1)² + 2π Σ_{k≠0} C_k² (1 − |û_k|²) / n`.
pub fn empirical_mise(coeffs: &FourierCoefficients, lambda: f64, n: usize) -> Result<MiseEstimate> {
    if n == 0 {
        return Err(Error::Domain("empirical_mise needs n >= 1".into()));
    }
    shrinkage(0, lambda)?;
    let nf = n as f64;
    let (mut bias, mut var) = (0.0, 0.0);
    for (k, u) in coeffs.nonnegative().iter().enumerate().skip(1) {
        let c = shrink(k, lambda);
        let a = u.norm_sqr();
        bias += a * (c - 1.0) * (c - 1.0);
        var += c * c * (1.0 - a) / nf;
    }
    // both signs of k
    let bias_term = 2.0 * TAU * bias;
    let variance_term = 2.0 * TAU * var;
    Ok(MiseEstimate {
        lambda,
        bias_term,
        variance_term,
        total: bias_term + variance_term,
    })
}

/// Risk criterion minimised by [`select_lambda_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MiseCriterion {
    /// Plug `|û_k|²` straight into both terms.
    PlugIn,
    /// Replace `|u_k|²` by its unbiased estimate `(n|û_k|² − m₂)/(n − 1)`.
    ///
    /// `|û_k|²` overestimates `|u_k|²` by about `1/n`, which makes the plug-in
    /// criterion favour the smallest λ on the grid.
    #[default]
    BiasCorrected,
}

/// Grid of candidate penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("lambda grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("lambda grid entries must be > 0, got {v}")));
        }
        Ok(LambdaGrid(values))
    }

    /// `m` log-spaced points on `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m == 0 || !(lo > 0.0) || !(hi >= lo) {
            return Err(Error::Domain(format!("bad log grid [{lo}, {hi}] x {m}")));
        }
        if m == 1 {
            return LambdaGrid::new(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut v: Vec<f64> = (0..m)
            .map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())
            .collect();
        v[0] = lo;
        v[m - 1] = hi;
        LambdaGrid::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::log_spaced(1e-6, 1e2, 60).expect("static grid")
    }
}

/// Outcome of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Plug-in MISE at the chosen λ.
    pub mise: MiseEstimate,
    pub criterion: MiseCriterion,
    /// `(λ, criterion value)` over the whole grid.
    pub curve: Vec<(f64, f64)>,
}

/// Criterion value at one λ. `m2` is the mean squared weight (1 when unweighted).
pub fn risk_criterion(
    coeffs: &FourierCoefficients,
    lambda: f64,
    n: usize,
    criterion: MiseCriterion,
    m2: f64,
) -> f64 {
    let nf = n as f64;
    let mut s = 0.0;
    for (k, u) in coeffs.nonnegative().iter().enumerate().skip(1) {
        let c = shrink(k, lambda);
        let a = match criterion {
            MiseCriterion::BiasCorrected if n > 1 => (nf * u.norm_sqr() - m2) / (nf - 1.0),
            _ => u.norm_sqr(),
        };
        s += a * (c - 1.0) * (c - 1.0) + c * c * (m2 - a) / nf;
    }
    2.0 * TAU * s
}

/// Grid search for λ with the default (bias-corrected) criterion.
pub fn select_lambda(
    coeffs: &FourierCoefficients,
    n: usize,
    grid: &LambdaGrid,
) -> Result<(f64, MiseEstimate)> {
    let sel = select_lambda_with(coeffs, n, grid, MiseCriterion::default(), 1.0)?;
    Ok((sel.lambda, sel.mise))
}

/// Grid search; ties go to the larger λ.
pub fn select_lambda_with(
    coeffs: &FourierCoefficients,
    n: usize,
    grid: &LambdaGrid,
    criterion: MiseCriterion,
    mean_sq_weight: f64,
) -> Result<LambdaSelection> {
    if n == 0 {
        return Err(Error::Domain("select_lambda needs n >= 1".into()));
    }
    let curve: Vec<(f64, f64)> = grid
        .values()
        .par_iter()
        .map(|&l| (l, risk_criterion(coeffs, l, n, criterion, mean_sq_weight)))
        .collect();
    let mut best = curve[0];
    for &(l, v) in &curve[1..] {
        if v < best.1 || (v == best.1 && l > best.0) {
            best = (l, v);
        }
    }
    Ok(LambdaSelection {
        lambda: best.0,
        mise: empirical_mise(coeffs, best.0, n)?,
        criterion,
        curve,
    })
}

/// Exact-truth diagnostics, for testing.
pub mod diagnostics {
    use super::*;

    /// Pointwise mean squared error split into squared bias and variance.
    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    pub struct PointwiseMse {
        pub bias_sq: f64,
        pub variance: f64,
        pub total: f64,
    }

    /// Exact `E|f̂(x) − f(x)|²` for a fit of order `K = floor(truth.max_order / 2)`,
    /// in the relative-density convention.
    ///
    /// The truth beyond order `2K` is treated as zero; the variance term only
    /// needs `u_{k−k'}` with `|k − k'| <= 2K`.
    pub fn pointwise_mse(
        truth: &FourierCoefficients,
        lambda: f64,
        n: usize,
        x: f64,
    ) -> Result<PointwiseMse> {
        pointwise_mse_order(truth, lambda, n, x, truth.max_order() / 2)
    }

    /// As [`pointwise_mse`] with an explicit estimator order.
    pub fn pointwise_mse_order(
        truth: &FourierCoefficients,
        lambda: f64,
        n: usize,
        x: f64,
        k: usize,
    ) -> Result<PointwiseMse> {
        if truth.max_order() < 2 * k {
            return Err(Error::Domain(format!(
                "need true coefficients to order {}, have {}",
                2 * k,
                truth.max_order()
            )));
        }
        if n == 0 {
            return Err(Error::Domain("pointwise_mse needs n >= 1".into()));
        }
        let prof = ShrinkageProfile::new(lambda, k)?;
        let kk = k as i64;
        let c = |j: i64| prof.c[j.unsigned_abs() as usize];
        let e = |j: i64| Complex64::from_polar(1.0, -(j as f64) * x);

        // squared bias: |Σ_k u_k (C_k − 1) e^{−ikx}|²
        let mut b = Complex64::new(0.0, 0.0);
        let mut m = Complex64::new(0.0, 0.0);
        for j in -kk..=kk {
            b += truth.get(j) * (c(j) - 1.0) * e(j);
            m += truth.get(j) * c(j) * e(j);
        }
        // Σ_k Σ_k' C_k C_k' u_{k−k'} e^{−i(k−k')x} − |Σ_k C_k u_k e^{−ikx}|²
        let mut v = Complex64::new(0.0, 0.0);
        for j in -kk..=kk {
            for l in -kk..=kk {
                v += c(j) * c(l) * truth.get(j - l) * e(j - l);
            }
        }
        let variance = (v.re - m.norm_sqr()) / n as f64;
        let bias_sq = b.norm_sqr();
        Ok(PointwiseMse {
            bias_sq,
            variance,
            total: bias_sq + variance,
        })
    }
}
