//! Three-parameter exponential family for a local break:
//! `exp{β₀ t + β₁ 1(t > t₀) + β₂ (t − t₀)₊} / A(β)` on an arc.
//!
//! `t` is the counter-clockwise offset from the start of the arc, so the
//! fitted parameters do not depend on where the arc sits on the circle.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::circle::{AngularSample, Arc};
use crate::error::{Error, Result};
use crate::partition::BumpFunction;
use crate::quad::GaussLegendre;

/// Box constraint on every parameter.
pub const PARAM_BOUND: f64 = 50.0;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFamilyParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub x0: f64,
    pub interval: Arc,
}

impl ExpFamilyParams {
    pub fn new(beta: [f64; 3], x0: f64, interval: Arc) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        if !interval.contains_closed(x0) {
            return Err(Error::Domain(format!("x0 = {x0} is outside the interval")));
        }
        Ok(ExpFamilyParams {
            beta0: beta[0],
            beta1: beta[1],
            beta2: beta[2],
            x0: crate::circle::wrap(x0),
            interval,
        })
    }

    pub fn uniform(x0: f64, interval: Arc) -> Result<Self> {
        ExpFamilyParams::new([0.0; 3], x0, interval)
    }

    pub fn beta(&self) -> [f64; 3] {
        [self.beta0, self.beta1, self.beta2]
    }

    fn shape(&self) -> Shape {
        Shape {
            len: self.interval.len,
            t0: self.interval.offset(self.x0).min(self.interval.len),
        }
    }

    /// Local coordinate of `x`, or `None` outside the interval.
    fn local(&self, x: f64) -> Option<f64> {
        if !self.interval.contains_closed(x) {
            return None;
        }
        let t = self.interval.offset(x);
        Some(if t > self.interval.len { 0.0 } else { t })
    }

    /// Log-density at `x`; `None` outside the interval.
    pub fn log_density(&self, x: f64) -> Option<f64> {
        let t = self.local(x)?;
        let s = self.shape();
        Some(eta(&self.beta(), t, s.t0) - s.log_normalizer(&self.beta()))
    }
}

/// Interval length and break position in local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Shape {
    len: f64,
    t0: f64,
}

fn eta(b: &[f64; 3], t: f64, t0: f64) -> f64 {
    let right = t > t0;
    b[0] * t + if right { b[1] + b[2] * (t - t0) } else { 0.0 }
}

/// `log ∫_a^b e^{ct} dt`.
fn log_exp_integral(c: f64, a: f64, b: f64) -> f64 {
    let w = b - a;
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let cw = c * w;
    if cw.abs() < 1e-10 {
        w.ln() + c * 0.5 * (a + b)
    } else if c > 0.0 {
        c * b + (-(-cw).exp_m1() / c).ln()
    } else {
        c * a + (cw.exp_m1() / c).ln()
    }
}

/// Mean and variance of `τ ∈ [0, w]` with density proportional to `e^{cτ}`.
fn exp_piece_moments(c: f64, w: f64) -> (f64, f64) {
    let cw = c * w;
    if cw.abs() < 1e-3 {
        let w2 = w * w;
        let mean = 0.5 * w + c * w2 / 12.0 - c.powi(3) * w2 * w2 / 720.0;
        let var = w2 / 12.0 - c * c * w2 * w2 / 720.0 + c.powi(4) * w2 * w2 * w2 / 30240.0;
        (mean, var)
    } else {
        let mean = -w / (-cw).exp_m1() - 1.0 / c;
        let sh = (0.5 * cw).sinh();
        let var = 1.0 / (c * c) - w * w / (4.0 * sh * sh);
        (mean, var.max(0.0))
    }
}

impl Shape {
    fn log_pieces(&self, b: &[f64; 3]) -> (f64, f64) {
        let left = log_exp_integral(b[0], 0.0, self.t0);
        let right = b[1] - b[2] * self.t0 + log_exp_integral(b[0] + b[2], self.t0, self.len);
        (left, right)
    }

    fn log_normalizer(&self, b: &[f64; 3]) -> f64 {
        let (l, r) = self.log_pieces(b);
        log_add(l, r)
    }

    /// Mean and covariance of the sufficient statistics under `b`.
    fn moments(&self, b: &[f64; 3]) -> (Vector3<f64>, Matrix3<f64>) {
        let (l, r) = self.log_pieces(b);
        let la = log_add(l, r);
        let pl = (l - la).exp();
        let pr = (r - la).exp();
        let (ml, vl) = if self.t0 > 0.0 { exp_piece_moments(b[0], self.t0) } else { (0.0, 0.0) };
        let (mr, vr) = if self.len > self.t0 {
            exp_piece_moments(b[0] + b[2], self.len - self.t0)
        } else {
            (0.0, 0.0)
        };
        let t_r = self.t0 + mr;
        let e = Vector3::new(pl * ml + pr * t_r, pr, pr * mr);
        let e11 = pl * (vl + ml * ml) + pr * (vr + t_r * t_r);
        let e12 = pr * t_r;
        let e13 = pr * (self.t0 * mr + vr + mr * mr);
        let e22 = pr;
        let e23 = pr * mr;
        let e33 = pr * (vr + mr * mr);
        let m2 = Matrix3::new(e11, e12, e13, e12, e22, e23, e13, e23, e33);
        (e, m2 - e * e.transpose())
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Density of the local model at `x`.
pub fn exp_density(params: &ExpFamilyParams, x: f64) -> Result<f64> {
    params
        .log_density(x)
        .map(f64::exp)
        .ok_or_else(|| Error::Domain(format!("x = {x} is outside the model interval")))
}

/// `A(β)` from closed-form piecewise integrals, with a Gauss-Legendre cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizingConstant {
    pub value: f64,
    pub log_value: f64,
    /// `|quadrature − closed form|`.
    pub quadrature_error: f64,
}

pub fn normalizer(params: &ExpFamilyParams) -> NormalizingConstant {
    let s = params.shape();
    let b = params.beta();
    let log_value = s.log_normalizer(&b);
    // integrate the scaled integrand, which is O(1) after dividing by A
    let g = GaussLegendre::new(64);
    let f = |t: f64| (eta(&b, t, s.t0) - log_value).exp();
    let mut q = 0.0;
    if s.t0 > 0.0 {
        q += g.integrate_composite(0.0, s.t0, 4, f);
    }
    if s.len > s.t0 {
        q += g.integrate_composite(s.t0, s.len, 4, f);
    }
    let value = log_value.exp();
    NormalizingConstant {
        value,
        log_value,
        quadrature_error: (q - 1.0).abs() * value,
    }
}

/// Sums of `(t, 1(t > t₀), (t − t₀)₊)` over a sample, in local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub n: usize,
    pub sums: [f64; 3],
}

impl SufficientStats {
    /// Statistics of the points of `data` inside `interval` with break at `x0`.
    pub fn from_points(data: &[f64], x0: f64, interval: &Arc) -> Result<Self> {
        let t0 = interval.offset(x0);
        if !interval.contains_closed(x0) {
            return Err(Error::Domain(format!("x0 = {x0} is outside the interval")));
        }
        let t0 = t0.min(interval.len);
        let mut sums = [0.0; 3];
        let mut n = 0;
        for &x in data {
            if !interval.contains_closed(x) {
                return Err(Error::Domain(format!("point {x} is outside the interval")));
            }
            let mut t = interval.offset(x);
            if t > interval.len {
                t = 0.0;
            }
            n += 1;
            sums[0] += t;
            if t > t0 {
                sums[1] += 1.0;
                sums[2] += t - t0;
            }
        }
        Ok(SufficientStats { n, sums })
    }
}

/// `l(β) = β·S − n log A(β)`.
pub fn log_likelihood(params: &ExpFamilyParams, stats: &SufficientStats) -> f64 {
    let b = params.beta();
    let s = params.shape();
    b[0] * stats.sums[0] + b[1] * stats.sums[1] + b[2] * stats.sums[2]
        - stats.n as f64 * s.log_normalizer(&b)
}

/// `∇l(β) = S − n E_β[s]`.
pub fn log_likelihood_gradient(params: &ExpFamilyParams, stats: &SufficientStats) -> [f64; 3] {
    let (e, _) = params.shape().moments(&params.beta());
    let n = stats.n as f64;
    [
        stats.sums[0] - n * e[0],
        stats.sums[1] - n * e[1],
        stats.sums[2] - n * e[2],
    ]
}

/// Expected sufficient statistics `E_β[s]`.
pub fn expected_statistics(params: &ExpFamilyParams) -> [f64; 3] {
    let (e, _) = params.shape().moments(&params.beta());
    [e[0], e[1], e[2]]
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub params: ExpFamilyParams,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Some parameter sits on the `±50` box, typically from separated data.
    pub diverged: bool,
    /// Fewer than three points; the uniform model was returned.
    pub degenerate: bool,
}

/// Maximise over the parameters not fixed in `fixed` (fixed ones keep the given value).
pub fn fit_mle_stats(
    stats: &SufficientStats,
    x0: f64,
    interval: Arc,
    fixed: [Option<f64>; 3],
) -> Result<MleFit> {
    let base = ExpFamilyParams::uniform(x0, interval)?;
    let shape = base.shape();
    let n = stats.n as f64;
    // all points on one side of x0: the jump runs off to the bound and the
    // kink is unidentified, so pin both
    let mut fixed = fixed;
    let mut separated = false;
    if fixed[1].is_none() && stats.n > 0 && (stats.sums[1] == 0.0 || stats.sums[1] == n) {
        fixed[1] = Some(if stats.sums[1] == 0.0 { -PARAM_BOUND } else { PARAM_BOUND });
        fixed[2] = Some(fixed[2].unwrap_or(0.0));
        separated = true;
    }
    let free: Vec<usize> = (0..3).filter(|&i| fixed[i].is_none()).collect();
    let mut b = [fixed[0].unwrap_or(0.0), fixed[1].unwrap_or(0.0), fixed[2].unwrap_or(0.0)];
    let lik = |b: &[f64; 3]| -> f64 {
        b[0] * stats.sums[0] + b[1] * stats.sums[1] + b[2] * stats.sums[2] - n * shape.log_normalizer(b)
    };
    let grad_hess = |b: &[f64; 3]| -> (Vector3<f64>, Matrix3<f64>) {
        let (e, cov) = shape.moments(b);
        (Vector3::new(stats.sums[0], stats.sums[1], stats.sums[2]) - n * e, -n * cov)
    };

    let mut cur = lik(&b);
    let mut iterations = 0;
    loop {
        let (g, h) = grad_hess(&b);
        // coordinates pinned at a bound with the gradient pushing outward
        let active: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&i| {
                !(b[i].abs() >= PARAM_BOUND && g[i] * b[i].signum() > 0.0)
            })
            .collect();
        let gnorm: f64 = active.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
        if gnorm < GRAD_TOL || active.is_empty() || iterations >= MAX_ITER {
            break;
        }
        iterations += 1;
        let m = active.len();
        let mut hs = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut gs = nalgebra::DVector::<f64>::zeros(m);
        for (r, &i) in active.iter().enumerate() {
            gs[r] = g[i];
            for (c, &j) in active.iter().enumerate() {
                hs[(r, c)] = -h[(i, j)];
            }
        }
        // Newton direction on the concave objective; fall back to a ridge,
        // then to plain ascent, when the curvature is numerically flat
        let scale = hs.diagonal().amax().max(1e-300);
        let mut dir = None;
        for ridge in [0.0, 1e-12, 1e-8, 1e-4] {
            let mut hr = hs.clone();
            for r in 0..m {
                hr[(r, r)] += ridge * scale;
            }
            if let Some(ch) = hr.cholesky() {
                dir = Some(ch.solve(&gs));
                break;
            }
        }
        let dir = dir.unwrap_or_else(|| gs.clone() / scale);

        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let mut trial = b;
            for (r, &i) in active.iter().enumerate() {
                trial[i] = (b[i] + step * dir[r]).clamp(-PARAM_BOUND, PARAM_BOUND);
            }
            let v = lik(&trial);
            if v.is_finite() && v >= cur - 1e-12 * cur.abs().max(1.0) {
                improved = v > cur || trial != b;
                b = trial;
                cur = v;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    let (g, _) = grad_hess(&b);
    let on_bound = separated || free.iter().any(|&i| b[i].abs() >= PARAM_BOUND);
    let free_norm = free
        .iter()
        .filter(|&&i| !(b[i].abs() >= PARAM_BOUND && g[i] * b[i].signum() > 0.0))
        .map(|&i| g[i] * g[i])
        .sum::<f64>()
        .sqrt();
    if free_norm > GRAD_TOL && free_norm / n.max(1.0) > 1e-9 {
        return Err(Error::estimation(
            "local MLE",
            format!("no convergence after {iterations} iterations (gradient {free_norm:.3e})"),
        ));
    }
    Ok(MleFit {
        params: ExpFamilyParams::new(b, x0, interval)?,
        log_likelihood: cur,
        gradient_norm: free_norm,
        iterations,
        diverged: on_bound,
        degenerate: false,
    })
}

/// Maximum-likelihood fit of all three parameters.
///
/// With fewer than three points the uniform model is returned and flagged.
pub fn fit_mle(data: &AngularSample, x0: f64, interval: Arc) -> Result<MleFit> {
    let stats = SufficientStats::from_points(data.angles(), x0, &interval)?;
    if stats.n < 3 {
        let params = ExpFamilyParams::uniform(x0, interval)?;
        return Ok(MleFit {
            log_likelihood: log_likelihood(&params, &stats),
            params,
            gradient_norm: 0.0,
            iterations: 0,
            diverged: false,
            degenerate: true,
        });
    }
    fit_mle_stats(&stats, x0, interval, [None; 3])
}

/// Fit under the bump-weighted likelihood `Π ρ(x_j) g(x_j | β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMleFit {
    pub fit: MleFit,
    /// `Σ log g(x_j | β̂)`.
    pub objective: f64,
    /// `Σ log ρ(x_j) + Σ log g(x_j | β̂)`.
    pub weighted_objective: f64,
}

/// The weight `Π ρ(x_j)` does not involve β, so the maximiser is the plain MLE;
/// both objective values are reported.
pub fn fit_mle_weighted(
    data: &AngularSample,
    bump: &BumpFunction,
    x0: f64,
    interval: Arc,
) -> Result<WeightedMleFit> {
    let fit = fit_mle(data, x0, interval)?;
    let log_rho: f64 = data.angles().iter().map(|&x| bump.eval(x).ln()).sum();
    Ok(WeightedMleFit {
        objective: fit.log_likelihood,
        weighted_objective: fit.log_likelihood + log_rho,
        fit,
    })
}
