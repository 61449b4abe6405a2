//! Circular kernel density estimators and bandwidth selectors.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::circle::{empirical_fourier, AngularSample};
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::spline::{default_order, shrinkage};

/// Kernel profile on `[-1, 1]` (or the real line for the Gaussian).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Epanechnikov,
    Quartic,
    Cos2,
    Uniform,
    /// Gaussian profile wrapped around the circle; `h` is the standard deviation.
    WrappedNormal,
}

impl KernelKind {
    pub fn is_compact(self) -> bool {
        !matches!(self, KernelKind::WrappedNormal)
    }

    /// Profile `K(u)`.
    pub fn profile(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            KernelKind::WrappedNormal => (-0.5 * u * u).exp() / (TAU).sqrt(),
            _ if a > 1.0 => 0.0,
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelKind::Quartic => {
                let t = 1.0 - u * u;
                0.9375 * t * t
            }
            KernelKind::Cos2 => (0.5 * PI * u).cos().powi(2),
            KernelKind::Uniform => 0.5,
        }
    }

    /// `K * K` evaluated at `t`.
    pub fn autoconvolution(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelKind::WrappedNormal => (-0.25 * t * t).exp() / (2.0 * PI.sqrt()),
            _ if a >= 2.0 => 0.0,
            KernelKind::Epanechnikov => 3.0 / 160.0 * (2.0 - a).powi(3) * (a * a + 6.0 * a + 4.0),
            KernelKind::Uniform => 0.25 * (2.0 - a),
            _ => {
                let g = gl24();
                g.integrate(a - 1.0, 1.0, |s| self.profile(s) * self.profile(a - s))
            }
        }
    }

    /// `(k₂, j₂) = (∫u²K, ∫K²)`.
    pub fn moments(self) -> (f64, f64) {
        if self == KernelKind::WrappedNormal {
            return (1.0, 1.0 / (2.0 * PI.sqrt()));
        }
        let g = GaussLegendre::new(32);
        let k2 = g.integrate(-1.0, 1.0, |u| u * u * self.profile(u));
        let j2 = g.integrate(-1.0, 1.0, |u| self.profile(u).powi(2));
        (k2, j2)
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => KernelKind::Epanechnikov,
            "quartic" | "biweight" => KernelKind::Quartic,
            "cos2" => KernelKind::Cos2,
            "uniform" => KernelKind::Uniform,
            "wrapped_normal" | "normal" | "gaussian" => KernelKind::WrappedNormal,
            other => return Err(Error::Domain(format!("unknown kernel '{other}'"))),
        })
    }
}

fn gl24() -> &'static GaussLegendre {
    static G: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    G.get_or_init(|| GaussLegendre::new(24))
}

/// A kernel with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        if kind.is_compact() && bandwidth > PI + 1e-12 {
            return Err(Error::Domain(format!(
                "compact kernel bandwidth {bandwidth} exceeds π"
            )));
        }
        Ok(KernelSpec { kind, bandwidth })
    }

    /// The `(2m/π) cos²(m x)` kernel, i.e. cos² with `h = π / (2m)`.
    pub fn cos2(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("cos² concentration m must be >= 1".into()));
        }
        KernelSpec::new(KernelKind::Cos2, PI / (2.0 * m as f64))
    }

    /// `K_h(d) = K(d/h)/h` at circular distance `d ∈ [0, π]`.
    pub fn eval_distance(&self, d: f64) -> f64 {
        let h = self.bandwidth;
        match self.kind {
            KernelKind::WrappedNormal => {
                let reach = (10.0 * h / TAU).ceil() as i64 + 1;
                (-reach..=reach)
                    .map(|m| self.kind.profile((d + TAU * m as f64) / h))
                    .sum::<f64>()
                    / h
            }
            k => k.profile(d / h) / h,
        }
    }

    /// `(K_h * K_h)(d)` on the circle.
    pub fn autoconv_distance(&self, d: f64) -> f64 {
        let h = self.bandwidth;
        match self.kind {
            KernelKind::WrappedNormal => {
                let reach = (14.0 * h / TAU).ceil() as i64 + 1;
                (-reach..=reach)
                    .map(|m| self.kind.autoconvolution((d + TAU * m as f64) / h))
                    .sum::<f64>()
                    / h
            }
            k => (k.autoconvolution(d / h) + k.autoconvolution((TAU - d) / h)) / h,
        }
    }

    /// Half-width of the kernel's support on the circle.
    fn reach(&self) -> f64 {
        match self.kind {
            KernelKind::WrappedNormal => 10.0 * self.bandwidth,
            _ => self.bandwidth,
        }
    }
}

/// A kernel estimate ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct KdeEstimate {
    sorted: Vec<f64>,
    pub spec: KernelSpec,
}

impl KdeEstimate {
    pub fn new(sample: &AngularSample, spec: KernelSpec) -> Result<Self> {
        sample.require_nonempty("kde")?;
        Ok(KdeEstimate {
            sorted: sample.sorted(),
            spec,
        })
    }

    /// Density at `x` with respect to arc length.
    pub fn density(&self, x: f64) -> f64 {
        let x = crate::circle::wrap(x);
        let r = self.spec.reach();
        let n = self.sorted.len() as f64;
        let mut s = 0.0;
        let mut add = |slice: &[f64]| {
            for &t in slice {
                let d = (t - x).abs();
                s += self.spec.eval_distance(d.min(TAU - d));
            }
        };
        if r >= PI {
            add(&self.sorted);
        } else {
            let (lo, hi) = (x - r, x + r);
            let idx = |v: f64| self.sorted.partition_point(|&t| t < v);
            let idx_le = |v: f64| self.sorted.partition_point(|&t| t <= v);
            if lo < 0.0 {
                add(&self.sorted[..idx_le(hi)]);
                add(&self.sorted[idx(lo + TAU)..]);
            } else if hi >= TAU {
                add(&self.sorted[idx(lo)..]);
                add(&self.sorted[..idx_le(hi - TAU)]);
            } else {
                add(&self.sorted[idx(lo)..idx_le(hi)]);
            }
        }
        s / n
    }

    pub fn density_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.density(x)).collect()
    }
}

/// `(1/n) Σ K_h(d(x, X_i))`.
pub fn kde_estimate(sample: &AngularSample, spec: KernelSpec, x: f64) -> Result<f64> {
    Ok(KdeEstimate::new(sample, spec)?.density(x))
}

/// `(1/n)(2m/π) Σ cos²(m d_i) 1{m d_i <= π/2}`.
pub fn cos2_estimate(sample: &AngularSample, m: u32, x: f64) -> Result<f64> {
    kde_estimate(sample, KernelSpec::cos2(m)?, x)
}

/// `E[e^{ikξ}]` for ξ with density `(2m/π) cos²(m x)` on `|x| <= π/(2m)`.
pub fn cos2_fourier_factor(m: u32, k: i64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("cos² concentration m must be >= 1".into()));
    }
    let mf = m as f64;
    let a = PI / (2.0 * mf);
    let g = |c: f64| if c == 0.0 { a } else { (c * a).sin() / c };
    let k = k.abs() as f64;
    Ok(mf / PI * (2.0 * g(k) + g(2.0 * mf - k) + g(2.0 * mf + k)))
}

/// Plug-in bandwidth and the pilot roughness behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginBandwidth {
    pub h: f64,
    /// Estimated `∫ f''²`.
    pub beta: f64,
    /// The pilot roughness was (numerically) zero and was replaced by `1e-6`.
    pub degenerate: bool,
    /// `h` hit the upper limit of π.
    pub capped: bool,
}

/// `h = (j₂ / (n k₂² β))^{1/5}`.
pub fn plugin_formula(n: usize, kind: KernelKind, beta: f64) -> f64 {
    let (k2, j2) = kind.moments();
    (j2 / (n as f64 * k2 * k2 * beta)).powf(0.2)
}

/// Plug-in bandwidth with a Fourier-spline pilot (`λ = n^{-4/5}`).
pub fn bandwidth_plugin(sample: &AngularSample, kind: KernelKind) -> Result<PluginBandwidth> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::Domain("plug-in bandwidth needs n >= 2".into()));
    }
    let lambda = (n as f64).powf(-0.8);
    let u = empirical_fourier(sample, default_order(n))?;
    let mut beta = 0.0;
    for (k, c) in u.nonnegative().iter().enumerate().skip(1) {
        let ck = c * shrinkage(k as i64, lambda)?;
        beta += (k as f64).powi(4) * ck.norm_sqr();
    }
    beta /= PI;
    // rounding leaves ~1e-30 where the roughness is exactly zero
    let degenerate = !(beta > 1e-12) || !beta.is_finite();
    if degenerate {
        beta = 1e-6;
    }
    let raw = plugin_formula(n, kind, beta);
    Ok(PluginBandwidth {
        h: raw.min(PI),
        beta,
        degenerate,
        capped: raw > PI,
    })
}

/// Candidate bandwidths for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid(Vec<f64>);

impl BandwidthGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("bandwidth grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || **v > PI) {
            return Err(Error::Domain(format!("bandwidth {v} outside (0, π]")));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(BandwidthGrid(values))
    }

    pub fn log_spaced(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m < 2 || !(lo > 0.0) || !(hi > lo) {
            return Err(Error::Domain(format!("bad bandwidth grid [{lo}, {hi}] x {m}")));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut v: Vec<f64> = (0..m)
            .map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())
            .collect();
        v[0] = lo;
        v[m - 1] = hi;
        BandwidthGrid::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for BandwidthGrid {
    fn default() -> Self {
        BandwidthGrid::log_spaced(0.01, 3.0, 40).expect("static grid")
    }
}

/// Cross-validated bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvBandwidth {
    pub h: f64,
    pub score: f64,
    /// Chosen `h` is the smallest grid value; LSCV often degenerates there.
    pub at_lower_edge: bool,
    pub at_upper_edge: bool,
    pub scores: Vec<(f64, f64)>,
}

fn pair_distances(sample: &AngularSample) -> Vec<f64> {
    let a = sample.angles();
    let mut d = Vec::with_capacity(a.len() * a.len().saturating_sub(1) / 2);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let t = (a[i] - a[j]).abs();
            d.push(t.min(TAU - t));
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

fn lscv_from_distances(n: usize, dist: &[f64], spec: &KernelSpec) -> f64 {
    let nf = n as f64;
    let h = spec.bandwidth;
    // pairs beyond both supports contribute nothing; the wrapped
    // autoconvolution term only matters for h > π/2
    let cut = if spec.kind.is_compact() && h <= 0.5 * PI {
        dist.partition_point(|&d| d < 2.0 * h)
    } else {
        dist.len()
    };
    let (mut conv, mut loo) = (0.0, 0.0);
    for &d in &dist[..cut] {
        conv += spec.autoconv_distance(d);
        loo += spec.eval_distance(d);
    }
    let int_sq = (nf * spec.autoconv_distance(0.0) + 2.0 * conv) / (nf * nf);
    int_sq - 2.0 * 2.0 * loo / (nf * (nf - 1.0))
}

/// `∫ f̂_h² − (2/n) Σ f̂_{h,−i}(X_i)`.
pub fn lscv_score(sample: &AngularSample, kind: KernelKind, h: f64) -> Result<f64> {
    if sample.len() < 3 {
        return Err(Error::Domain("LSCV needs n >= 3".into()));
    }
    let spec = KernelSpec::new(kind, h)?;
    Ok(lscv_from_distances(sample.len(), &pair_distances(sample), &spec))
}

/// Least-squares cross-validation over `grid`; ties go to the larger `h`.
pub fn bandwidth_cv(sample: &AngularSample, kind: KernelKind, grid: &BandwidthGrid) -> Result<CvBandwidth> {
    let n = sample.len();
    if n < 3 {
        return Err(Error::Domain("LSCV needs n >= 3".into()));
    }
    let dist = pair_distances(sample);
    let scores = grid
        .values()
        .iter()
        .map(|&h| Ok((h, lscv_from_distances(n, &dist, &KernelSpec::new(kind, h)?))))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.1 <= scores[best].1 {
            best = i;
        }
    }
    Ok(CvBandwidth {
        h: scores[best].0,
        score: scores[best].1,
        at_lower_edge: best == 0,
        at_upper_edge: best + 1 == scores.len(),
        scores,
    })
}
