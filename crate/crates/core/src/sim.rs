//! Simulation scenarios and Monte Carlo error machinery.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::circle::{empirical_fourier, wrap, AngularSample, FourierCoefficients};
use crate::error::{Error, Result};
use crate::kde::{bandwidth_cv, bandwidth_plugin, cos2_estimate, BandwidthGrid, KdeEstimate, KernelKind, KernelSpec};
use crate::pipeline::{estimate, PipelineConfig};
use crate::quad::GaussLegendre;
use crate::spline::{default_order, select_lambda, LambdaGrid, SplineDensityEstimate};

/// Quadrature nodes used for integrated errors.
pub const MISE_NODES: usize = 8192;
/// Half-width of the window dropped around each atom.
pub const ATOM_EXCLUSION: f64 = TAU / 512.0;
/// Half-width of the windows used for per-feature errors.
pub const FEATURE_WINDOW: f64 = 0.1;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// A data-generating distribution on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Normal with mode 0 truncated to `[−π/2, π/2)` with probability `1 − ε`,
    /// otherwise `±3π/4` with equal probability.
    EpsMixture { eps: f64, sigma: f64 },
    /// Equal mixture of wrapped normals at `±θ`.
    WrappedBimodal { theta: f64, sigma: f64 },
    /// Equal mixture of `U(−3π/4, −π/4)` and a symmetric triangle on `[π/4, 3π/4]`.
    UnifTriangular,
    /// Plateaus `1/π`, `1/(2π)`, `2/π` on `[−π/2, −π/4)`, `[−π/4, π/4)`, `[π/4, π/2)`.
    PiecewiseUniform,
    Uniform,
}

impl Scenario {
    pub fn eps_mixture(eps: f64) -> Self {
        Scenario::EpsMixture { eps, sigma: 0.5 }
    }

    pub fn wrapped_bimodal(theta: f64) -> Self {
        Scenario::WrappedBimodal { theta, sigma: 0.4 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::EpsMixture { .. } => "eps_mixture",
            Scenario::WrappedBimodal { .. } => "wrapped_bimodal",
            Scenario::UnifTriangular => "unif_triangular",
            Scenario::PiecewiseUniform => "piecewise_uniform",
            Scenario::Uniform => "uniform",
        }
    }

    /// Scenario by name with default parameters.
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "eps_mixture" => Ok(Scenario::eps_mixture(0.05)),
            "wrapped_bimodal" => Ok(Scenario::wrapped_bimodal(FRAC_PI_4)),
            "unif_triangular" => Ok(Scenario::UnifTriangular),
            "piecewise_uniform" => Ok(Scenario::PiecewiseUniform),
            "uniform" => Ok(Scenario::Uniform),
            _ => Err(Error::Domain(format!("unknown scenario '{name}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scenario::EpsMixture { eps, sigma } => {
                if !(0.0..=1.0).contains(&eps) {
                    return Err(Error::Domain(format!("eps must be in [0, 1], got {eps}")));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
                }
            }
            Scenario::WrappedBimodal { theta, sigma } => {
                if !(0.0..FRAC_PI_2).contains(&theta) {
                    return Err(Error::Domain(format!("theta must be in [0, π/2), got {theta}")));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Draw `n` points using a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<AngularSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<AngularSample> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(n);
        match *self {
            Scenario::EpsMixture { eps, sigma } => {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
                for _ in 0..n {
                    if rng.random::<f64>() < eps {
                        out.push(if rng.random::<bool>() { 0.75 * PI } else { 1.25 * PI });
                    } else {
                        let z = loop {
                            let z: f64 = normal.sample(rng);
                            if (-FRAC_PI_2..FRAC_PI_2).contains(&z) {
                                break z;
                            }
                        };
                        out.push(wrap(z));
                    }
                }
            }
            Scenario::WrappedBimodal { theta, sigma } => {
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
                for _ in 0..n {
                    let c = if rng.random::<bool>() { theta } else { -theta };
                    out.push(wrap(c + normal.sample(rng)));
                }
            }
            Scenario::UnifTriangular => {
                for _ in 0..n {
                    let u: f64 = rng.random();
                    if rng.random::<bool>() {
                        out.push(wrap(-0.75 * PI + FRAC_PI_2 * u));
                    } else {
                        let (a, w) = (FRAC_PI_4, FRAC_PI_2);
                        let x = if u < 0.5 {
                            a + w * (u / 2.0).sqrt()
                        } else {
                            a + w - w * ((1.0 - u) / 2.0).sqrt()
                        };
                        out.push(x);
                    }
                }
            }
            Scenario::PiecewiseUniform => {
                for _ in 0..n {
                    let p: f64 = rng.random();
                    let u: f64 = rng.random();
                    let x = if p < 0.25 {
                        -FRAC_PI_2 + FRAC_PI_4 * u
                    } else if p < 0.5 {
                        -FRAC_PI_4 + FRAC_PI_2 * u
                    } else {
                        FRAC_PI_4 + FRAC_PI_4 * u
                    };
                    out.push(wrap(x));
                }
            }
            Scenario::Uniform => {
                for _ in 0..n {
                    out.push(TAU * rng.random::<f64>());
                }
            }
        }
        Ok(AngularSample::from_wrapped(out))
    }

    /// Density of the absolutely continuous part with respect to arc length.
    pub fn density(&self, x: f64) -> f64 {
        let s = wrap(x);
        let t = if s >= PI { s - TAU } else { s };
        match *self {
            Scenario::EpsMixture { eps, sigma } => {
                if (-FRAC_PI_2..FRAC_PI_2).contains(&t) {
                    let z = truncation_mass(sigma);
                    (1.0 - eps) * (-0.5 * (t / sigma).powi(2)).exp() / (sigma * TAU.sqrt() * z)
                } else {
                    0.0
                }
            }
            Scenario::WrappedBimodal { theta, sigma } => {
                0.5 * (wrapped_normal(t - theta, sigma) + wrapped_normal(t + theta, sigma))
            }
            Scenario::UnifTriangular => {
                if (-0.75 * PI..-FRAC_PI_4).contains(&t) {
                    1.0 / PI
                } else if (FRAC_PI_4..0.75 * PI).contains(&t) {
                    let peak = 2.0 / PI;
                    peak * (1.0 - (t - FRAC_PI_2).abs() / FRAC_PI_4)
                } else {
                    0.0
                }
            }
            Scenario::PiecewiseUniform => {
                if (-FRAC_PI_2..-FRAC_PI_4).contains(&t) {
                    1.0 / PI
                } else if (-FRAC_PI_4..FRAC_PI_4).contains(&t) {
                    1.0 / TAU
                } else if (FRAC_PI_4..FRAC_PI_2).contains(&t) {
                    2.0 / PI
                } else {
                    0.0
                }
            }
            Scenario::Uniform => 1.0 / TAU,
        }
    }

    /// Point masses `(location, probability)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match *self {
            Scenario::EpsMixture { eps, .. } if eps > 0.0 => {
                vec![(0.75 * PI, eps / 2.0), (1.25 * PI, eps / 2.0)]
            }
            _ => Vec::new(),
        }
    }

    /// Locations of breaks in the density or its slope, and atoms, in `[0, 2π)`.
    pub fn feature_points(&self) -> Vec<f64> {
        let pts: Vec<f64> = match *self {
            Scenario::EpsMixture { eps, .. } => {
                let mut v = vec![-FRAC_PI_2, FRAC_PI_2];
                if eps > 0.0 {
                    v.extend([0.75 * PI, -0.75 * PI]);
                }
                v
            }
            Scenario::UnifTriangular => vec![-0.75 * PI, -FRAC_PI_4, FRAC_PI_4, FRAC_PI_2, 0.75 * PI],
            Scenario::PiecewiseUniform => vec![-FRAC_PI_2, -FRAC_PI_4, FRAC_PI_4, FRAC_PI_2],
            _ => Vec::new(),
        };
        pts.into_iter().map(wrap).collect()
    }

    /// Break points of the continuous density, used to split quadrature.
    fn breaks(&self) -> Vec<f64> {
        let mut b = match *self {
            Scenario::EpsMixture { .. } => vec![wrap(-FRAC_PI_2), FRAC_PI_2],
            Scenario::UnifTriangular => self.feature_points(),
            Scenario::PiecewiseUniform => self.feature_points(),
            _ => Vec::new(),
        };
        b.push(0.0);
        b.push(PI);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// True Fourier coefficients `E e^{ikX}` for `k = 0..=K`, atoms included.
    pub fn fourier(&self, max_order: usize) -> Result<FourierCoefficients> {
        self.validate()?;
        let mut c = vec![Complex64::new(0.0, 0.0); max_order + 1];
        match *self {
            Scenario::WrappedBimodal { theta, sigma } => {
                for (k, ck) in c.iter_mut().enumerate() {
                    let kf = k as f64;
                    *ck = Complex64::new((-0.5 * sigma * sigma * kf * kf).exp() * (kf * theta).cos(), 0.0);
                }
            }
            Scenario::Uniform => {}
            _ => {
                let gl = GaussLegendre::new(32);
                let b = self.breaks();
                let pieces = (max_order / 4).max(4);
                for i in 0..b.len() {
                    let lo = b[i];
                    let hi = if i + 1 < b.len() { b[i + 1] } else { TAU };
                    for (k, ck) in c.iter_mut().enumerate() {
                        let kf = k as f64;
                        let re = gl.integrate_composite(lo, hi, pieces, |x| self.density(x) * (kf * x).cos());
                        let im = gl.integrate_composite(lo, hi, pieces, |x| self.density(x) * (kf * x).sin());
                        *ck += Complex64::new(re, im);
                    }
                }
                for (loc, p) in self.atoms() {
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck += Complex64::from_polar(p, k as f64 * loc);
                    }
                }
            }
        }
        c[0] = Complex64::new(1.0, 0.0);
        FourierCoefficients::from_nonnegative(c)
    }

    /// Total mass of the continuous part, by quadrature.
    pub fn continuous_mass(&self) -> f64 {
        let gl = GaussLegendre::new(32);
        let b = self.breaks();
        (0..b.len())
            .map(|i| {
                let hi = if i + 1 < b.len() { b[i + 1] } else { TAU };
                gl.integrate_composite(b[i], hi, 16, |x| self.density(x))
            })
            .sum()
    }
}

fn truncation_mass(sigma: f64) -> f64 {
    let n = NormalDist::new(0.0, sigma).expect("positive sigma");
    n.cdf(FRAC_PI_2) - n.cdf(-FRAC_PI_2)
}

fn wrapped_normal(d: f64, sigma: f64) -> f64 {
    let wraps = (6.0 * sigma / TAU).ceil() as i64 + 1;
    let c = 1.0 / (sigma * TAU.sqrt());
    (-wraps..=wraps)
        .map(|j| {
            let z = (d + TAU * j as f64) / sigma;
            c * (-0.5 * z * z).exp()
        })
        .sum()
}

/// Density estimators compared by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Pipeline(PipelineConfig),
    /// Fourier spline with automatically selected penalty and no detection.
    Spline,
    KdePlugin { kernel: KernelKind },
    KdeCv { kernel: KernelKind },
    Cos2Plugin,
    /// Returns the true continuous density.
    Oracle,
    /// Returns `1/(2π)`.
    Uniform,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Pipeline(_) => "pipeline".into(),
            Method::Spline => "spline".into(),
            Method::KdePlugin { kernel } => format!("kde_plugin_{}", kernel_name(*kernel)),
            Method::KdeCv { kernel } => format!("kde_cv_{}", kernel_name(*kernel)),
            Method::Cos2Plugin => "cos2_plugin".into(),
            Method::Oracle => "oracle".into(),
            Method::Uniform => "uniform".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "pipeline" => Ok(Method::Pipeline(PipelineConfig::default())),
            "spline" => Ok(Method::Spline),
            "kde" | "kde_plugin" => Ok(Method::KdePlugin {
                kernel: KernelKind::Epanechnikov,
            }),
            "kde_cv" => Ok(Method::KdeCv {
                kernel: KernelKind::Epanechnikov,
            }),
            "cos2" | "cos2_plugin" => Ok(Method::Cos2Plugin),
            "oracle" => Ok(Method::Oracle),
            "uniform" => Ok(Method::Uniform),
            _ => Err(Error::Domain(format!("unknown method '{name}'"))),
        }
    }

    /// Fit on `sample` and evaluate at `xs` (arc-length densities).
    pub fn fit_eval(&self, scenario: &Scenario, sample: &AngularSample, xs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Method::Pipeline(cfg) => {
                let est = estimate(sample, cfg)?;
                Ok(xs.iter().map(|&x| est.evaluate(x, false)).collect())
            }
            Method::Spline => {
                let est = auto_spline(sample)?;
                Ok(xs.iter().map(|&x| est.density(x)).collect())
            }
            Method::KdePlugin { kernel } => {
                let h = bandwidth_plugin(sample, *kernel)?.h;
                Ok(KdeEstimate::new(sample, KernelSpec::new(*kernel, h)?)?.density_many(xs))
            }
            Method::KdeCv { kernel } => {
                let h = bandwidth_cv(sample, *kernel, &BandwidthGrid::default())?.h;
                Ok(KdeEstimate::new(sample, KernelSpec::new(*kernel, h)?)?.density_many(xs))
            }
            Method::Cos2Plugin => {
                let m = cos2_order(sample)?;
                Ok(KdeEstimate::new(sample, KernelSpec::cos2(m)?)?.density_many(xs))
            }
            Method::Oracle => Ok(xs.iter().map(|&x| scenario.density(x)).collect()),
            Method::Uniform => Ok(vec![1.0 / TAU; xs.len()]),
        }
    }
}

fn kernel_name(k: KernelKind) -> &'static str {
    match k {
        KernelKind::Epanechnikov => "epanechnikov",
        KernelKind::Quartic => "quartic",
        KernelKind::Cos2 => "cos2",
        KernelKind::Uniform => "uniform",
        KernelKind::WrappedNormal => "wrapped_normal",
    }
}

/// Spline fit with penalty chosen on the default grid.
pub fn auto_spline(sample: &AngularSample) -> Result<SplineDensityEstimate> {
    let n = sample.len();
    let u = empirical_fourier(sample, default_order(n))?;
    let (lambda, _) = select_lambda(&u, n, &LambdaGrid::default())?;
    SplineDensityEstimate::from_moments(&u, lambda, n)
}

/// Order `m` of the `cos²` kernel from the plug-in bandwidth, `h = π/(2m)`.
pub fn cos2_order(sample: &AngularSample) -> Result<u32> {
    let h = bandwidth_plugin(sample, KernelKind::Cos2)?.h;
    Ok(((PI / (2.0 * h)).round() as u32).max(1))
}

/// Integrated squared error between an estimate and a scenario.
#[derive(Debug, Clone)]
pub struct IseGrid {
    nodes: Vec<f64>,
    truth: Vec<f64>,
    /// Quadrature weight per node; zero inside atom windows.
    weight: Vec<f64>,
    windows: Vec<(String, Vec<usize>)>,
}

impl IseGrid {
    pub fn new(scenario: &Scenario) -> Self {
        let h = TAU / MISE_NODES as f64;
        let nodes: Vec<f64> = (0..MISE_NODES).map(|i| (i as f64 + 0.5) * h).collect();
        let truth = nodes.iter().map(|&x| scenario.density(x)).collect();
        let atoms = scenario.atoms();
        let near = |x: f64, c: f64, w: f64| crate::circle::signed_diff(x, c).abs() <= w;
        let weight = nodes
            .iter()
            .map(|&x| if atoms.iter().any(|&(a, _)| near(x, a, ATOM_EXCLUSION)) { 0.0 } else { h })
            .collect();
        let windows = scenario
            .feature_points()
            .into_iter()
            .map(|c| {
                let idx = (0..MISE_NODES).filter(|&i| near(nodes[i], c, FEATURE_WINDOW)).collect();
                (format!("{c:.4}"), idx)
            })
            .collect();
        IseGrid {
            nodes,
            truth,
            weight,
            windows,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn ise(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.truth)
            .zip(&self.weight)
            .map(|((v, t), w)| w * (v - t) * (v - t))
            .sum()
    }

    /// Squared error restricted to a window around each feature point.
    pub fn feature_ise(&self, values: &[f64]) -> Vec<(String, f64)> {
        self.windows
            .iter()
            .map(|(name, idx)| {
                let s = idx
                    .iter()
                    .map(|&i| self.weight[i] * (values[i] - self.truth[i]).powi(2))
                    .sum();
                (name.clone(), s)
            })
            .collect()
    }
}

/// Monte Carlo MISE summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseReport {
    pub method: String,
    pub scenario: Scenario,
    pub n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub mise_mean: f64,
    pub mise_stderr: f64,
    pub per_feature_mise: Option<BTreeMap<String, f64>>,
}

/// Generator for replicate `r` under `seed`; independent of scheduling.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Run `f` on replicates `0..R` in parallel. Failed replicates are dropped;
/// more than [`MAX_FAILURE_RATE`] of them is an error.
pub fn run_replicates<T, F>(replicates: usize, seed: u64, f: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..replicates)
        .into_par_iter()
        .map(|r| f(r, &mut replicate_rng(seed, r)))
        .collect();
    let mut ok = Vec::with_capacity(replicates);
    let mut failures = 0;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failures += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * replicates as f64 {
        return Err(Error::estimation(
            "simulation",
            format!(
                "{failures} of {replicates} replicates failed; first error: {}",
                first_err.map(|e| e.to_string()).unwrap_or_default()
            ),
        ));
    }
    Ok((ok, failures))
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let mean = v.iter().sum::<f64>() / r;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Average integrated squared error of `method` over `R` replicates of size `n`.
pub fn mise(method: &Method, scenario: &Scenario, n: usize, replicates: usize, seed: u64) -> Result<MiseReport> {
    if replicates < 2 {
        return Err(Error::Domain("mise needs at least 2 replicates".into()));
    }
    scenario.validate()?;
    let grid = IseGrid::new(scenario);
    let (rows, failures) = run_replicates(replicates, seed, |_, rng| {
        let s = scenario.sample_with(n, rng)?;
        let v = method.fit_eval(scenario, &s, grid.nodes())?;
        Ok((grid.ise(&v), grid.feature_ise(&v)))
    })?;
    let ises: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (mise_mean, mise_stderr) = mean_stderr(&ises);
    let per_feature_mise = if grid.windows.is_empty() {
        None
    } else {
        let mut m = BTreeMap::new();
        for (j, (name, _)) in grid.windows.iter().enumerate() {
            let s: f64 = rows.iter().map(|r| r.1[j].1).sum();
            m.insert(name.clone(), s / rows.len() as f64);
        }
        Some(m)
    };
    Ok(MiseReport {
        method: method.label(),
        scenario: *scenario,
        n,
        replicates,
        failures,
        mise_mean,
        mise_stderr,
        per_feature_mise,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub n: usize,
    pub eps: f64,
    pub mise: f64,
    pub mise_stderr: f64,
    pub percent_increase: f64,
}

/// Percentage increase in KDE MISE relative to `ε = 0` for the
/// contaminated truncated `N(0, 1)`. The kernel is Epanechnikov with a
/// plug-in bandwidth.
pub fn table1_percent_increase(eps_list: &[f64], n_list: &[usize], replicates: usize, seed: u64) -> Result<Vec<Table1Row>> {
    let method = Method::KdePlugin {
        kernel: KernelKind::Epanechnikov,
    };
    let mut rows = Vec::new();
    for &n in n_list {
        let base = mise(&method, &Scenario::EpsMixture { eps: 0.0, sigma: 1.0 }, n, replicates, seed)?;
        rows.push(Table1Row {
            n,
            eps: 0.0,
            mise: base.mise_mean,
            mise_stderr: base.mise_stderr,
            percent_increase: 0.0,
        });
        for &eps in eps_list.iter().filter(|&&e| e != 0.0) {
            let r = mise(&method, &Scenario::EpsMixture { eps, sigma: 1.0 }, n, replicates, seed)?;
            rows.push(Table1Row {
                n,
                eps,
                mise: r.mise_mean,
                mise_stderr: r.mise_stderr,
                percent_increase: 100.0 * (r.mise_mean - base.mise_mean) / base.mise_mean,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub theta: f64,
    pub spline: f64,
    pub cos2: f64,
    pub kde_cv: f64,
    pub kde_plugin: f64,
}

/// The default `θ` grid: `0.10, 0.15, …, 1.55`.
pub fn table2_theta_grid() -> Vec<f64> {
    (0..30).map(|i| 0.10 + 0.05 * i as f64).collect()
}

/// Mean squared error at `x = 0` on the wrapped bimodal scenario for the
/// spline, `cos²`, cross-validated KDE and plug-in KDE.
pub fn table2_compare(theta_grid: &[f64], n: usize, replicates: usize, seed: u64) -> Result<Vec<Table2Row>> {
    let kernel = KernelKind::Epanechnikov;
    let grid = BandwidthGrid::default();
    theta_grid
        .iter()
        .map(|&theta| {
            let sc = Scenario::wrapped_bimodal(theta);
            sc.validate()?;
            let f0 = sc.density(0.0);
            let (rows, _) = run_replicates(replicates, seed, |_, rng| {
                let s = sc.sample_with(n, rng)?;
                let sp = auto_spline(&s)?.density(0.0);
                let c2 = cos2_estimate(&s, cos2_order(&s)?, 0.0)?;
                let hcv = bandwidth_cv(&s, kernel, &grid)?.h;
                let cv = KdeEstimate::new(&s, KernelSpec::new(kernel, hcv)?)?.density(0.0);
                let hpi = bandwidth_plugin(&s, kernel)?.h;
                let pi = KdeEstimate::new(&s, KernelSpec::new(kernel, hpi)?)?.density(0.0);
                Ok([sp, c2, cv, pi].map(|v| (v - f0) * (v - f0)))
            })?;
            let m = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
            Ok(Table2Row {
                theta,
                spline: m(0),
                cos2: m(1),
                kde_cv: m(2),
                kde_plugin: m(3),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities_integrate_to_continuous_mass() {
        for sc in [
            Scenario::eps_mixture(0.0),
            Scenario::eps_mixture(0.2),
            Scenario::wrapped_bimodal(0.7),
            Scenario::UnifTriangular,
            Scenario::PiecewiseUniform,
            Scenario::Uniform,
        ] {
            let atoms: f64 = sc.atoms().iter().map(|a| a.1).sum();
            assert!((sc.continuous_mass() + atoms - 1.0).abs() < 1e-8, "{sc:?}");
        }
    }

    #[test]
    fn full_contamination_gives_atoms_only() {
        let s = Scenario::EpsMixture { eps: 1.0, sigma: 0.5 }.sample(400, 3).unwrap();
        let hi = s.angles().iter().filter(|&&x| x == 0.75 * PI).count();
        let lo = s.angles().iter().filter(|&&x| x == 1.25 * PI).count();
        assert_eq!(hi + lo, 400);
        assert!((hi as f64 - 200.0).abs() < 3.0 * 10.0);
    }

    #[test]
    fn sampling_is_seeded() {
        let a = Scenario::UnifTriangular.sample(50, 9).unwrap();
        let b = Scenario::UnifTriangular.sample(50, 9).unwrap();
        let c = Scenario::UnifTriangular.sample(50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Scenario::eps_mixture(1.5).sample(5, 0).is_err());
        assert!(Scenario::wrapped_bimodal(2.0).sample(5, 0).is_err());
        assert!(Scenario::Uniform.sample(0, 0).is_err());
    }

    #[test]
    fn numeric_fourier_matches_closed_form_for_uniform_piece() {
        // coefficient of a single plateau is available in closed form
        let sc = Scenario::PiecewiseUniform;
        let c = sc.fourier(6).unwrap();
        let plateau = |a: f64, b: f64, h: f64, k: f64| {
            Complex64::new(0.0, -1.0) * h / k * (Complex64::from_polar(1.0, k * b) - Complex64::from_polar(1.0, k * a))
        };
        for k in 1..=6 {
            let kf = k as f64;
            let want = plateau(-FRAC_PI_2, -FRAC_PI_4, 1.0 / PI, kf)
                + plateau(-FRAC_PI_4, FRAC_PI_4, 1.0 / TAU, kf)
                + plateau(FRAC_PI_4, FRAC_PI_2, 2.0 / PI, kf);
            assert!((c.get(k) - want).norm() < 1e-10);
        }
    }

    #[test]
    fn oracle_and_failure_accounting() {
        let r = mise(&Method::Oracle, &Scenario::PiecewiseUniform, 30, 4, 1).unwrap();
        assert!(r.mise_mean < 1e-10);
        let out = run_replicates(100, 0, |r, _| if r < 5 { Err(Error::Domain("x".into())) } else { Ok(r) }).unwrap();
        assert_eq!(out.1, 5);
        assert!(run_replicates(100, 0, |r, _| if r < 6 { Err(Error::Domain("x".into())) } else { Ok(r) }).is_err());
    }
}
