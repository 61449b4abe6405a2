//! Bump functions, the partition of unity over feature regions, and the
//! recombination of local and smooth fits.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::circle::{signed_diff, wrap, Arc};
use crate::detect::DetectionReport;
use crate::error::{Error, Result};
use crate::local::{ExpFamilyParams, MleFit};
use crate::spline::SplineDensityEstimate;

/// `ρ(x) = exp(−tan²(π d / 2σ))` for circular displacement `|d| < σ`, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    pub center: f64,
    pub sigma: f64,
}

impl BumpFunction {
    pub fn new(center: f64, sigma: f64) -> Result<Self> {
        if !center.is_finite() || !(sigma > 0.0) || sigma > PI {
            return Err(Error::Domain(format!("bump needs 0 < σ <= π, got {sigma}")));
        }
        Ok(BumpFunction {
            center: wrap(center),
            sigma,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = signed_diff(x, self.center).abs();
        if d >= self.sigma {
            return 0.0;
        }
        let t = (FRAC_PI_2 * d / self.sigma).tan();
        (-t * t).exp()
    }

    /// The open support as an arc.
    pub fn support(&self) -> Arc {
        Arc {
            start: wrap(self.center - self.sigma),
            len: 2.0 * self.sigma,
        }
    }
}

pub fn bump_eval(b: &BumpFunction, x: f64) -> f64 {
    b.eval(x)
}

/// How bump widths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRule {
    /// Half-width of a finest dyadic cell.
    pub cell_half_width: f64,
    /// Lower bound on σ in units of `cell_half_width`.
    pub margin: f64,
}

impl SigmaRule {
    pub fn for_layer(max_layer: u32) -> Self {
        SigmaRule {
            cell_half_width: 0.5 * TAU / (1u64 << max_layer) as f64,
            margin: 1.5,
        }
    }
}

/// One bump per feature region; `complement = 1 − Σ ρ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PartitionOfUnity {
    pub bumps: Vec<BumpFunction>,
    /// Some σ had to be shrunk below the region half-width to keep supports disjoint.
    pub crowded: bool,
}

impl PartitionOfUnity {
    pub fn sum(&self, x: f64) -> f64 {
        self.bumps.iter().map(|b| b.eval(x)).sum()
    }

    pub fn complement(&self, x: f64) -> f64 {
        (1.0 - self.sum(x)).clamp(0.0, 1.0)
    }
}

/// Bumps centred on each region with σ from `rule`, kept pairwise disjoint.
pub fn build_partition_from_regions(regions: &[Arc], rule: &SigmaRule) -> Result<PartitionOfUnity> {
    let m = regions.len();
    let half: Vec<f64> = regions.iter().map(|r| 0.5 * r.len).collect();
    let centers: Vec<f64> = regions.iter().map(Arc::midpoint).collect();
    let mut crowded = false;
    let mut sigma: Vec<f64> = half
        .iter()
        .map(|&h| h.max(rule.margin * rule.cell_half_width).min(PI))
        .collect();
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let d = signed_diff(centers[i], centers[j]).abs();
            let gap = d - half[i] - half[j];
            if gap >= 0.0 {
                sigma[i] = sigma[i].min(half[i] + 0.5 * gap);
            } else {
                sigma[i] = sigma[i].min(0.5 * d);
                crowded = true;
            }
        }
    }
    let bumps = centers
        .iter()
        .zip(&sigma)
        .map(|(&c, &s)| {
            if s <= 0.0 {
                Err(Error::estimation("partition", "coincident feature regions"))
            } else {
                BumpFunction::new(c, s)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionOfUnity { bumps, crowded })
}

/// Partition subordinate to the regions of a detection report.
pub fn build_partition(report: &DetectionReport, rule: &SigmaRule) -> Result<PartitionOfUnity> {
    let regions: Vec<Arc> = report.features.iter().map(|f| f.interval).collect();
    build_partition_from_regions(&regions, rule)
}

/// A fitted local model and the share of the sample it describes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalComponent {
    pub fit: MleFit,
    /// Fraction of the sample inside the model interval.
    pub mass: f64,
}

impl LocalComponent {
    pub fn params(&self) -> &ExpFamilyParams {
        &self.fit.params
    }

    /// `mass · g(x)`, zero outside the interval.
    pub fn density(&self, x: f64) -> f64 {
        self.fit
            .params
            .log_density(x)
            .map_or(0.0, |l| self.mass * l.exp())
    }
}

/// The recombined, normalized estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedDensityEstimate {
    /// Equally spaced angles `2πi/N`.
    pub grid: Vec<f64>,
    /// Normalized density (with respect to arc length) on `grid`.
    pub values: Vec<f64>,
    /// Integral of the clipped, masked numerator.
    pub normalizer: f64,
    pub smooth: SplineDensityEstimate,
    pub locals: Vec<LocalComponent>,
    pub partition: PartitionOfUnity,
    /// Arcs where the density may be positive; empty means the whole circle.
    pub support: Vec<Arc>,
    pub report: DetectionReport,
}

impl CombinedDensityEstimate {
    fn in_support(&self, x: f64) -> bool {
        self.support.is_empty() || self.support.iter().any(|a| a.contains(x))
    }

    /// `Σ ρ_i m_i g_i + (mass + f̂_m − 1) / 2π`, before clipping.
    pub fn numerator(&self, x: f64) -> f64 {
        let local: f64 = self
            .partition
            .bumps
            .iter()
            .zip(&self.locals)
            .map(|(b, l)| {
                let r = b.eval(x);
                if r > 0.0 {
                    r * l.density(x)
                } else {
                    0.0
                }
            })
            .sum();
        local + (self.smooth.mass + self.smooth.evaluate(x) - 1.0) / TAU
    }

    fn clipped(&self, x: f64) -> f64 {
        if self.in_support(x) {
            self.numerator(x).max(0.0)
        } else {
            0.0
        }
    }

    /// Density at `x`: exact component formula, or linear interpolation on the grid.
    pub fn evaluate(&self, x: f64, exact: bool) -> f64 {
        if exact {
            return self.clipped(wrap(x)) / self.normalizer;
        }
        let n = self.grid.len();
        let pos = wrap(x) / TAU * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        if frac == 0.0 {
            return self.values[i];
        }
        let j = (i + 1) % n;
        self.values[i] * (1.0 - frac) + self.values[j] * frac
    }

    /// Trapezoid rule on the periodic output grid.
    pub fn grid_integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * TAU / self.values.len() as f64
    }
}

/// Evaluate, clip at zero, restrict to `support`, and normalize on an `N`-point grid.
pub fn combine(
    pu: PartitionOfUnity,
    locals: Vec<LocalComponent>,
    smooth: SplineDensityEstimate,
    support: Vec<Arc>,
    grid_points: usize,
) -> Result<CombinedDensityEstimate> {
    if locals.len() != pu.bumps.len() {
        return Err(Error::Domain(format!(
            "{} local fits for {} bumps",
            locals.len(),
            pu.bumps.len()
        )));
    }
    if grid_points < 16 {
        return Err(Error::Domain("output grid needs at least 16 points".into()));
    }
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| TAU * i as f64 / grid_points as f64)
        .collect();
    let mut est = CombinedDensityEstimate {
        values: Vec::new(),
        normalizer: 1.0,
        grid,
        smooth,
        locals,
        partition: pu,
        support,
        report: DetectionReport::default(),
    };
    let raw: Vec<f64> = est.grid.iter().map(|&x| est.clipped(x)).collect();
    let z = raw.iter().sum::<f64>() * TAU / grid_points as f64;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::estimation("combine", format!("normalizing constant {z} is not positive")));
    }
    est.values = raw.into_iter().map(|v| v / z).collect();
    est.normalizer = z;
    Ok(est)
}
