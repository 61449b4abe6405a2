//! End-to-end estimator: detect features, fit local models, fit the
//! remaining smooth part, and glue everything together.

use serde::{Deserialize, Serialize};

use crate::circle::{AngularSample, Arc};
use crate::detect::{detect_features, DetectConfig, DetectionReport, FeatureKind, WeightScheme};
use crate::error::{Error, Result};
use crate::local::fit_mle;
pub use crate::partition::CombinedDensityEstimate;
use crate::partition::{build_partition, combine, LocalComponent, PartitionOfUnity, SigmaRule};
use crate::spline::{
    default_order, select_lambda_with, weighted_moments, LambdaGrid, LambdaSelection, MiseCriterion,
    SplineDensityEstimate,
};

/// Below this many points detection is skipped.
pub const MIN_DETECTION_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Finest dyadic layer; `None` picks about four points per finest cell.
    pub max_layer: Option<u32>,
    pub alpha: f64,
    pub lambda: LambdaChoice,
    pub lambda_grid: LambdaGrid,
    pub criterion: MiseCriterion,
    pub weight_scheme: WeightScheme,
    /// Minimum bump half-width in finest-cell half-widths.
    pub sigma_margin: f64,
    pub grid_points: usize,
    /// Run feature detection at all.
    pub detection: bool,
    pub max_order: Option<usize>,
    /// Empty stretches (in finest cells) that split the support.
    pub min_gap_cells: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_layer: None,
            alpha: 0.05,
            lambda: LambdaChoice::Auto,
            lambda_grid: LambdaGrid::default(),
            criterion: MiseCriterion::default(),
            weight_scheme: WeightScheme::default(),
            sigma_margin: 1.5,
            grid_points: 8192,
            detection: true,
            max_order: None,
            min_gap_cells: 12,
        }
    }
}

impl PipelineConfig {
    pub fn detect_config(&self, n: usize) -> DetectConfig {
        let layer = self.max_layer.unwrap_or_else(|| DetectConfig::default_layer(n));
        let mut d = DetectConfig::new(layer, self.alpha);
        d.weights = self.weight_scheme;
        d.min_gap_cells = self.min_gap_cells;
        d
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::Domain(format!("lambda must be >= 0, got {l}")));
            }
        }
        if self.grid_points < 16 {
            return Err(Error::Domain("grid_points must be at least 16".into()));
        }
        if !(self.sigma_margin > 0.0) {
            return Err(Error::Domain("sigma_margin must be positive".into()));
        }
        Ok(())
    }
}

/// Everything produced by one run, including the penalty search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub estimate: CombinedDensityEstimate,
    /// `None` when λ was fixed.
    pub selection: Option<LambdaSelection>,
    pub detection_skipped: bool,
}

/// Fit the combined estimate; see [`estimate_detailed`].
pub fn estimate(sample: &AngularSample, cfg: &PipelineConfig) -> Result<CombinedDensityEstimate> {
    Ok(estimate_detailed(sample, cfg)?.estimate)
}

/// Run the full procedure:
///
/// 1. support/outlier detection, then jump/kink detection on what remains;
/// 2. one bump per detected region and a local exponential fit inside it;
/// 3. a Fourier-spline fit with weights `1 − Σρ_i(Z_j)`;
/// 4. recombination, clipping, restriction to the support and normalization.
pub fn estimate_detailed(sample: &AngularSample, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    sample.require_nonempty("estimate")?;
    let n = sample.len();
    let skip = !cfg.detection || n < MIN_DETECTION_SIZE;

    let report = if skip {
        DetectionReport::default()
    } else {
        detect_features(sample, &cfg.detect_config(n)).map_err(|e| e.in_stage("detection"))?
    };
    let pu = if skip {
        PartitionOfUnity::default()
    } else {
        let mut rule = SigmaRule::for_layer(report.max_layer);
        rule.margin = cfg.sigma_margin;
        build_partition(&report, &rule).map_err(|e| e.in_stage("partition"))?
    };

    let mut outlier = vec![false; n];
    for &i in &report.outlier_points {
        outlier[i] = true;
    }
    let mut locals = Vec::with_capacity(pu.bumps.len());
    for (feat, bump) in report.features.iter().zip(&pu.bumps) {
        let want_outliers = feat.kind == FeatureKind::Outlier;
        // an isolated cluster is modelled on its own tight interval
        let u = if want_outliers { feat.interval } else { bump.support() };
        let pts: Vec<f64> = sample
            .angles()
            .iter()
            .enumerate()
            .filter(|(i, &x)| outlier[*i] == want_outliers && u.contains_closed(x))
            .map(|(_, &x)| x)
            .collect();
        let x0 = if u.contains_closed(feat.location) { feat.location } else { u.midpoint() };
        let fit = fit_mle(&AngularSample::new(pts.iter().copied())?, x0, u)
            .map_err(|e| e.in_stage("local fit"))?;
        locals.push(LocalComponent {
            fit,
            mass: pts.len() as f64 / n as f64,
        });
    }

    let weights: Vec<f64> = sample
        .angles()
        .iter()
        .map(|&x| (1.0 - pu.sum(x)).clamp(0.0, 1.0))
        .collect();
    let order = cfg.max_order.unwrap_or_else(|| default_order(n));
    let (moments, mass) = weighted_moments(sample, &weights, order).map_err(|e| e.in_stage("smooth fit"))?;
    let (lambda, selection) = match cfg.lambda {
        LambdaChoice::Fixed(l) => (l, None),
        LambdaChoice::Auto => {
            let m2 = weights.iter().map(|w| w * w).sum::<f64>() / n as f64;
            let sel = select_lambda_with(&moments, n, &cfg.lambda_grid, cfg.criterion, m2)
                .map_err(|e| e.in_stage("lambda selection"))?;
            (sel.lambda, Some(sel))
        }
    };
    let mut smooth = SplineDensityEstimate::from_moments(&moments, lambda, n).map_err(|e| e.in_stage("smooth fit"))?;
    smooth.mass = mass;

    let mask = support_mask(&report, &pu);
    let mut est = combine(pu, locals, smooth, mask, cfg.grid_points).map_err(|e| e.in_stage("combine"))?;
    est.report = report;
    Ok(PipelineOutput {
        estimate: est,
        selection,
        detection_skipped: skip,
    })
}

/// Support arcs plus the supports of outlier bumps; empty means everywhere.
fn support_mask(report: &DetectionReport, pu: &PartitionOfUnity) -> Vec<Arc> {
    if report.support.is_empty() && report.of_kind(FeatureKind::Outlier).count() == 0 {
        return Vec::new();
    }
    let mut mask = report.support.clone();
    if mask.is_empty() {
        if report.exterior.is_empty() {
            return Vec::new();
        }
        // only outliers were found; the rest of the circle stays open
        mask.extend(complement_of(&report.exterior));
    }
    for (f, b) in report.features.iter().zip(&pu.bumps) {
        if f.kind == FeatureKind::Outlier {
            mask.push(b.support());
        }
    }
    mask
}

fn complement_of(arcs: &[Arc]) -> Vec<Arc> {
    let mut sorted = arcs.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out = Vec::new();
    for i in 0..sorted.len() {
        let end = sorted[i].end();
        let next = sorted[(i + 1) % sorted.len()].start;
        let len = crate::circle::wrap(next - end);
        if len > 1e-12 {
            out.push(Arc { start: end, len });
        }
    }
    out
}

/// Evaluate a fitted estimate.
pub fn evaluate(est: &CombinedDensityEstimate, x: f64, exact: bool) -> f64 {
    est.evaluate(x, exact)
}
