//! Multi-scale detection of support gaps, outliers, jumps and kinks.
//!
//! Phase 1 counts points in the two halves of every dyadic cell and asks
//! whether a half is (nearly) empty. Cells whose combined evidence rejects
//! "empty here" form the occupied set; what is left is support exterior,
//! and small isolated clusters become outliers. Phase 2 runs likelihood
//! ratio tests for a jump or a slope change at each cell midpoint inside
//! the support.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::circle::{wrap, AngularSample, Arc};
use crate::error::{Error, Result};
use crate::local::{fit_mle_stats, SufficientStats};

/// Nested arcs `[2πj/2^k, 2π(j+1)/2^k)` for layers up to `max_layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicPartition {
    pub max_layer: u32,
}

impl DyadicPartition {
    pub fn new(max_layer: u32) -> Result<Self> {
        if !(3..=16).contains(&max_layer) {
            return Err(Error::Domain(format!("max_layer must be in 3..=16, got {max_layer}")));
        }
        Ok(DyadicPartition { max_layer })
    }

    pub fn cell_count(layer: u32) -> usize {
        1usize << layer
    }

    pub fn cell_width(layer: u32) -> f64 {
        TAU / Self::cell_count(layer) as f64
    }

    pub fn cell(layer: u32, j: usize) -> Arc {
        let w = Self::cell_width(layer);
        Arc {
            start: j as f64 * w,
            len: w,
        }
    }

    /// Index of the layer-`layer` cell containing `x`.
    pub fn cell_of(layer: u32, x: f64) -> usize {
        let m = Self::cell_count(layer);
        ((wrap(x) / TAU * m as f64) as usize).min(m - 1)
    }

    pub fn finest_width(&self) -> f64 {
        Self::cell_width(self.max_layer)
    }
}

/// p-values for one finest cell, coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueProfile {
    pub cell: usize,
    pub layers: Vec<u32>,
    pub pvals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    SupportBoundary,
    Outlier,
    Discontinuity,
    Edge,
}

/// Kind of break found by the likelihood ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakKind {
    Discontinuity,
    Edge,
}

impl From<BreakKind> for FeatureKind {
    fn from(b: BreakKind) -> Self {
        match b {
            BreakKind::Discontinuity => FeatureKind::Discontinuity,
            BreakKind::Edge => FeatureKind::Edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub interval: Arc,
    pub kind: FeatureKind,
    pub aggregated_p: f64,
    pub rejected_at_level: f64,
    /// Best point estimate of the feature position.
    pub location: f64,
    /// Layer of the cell that localized the feature.
    pub layer: u32,
    /// Number of sample points attributed to the feature (outliers only).
    pub count: usize,
}

/// All detections plus the support they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DetectionReport {
    pub features: Vec<Feature>,
    /// Arcs carrying the main body of the data; empty means the whole circle.
    pub support: Vec<Arc>,
    /// Complement of `support`, outliers included.
    pub exterior: Vec<Arc>,
    pub max_layer: u32,
    pub alpha: f64,
    /// Indices (into the input sample) of points attributed to outliers.
    pub outlier_points: Vec<usize>,
}

impl DetectionReport {
    pub fn of_kind(&self, kind: FeatureKind) -> impl Iterator<Item = &Feature> {
        self.features.iter().filter(move |f| f.kind == kind)
    }

    pub fn in_support(&self, x: f64) -> bool {
        self.support.is_empty() || self.support.iter().any(|a| a.contains(x))
    }
}

/// Layer weights `w_i ∝ ratio^i`, coarse layers first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub ratio: f64,
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme { ratio: 0.5 }
    }
}

impl WeightScheme {
    pub fn weights(&self, m: usize) -> Result<Vec<f64>> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Domain(format!("weight ratio must be in (0, 1), got {}", self.ratio)));
        }
        let raw: Vec<f64> = (0..m).map(|i| self.ratio.powi(i as i32)).collect();
        let s: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|w| w / s).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub max_layer: u32,
    pub alpha: f64,
    pub weights: WeightScheme,
    /// Coarsest layer of the support/outlier tests.
    pub support_min_layer: u32,
    /// Coarsest layer of the jump/kink tests.
    pub break_min_layer: u32,
    /// Coarsest layer at which kinks are tested; coarser cells test jumps only.
    pub edge_min_layer: u32,
    /// Cells with fewer points get p = 1 in the jump/kink test.
    pub min_lrt_points: usize,
    /// Empty runs of at least this many finest cells split the support.
    pub min_gap_cells: usize,
    /// Isolated clusters this narrow (in finest cells) may be outliers...
    pub outlier_max_cells: usize,
    /// ...if they hold at most this fraction of the sample...
    pub outlier_max_fraction: f64,
    /// ...and at least this many points. Smaller clusters are treated as exterior.
    pub outlier_min_count: usize,
}

impl DetectConfig {
    pub fn new(max_layer: u32, alpha: f64) -> Self {
        DetectConfig {
            max_layer,
            alpha,
            weights: WeightScheme::default(),
            support_min_layer: 3,
            break_min_layer: 2,
            edge_min_layer: 3,
            min_lrt_points: 5,
            min_gap_cells: 12,
            outlier_max_cells: 2,
            outlier_max_fraction: 0.1,
            outlier_min_count: 2,
        }
    }

    /// `floor(log2(n / 4))` clamped to `3..=12`: about four points per finest cell.
    pub fn default_layer(n: usize) -> u32 {
        let v = ((n.max(1) as f64) / 4.0).log2().floor();
        (v.max(3.0) as u32).min(12)
    }

    fn validate(&self) -> Result<()> {
        DyadicPartition::new(self.max_layer)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.support_min_layer > self.max_layer || self.break_min_layer > self.max_layer {
            return Err(Error::Domain("minimum test layer exceeds max_layer".into()));
        }
        if self.break_min_layer < 1 || self.support_min_layer < 1 {
            return Err(Error::Domain("test layers start at 1".into()));
        }
        Ok(())
    }
}

/// `P(Bin(n, 1/n) > t)`.
pub fn binomial_tail(t: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(1.0 / n as f64, n).expect("valid binomial");
    b.sf(t).clamp(0.0, 1.0)
}

/// `P(χ²₁ > t)`.
pub fn chi2_1_sf(t: f64) -> f64 {
    ChiSquared::new(1.0).expect("valid chi-squared").sf(t.max(0.0)).clamp(0.0, 1.0)
}

fn half_counts(sample: &AngularSample, cell: &Arc) -> (u64, u64) {
    let half = 0.5 * cell.len;
    let (mut l, mut r) = (0, 0);
    for &x in sample.angles() {
        if cell.contains(x) {
            if cell.offset(x) < half {
                l += 1;
            } else {
                r += 1;
            }
        }
    }
    (l, r)
}

/// Support/outlier test on one cell: the smaller of the two half-cell
/// p-values `P(Bin(n, 1/n) > T)`, `T` the half's count.
pub fn support_outlier_test(sample: &AngularSample, cell: &Arc) -> f64 {
    let n = sample.len() as u64;
    let (l, r) = half_counts(sample, cell);
    binomial_tail(l, n).min(binomial_tail(r, n))
}

/// Outcome of a jump/kink likelihood ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTest {
    pub kind: Option<BreakKind>,
    pub p_value: f64,
    pub stat_jump: f64,
    pub stat_kink: f64,
    pub n: usize,
}

impl CellTest {
    fn skipped(n: usize) -> Self {
        CellTest {
            kind: None,
            p_value: 1.0,
            stat_jump: 0.0,
            stat_kink: 0.0,
            n,
        }
    }
}

fn lrt_stats(stats: &SufficientStats, x0: f64, cell: Arc) -> Result<(f64, f64)> {
    let full = fit_mle_stats(stats, x0, cell, [None; 3])?;
    let no_jump = fit_mle_stats(stats, x0, cell, [None, Some(0.0), None])?;
    let no_kink = fit_mle_stats(stats, x0, cell, [None, None, Some(0.0)])?;
    let t1 = (2.0 * (full.log_likelihood - no_jump.log_likelihood)).max(0.0);
    let t2 = (2.0 * (full.log_likelihood - no_kink.log_likelihood)).max(0.0);
    Ok((t1, t2))
}

/// Likelihood ratio tests at the cell midpoint: first `β₁ = 0` (jump) at
/// level α/2, then `β₂ = 0` (kink) at level α/2.
pub fn discontinuity_edge_test(points: &AngularSample, cell: &Arc, alpha: f64, min_points: usize) -> Result<CellTest> {
    let x0 = cell.midpoint();
    let stats = SufficientStats::from_points(points.angles(), x0, cell)?;
    test_from_stats(&stats, x0, *cell, alpha, min_points, true)
}

fn test_from_stats(
    stats: &SufficientStats,
    x0: f64,
    cell: Arc,
    alpha: f64,
    min_points: usize,
    edges: bool,
) -> Result<CellTest> {
    if stats.n < min_points.max(3) {
        return Ok(CellTest::skipped(stats.n));
    }
    let (t1, t2) = lrt_stats(stats, x0, cell)?;
    let p1 = chi2_1_sf(t1);
    let p2 = chi2_1_sf(t2);
    let (kind, p) = if p1 < 0.5 * alpha {
        (Some(BreakKind::Discontinuity), p1)
    } else if !edges {
        (None, p1)
    } else if p2 < 0.5 * alpha {
        (Some(BreakKind::Edge), p2)
    } else {
        (None, p2)
    };
    Ok(CellTest {
        kind,
        p_value: p,
        stat_jump: t1,
        stat_kink: t2,
        n: stats.n,
    })
}

/// Weighted geometric mean `Π p_i^{w_i}`.
pub fn aggregate_pvalues(pvals: &[f64], weights: &[f64]) -> Result<f64> {
    if pvals.len() != weights.len() || pvals.is_empty() {
        return Err(Error::Domain(format!(
            "{} p-values with {} weights",
            pvals.len(),
            weights.len()
        )));
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-12 || weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Domain("weights must be positive and sum to 1".into()));
    }
    if weights.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("weights must be strictly decreasing".into()));
    }
    Ok(geo_mean(pvals, weights))
}

fn geo_mean(pvals: &[f64], weights: &[f64]) -> f64 {
    if pvals.iter().any(|&p| p == 0.0) {
        return 0.0;
    }
    let v = pvals.iter().zip(weights).map(|(p, w)| w * p.ln()).sum::<f64>().exp();
    // keep inside [min p, max p] despite rounding
    let lo = pvals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pvals.iter().copied().fold(0.0, f64::max);
    v.clamp(lo, hi)
}

/// Holm step-down: indices of rejected hypotheses, ascending.
pub fn holm(pvals: &[f64], alpha: f64) -> Vec<usize> {
    let s = pvals.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut rejected = Vec::new();
    for (i, &idx) in order.iter().enumerate() {
        if pvals[idx] < alpha / (s - i) as f64 {
            rejected.push(idx);
        } else {
            break;
        }
    }
    rejected.sort_unstable();
    rejected
}

/// Maximal circular runs of `true`, as `(start, len)`; a fully `true`
/// mask yields `(0, m)`.
fn circular_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let m = mask.len();
    if mask.iter().all(|&b| b) {
        return vec![(0, m)];
    }
    let first_false = mask.iter().position(|&b| !b).unwrap();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < m {
        let idx = (first_false + i) % m;
        if mask[idx] {
            let start = idx;
            let mut len = 0;
            while i < m && mask[(first_false + i) % m] {
                len += 1;
                i += 1;
            }
            runs.push((start, len));
        } else {
            i += 1;
        }
    }
    runs
}

fn cells_arc(start: usize, len: usize, width: f64) -> Arc {
    Arc {
        start: wrap(start as f64 * width),
        len: (len as f64 * width).min(TAU),
    }
}

/// Sorted copy of the sample with original indices.
struct Indexed {
    pts: Vec<(f64, usize)>,
}

impl Indexed {
    fn new(angles: &[f64]) -> Self {
        let mut pts: Vec<(f64, usize)> = angles.iter().copied().zip(0..).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Indexed { pts }
    }

    /// Points in `[a, b)` with `0 <= a <= b <= 2π`.
    fn range(&self, a: f64, b: f64) -> &[(f64, usize)] {
        let i = self.pts.partition_point(|p| p.0 < a);
        let j = self.pts.partition_point(|p| p.0 < b);
        &self.pts[i..j]
    }

    fn in_arc(&self, arc: &Arc) -> Vec<(f64, usize)> {
        let (a, b) = (arc.start, arc.start + arc.len);
        if arc.is_full() {
            return self.pts.clone();
        }
        if b <= TAU {
            self.range(a, b).to_vec()
        } else {
            let mut v = self.range(a, TAU).to_vec();
            v.extend_from_slice(self.range(0.0, b - TAU));
            v
        }
    }
}

/// Run both detection phases.
pub fn detect_features(sample: &AngularSample, cfg: &DetectConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    sample.require_nonempty("detect_features")?;
    let n = sample.len();
    let big_l = cfg.max_layer;
    let f = DyadicPartition::cell_count(big_l);
    let c = DyadicPartition::cell_width(big_l);

    // ---- phase 1: support and outliers
    let sub = 2 * f;
    let mut counts = vec![0u64; sub];
    for &x in sample.angles() {
        counts[DyadicPartition::cell_of(big_l + 1, x)] += 1;
    }
    let mut tail_cache: HashMap<u64, f64> = HashMap::new();
    let mut tail = |t: u64| *tail_cache.entry(t).or_insert_with(|| binomial_tail(t, n as u64));

    let layers1: Vec<u32> = (cfg.support_min_layer..=big_l).collect();
    let w1 = cfg.weights.weights(layers1.len())?;
    // p-values per layer, per cell
    let mut layer_p: Vec<Vec<f64>> = Vec::with_capacity(layers1.len());
    for &k in &layers1 {
        let halves = 1usize << (big_l + 1 - (k + 1));
        let cells = DyadicPartition::cell_count(k);
        let mut ps = Vec::with_capacity(cells);
        for j in 0..cells {
            let lo = 2 * j * halves;
            let l: u64 = counts[lo..lo + halves].iter().sum();
            let r: u64 = counts[lo + halves..lo + 2 * halves].iter().sum();
            ps.push(tail(l).min(tail(r)));
        }
        layer_p.push(ps);
    }
    let profile_p = |cell: usize| -> Vec<f64> {
        layers1
            .iter()
            .zip(&layer_p)
            .map(|(&k, ps)| ps[cell >> (big_l - k)])
            .collect()
    };
    let agg1: Vec<f64> = (0..f).map(|i| geo_mean(&profile_p(i), &w1)).collect();
    let mut occupied = vec![false; f];
    for i in holm(&agg1, cfg.alpha) {
        occupied[i] = true;
    }

    let finest_counts: Vec<u64> = (0..f).map(|i| counts[2 * i] + counts[2 * i + 1]).collect();
    let indexed = Indexed::new(sample.angles());

    // split occupied runs at long empty stretches
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    let full_run = occupied.iter().all(|&b| b);
    for (start, len) in circular_runs(&occupied) {
        let cells: Vec<usize> = (0..len).map(|i| (start + i) % f).collect();
        let nonempty: Vec<bool> = cells.iter().map(|&i| finest_counts[i] > 0).collect();
        // empty stretches of length >= g become exterior
        let mut keep = vec![true; len];
        let mut i = 0;
        while i < len {
            if !nonempty[i] {
                let s = i;
                while i < len && !nonempty[i] {
                    i += 1;
                }
                let wraps = full_run && s == 0 && i == len;
                let stretch = i - s;
                // in a full circle the stretch may continue across the seam
                let stretch = if full_run && (s == 0 || i == len) && !wraps {
                    let lead = nonempty.iter().take_while(|&&b| !b).count();
                    let trail = nonempty.iter().rev().take_while(|&&b| !b).count();
                    lead + trail
                } else {
                    stretch
                };
                if stretch >= cfg.min_gap_cells || wraps {
                    for k in keep.iter_mut().take(i).skip(s) {
                        *k = false;
                    }
                }
            } else {
                i += 1;
            }
        }
        if full_run {
            for (s, l) in circular_runs(&keep) {
                if l == len {
                    pieces.push((start, len));
                } else {
                    pieces.push(((start + s) % f, l));
                }
            }
        } else {
            let mut i = 0;
            while i < len {
                if keep[i] {
                    let s = i;
                    while i < len && keep[i] {
                        i += 1;
                    }
                    pieces.push(((start + s) % f, i - s));
                } else {
                    i += 1;
                }
            }
        }
    }

    let mut features = Vec::new();
    let mut support: Vec<Arc> = Vec::new();
    let mut outlier_points = Vec::new();
    let whole_circle = pieces.len() == 1 && pieces[0].1 == f;
    for &(start, len) in &pieces {
        let arc = cells_arc(start, len, c);
        let pts = indexed.in_arc(&arc);
        let count = pts.len();
        if count < cfg.outlier_min_count {
            continue;
        }
        let first = (0..len).find(|&i| finest_counts[(start + i) % f] > 0).unwrap_or(0);
        let last = (0..len).rev().find(|&i| finest_counts[(start + i) % f] > 0).unwrap_or(0);
        let span = last - first + 1;
        let p_min = (0..len)
            .map(|i| agg1[(start + i) % f])
            .fold(1.0, f64::min);
        if span <= cfg.outlier_max_cells
            && (count as f64) <= cfg.outlier_max_fraction * n as f64
            && !whole_circle
        {
            // interval spanning the cluster's points plus an eighth of a cell
            let offs: Vec<f64> = pts.iter().map(|p| arc.offset(p.0)).collect();
            let lo = offs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = offs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let interval = Arc {
                start: wrap(arc.start + lo - 0.125 * c),
                len: hi - lo + 0.25 * c,
            };
            features.push(Feature {
                interval,
                kind: FeatureKind::Outlier,
                aggregated_p: p_min,
                rejected_at_level: cfg.alpha,
                location: crate::circle::wrap(arc.start + 0.5 * (lo + hi)),
                layer: big_l,
                count,
            });
            outlier_points.extend(pts.iter().map(|p| p.1));
            continue;
        }
        if whole_circle {
            continue;
        }
        // occupied cells at the ends of a piece may still be empty; the
        // boundary goes on the data side
        let (s0, s1) = ((start + first) % f, (start + last) % f);
        let arc = cells_arc(s0, last - first + 1, c);
        support.push(arc);
        for (b, cell) in [(arc.start, s0), (arc.end(), s1)] {
            features.push(Feature {
                interval: Arc {
                    start: wrap(b - c),
                    len: 2.0 * c,
                },
                kind: FeatureKind::SupportBoundary,
                aggregated_p: agg1[cell],
                rejected_at_level: cfg.alpha,
                location: b,
                layer: big_l,
                count: 0,
            });
        }
    }
    let mut in_support = vec![whole_circle; f];
    for a in &support {
        let s = DyadicPartition::cell_of(big_l, a.start + 0.5 * c);
        let l = (a.len / c).round() as usize;
        for i in 0..l {
            in_support[(s + i) % f] = true;
        }
    }
    if !whole_circle && support.is_empty() && outlier_points.len() < n {
        // nothing qualified as support: fall back to the whole circle
        in_support.iter_mut().for_each(|b| *b = true);
    }
    let exterior: Vec<Arc> = if in_support.iter().all(|&b| b) {
        support.clear();
        Vec::new()
    } else {
        circular_runs(&in_support.iter().map(|b| !b).collect::<Vec<_>>())
            .into_iter()
            .map(|(s, l)| cells_arc(s, l, c))
            .collect()
    };
    outlier_points.sort_unstable();

    // ---- phase 2: jumps and kinks on the remaining data
    let mut removed = vec![false; n];
    for &i in &outlier_points {
        removed[i] = true;
    }
    let remaining: Vec<f64> = sample
        .angles()
        .iter()
        .enumerate()
        .filter(|(i, &x)| !removed[*i] && in_support[DyadicPartition::cell_of(big_l, x)])
        .map(|(_, &x)| x)
        .collect();
    let rem = Indexed::new(&remaining);

    let layers2: Vec<u32> = (cfg.break_min_layer..=big_l).collect();
    let w2 = cfg.weights.weights(layers2.len())?;
    let mut tests: Vec<Vec<Option<CellTest>>> = Vec::with_capacity(layers2.len());
    for &k in &layers2 {
        let cells = DyadicPartition::cell_count(k);
        let per = 1usize << (big_l - k);
        let mut row = Vec::with_capacity(cells);
        for j in 0..cells {
            if !(j * per..(j + 1) * per).all(|i| in_support[i]) {
                row.push(None);
                continue;
            }
            let cell = DyadicPartition::cell(k, j);
            let pts: Vec<f64> = rem.range(cell.start, cell.start + cell.len).iter().map(|p| p.0).collect();
            let x0 = cell.midpoint();
            let stats = SufficientStats::from_points(&pts, x0, &cell)?;
            let t = test_from_stats(&stats, x0, cell, cfg.alpha, cfg.min_lrt_points, k >= cfg.edge_min_layer)
                .map_err(|e| e.in_stage(&format!("break test layer {k} cell {j}")))?;
            row.push(Some(t));
        }
        tests.push(row);
    }
    let support_cells: Vec<usize> = (0..f).filter(|&i| in_support[i]).collect();
    let mut agg2 = vec![1.0; f];
    let mut agg_list = Vec::with_capacity(support_cells.len());
    for &i in &support_cells {
        let mut ps = Vec::new();
        let mut ws = Vec::new();
        for (li, &k) in layers2.iter().enumerate() {
            if let Some(t) = &tests[li][i >> (big_l - k)] {
                ps.push(t.p_value);
                ws.push(w2[li]);
            }
        }
        let s: f64 = ws.iter().sum();
        let p = if ps.is_empty() {
            1.0
        } else {
            geo_mean(&ps, &ws.iter().map(|w| w / s).collect::<Vec<_>>())
        };
        agg2[i] = p;
        agg_list.push(p);
    }
    let mut rejected2 = vec![false; f];
    for r in holm(&agg_list, cfg.alpha) {
        rejected2[support_cells[r]] = true;
    }

    let mut breaks = Vec::new();
    for (start, len) in circular_runs(&rejected2) {
        if len == f && !rejected2.iter().all(|&b| b) {
            continue;
        }
        let in_run = |i: usize| (i + f - start) % f < len;
        let p_min = (0..len).map(|i| agg2[(start + i) % f]).fold(1.0, f64::min);
        // largest significant tested cells inside the run
        let mut windows: Vec<(u32, usize, Option<BreakKind>)> = Vec::new();
        let mut covered = vec![false; f];
        for (li, &k) in layers2.iter().enumerate() {
            let per = 1usize << (big_l - k);
            for (j, t) in tests[li].iter().enumerate() {
                let Some(t) = t else { continue };
                if t.kind.is_none() {
                    continue;
                }
                let cells: Vec<usize> = (j * per..(j + 1) * per).collect();
                if !cells.iter().all(|&i| in_run(i)) || cells.iter().any(|&i| covered[i]) {
                    continue;
                }
                cells.iter().for_each(|&i| covered[i] = true);
                windows.push((k, j * per, t.kind));
            }
        }
        let window_arcs: Vec<(Arc, u32, Option<BreakKind>)> = if windows.is_empty() {
            let layer = big_l - (len as f64).log2().floor().min(big_l as f64) as u32;
            vec![(cells_arc(start, len, c), layer, None)]
        } else {
            windows
                .into_iter()
                .map(|(k, s, kind)| (cells_arc(s, 1 << (big_l - k), c), k, kind))
                .collect()
        };
        for (win, layer, kind) in window_arcs {
            if let Some((loc, kind)) = localize(&rem, &win, c, kind, cfg)? {
                breaks.push(Feature {
                    interval: Arc {
                        start: wrap(loc - c),
                        len: 2.0 * c,
                    },
                    kind: kind.into(),
                    aggregated_p: p_min,
                    rejected_at_level: cfg.alpha,
                    location: loc,
                    layer,
                    count: 0,
                });
            }
        }
    }

    // earlier features win overlaps
    for b in breaks {
        if !features.iter().any(|f: &Feature| f.interval.overlaps(&b.interval)) {
            features.push(b);
        }
    }
    let mut deduped: Vec<Feature> = Vec::with_capacity(features.len());
    for feat in features {
        if !deduped.iter().any(|d| d.interval.overlaps(&feat.interval)) {
            deduped.push(feat);
        }
    }
    deduped.sort_by(|a, b| a.location.total_cmp(&b.location));

    Ok(DetectionReport {
        features: deduped,
        support,
        exterior,
        max_layer: big_l,
        alpha: cfg.alpha,
        outlier_points,
    })
}

/// Scan candidate break points inside `win` and return the one with the
/// largest likelihood ratio statistic.
fn localize(
    rem: &Indexed,
    win: &Arc,
    c: f64,
    kind: Option<BreakKind>,
    cfg: &DetectConfig,
) -> Result<Option<(f64, BreakKind)>> {
    let pts: Vec<f64> = rem.in_arc(win).iter().map(|p| p.0).collect();
    if pts.len() < cfg.min_lrt_points.max(3) {
        return Ok(None);
    }
    let m = (win.len / c).round() as usize;
    let mut cands: Vec<f64> = (m.div_ceil(8)..=(7 * m) / 8)
        .filter(|&i| i > 0 && i < m)
        .map(|i| i as f64 * c)
        .collect();
    if cands.is_empty() {
        cands.push(0.5 * win.len);
    }
    let mut best: Option<(f64, f64, BreakKind)> = None;
    for off in cands {
        let x0 = wrap(win.start + off);
        let stats = SufficientStats::from_points(&pts, x0, win)?;
        let (t1, t2) = lrt_stats(&stats, x0, *win).map_err(|e| e.in_stage("break localization"))?;
        let (score, k) = match kind {
            Some(BreakKind::Discontinuity) => (t1, BreakKind::Discontinuity),
            Some(BreakKind::Edge) => (t2, BreakKind::Edge),
            None => {
                if chi2_1_sf(t1) < 0.5 * cfg.alpha || t1 >= t2 {
                    (t1.max(t2), BreakKind::Discontinuity)
                } else {
                    (t2, BreakKind::Edge)
                }
            }
        };
        if best.is_none_or(|b| score > b.0) {
            best = Some((score, x0, k));
        }
    }
    Ok(best.map(|b| (b.1, b.2)))
}
