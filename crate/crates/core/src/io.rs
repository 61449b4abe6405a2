//! Reading angle files and grouped tables, and writing result documents.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circle::{wrap, AngularSample};
use crate::detect::{DetectionReport, FeatureKind};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, PipelineOutput};
use crate::spline::{MiseCriterion, MiseEstimate};

pub const SCHEMA_VERSION: u32 = 1;
/// Default number of points in the density table of an output document.
pub const OUTPUT_POINTS: usize = 1024;

/// Parse one angle per line. `#` starts a comment; blank lines are skipped.
pub fn parse_angles(text: &str, degrees: bool) -> Result<AngularSample> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: f64 = body.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("not a number: '{body}'"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("non-finite angle '{body}'"),
            });
        }
        out.push(if degrees { v.to_radians() } else { v });
    }
    if out.is_empty() {
        return Err(Error::Validation("input contains no angles".into()));
    }
    AngularSample::new(out)
}

/// Read an angle file; see [`parse_angles`].
pub fn load_angles(path: impl AsRef<Path>, degrees: bool) -> Result<AngularSample> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_angles(&text, degrees)
}

/// One histogram bin. Integer labels are inclusive, so `0,19` covers `[0°, 20°)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub start_deg: f64,
    pub end_deg: f64,
    pub count: u64,
}

impl Bin {
    /// Half-open range `[start, end + 1)` in degrees.
    pub fn range_deg(&self) -> (f64, f64) {
        (self.start_deg, self.end_deg + 1.0)
    }
}

/// Grouped (binned) angular data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedData {
    pub bins: Vec<Bin>,
    pub total: u64,
}

impl GroupedData {
    pub fn new(mut bins: Vec<Bin>) -> Result<Self> {
        for b in &bins {
            let (lo, hi) = b.range_deg();
            if !(0.0..360.0).contains(&lo) || hi > 360.0 || lo >= hi {
                return Err(Error::Validation(format!(
                    "bin {}-{} is not within [0, 360)",
                    b.start_deg, b.end_deg
                )));
            }
        }
        bins.sort_by(|a, b| a.start_deg.total_cmp(&b.start_deg));
        for w in bins.windows(2) {
            if w[1].range_deg().0 < w[0].range_deg().1 {
                return Err(Error::Validation(format!(
                    "bins {}-{} and {}-{} overlap",
                    w[0].start_deg, w[0].end_deg, w[1].start_deg, w[1].end_deg
                )));
            }
        }
        let total = bins.iter().map(|b| b.count).sum();
        Ok(GroupedData { bins, total })
    }

    /// Parse `start_deg,end_deg,count` rows; a non-numeric first row is a header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut bins = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(i + 1, |p| p.line() as usize);
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if rec.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 fields, found {}", rec.len()),
                });
            }
            let start = rec[0].parse::<f64>();
            if bins.is_empty() && i == 0 && start.is_err() {
                continue;
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: '{s}'"),
                })
            };
            let (start_deg, end_deg) = (num(&rec[0])?, num(&rec[1])?);
            let count: i64 = rec[2].parse().map_err(|_| Error::Parse {
                line,
                message: format!("count is not an integer: '{}'", &rec[2]),
            })?;
            if count < 0 {
                return Err(Error::Validation(format!("negative count {count} on line {line}")));
            }
            bins.push(Bin {
                start_deg,
                end_deg,
                count: count as u64,
            });
        }
        if bins.is_empty() {
            return Err(Error::Validation("grouped input contains no bins".into()));
        }
        GroupedData::new(bins)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        GroupedData::parse(&text)
    }

    /// Spread each bin's count uniformly over the bin, then shift everything
    /// by `rotation_deg`.
    pub fn to_sample(&self, seed: u64, rotation_deg: f64) -> Result<AngularSample> {
        if self.total == 0 {
            return Err(Error::Validation("grouped input has zero total count".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.total as usize);
        for b in &self.bins {
            let (lo, hi) = b.range_deg();
            for _ in 0..b.count {
                let d = lo + (hi - lo) * rng.random::<f64>() + rotation_deg;
                out.push(wrap(d.to_radians()));
            }
        }
        AngularSample::new(out)
    }
}

/// Load grouped data and jitter it into individual angles.
pub fn load_grouped(path: impl AsRef<Path>, seed: u64, rotation_deg: f64) -> Result<AngularSample> {
    GroupedData::load(path)?.to_sample(seed, rotation_deg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub source: String,
    pub n: usize,
    pub degrees: bool,
    pub grouped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSummary {
    pub kind: FeatureKind,
    pub location: f64,
    pub interval: [f64; 2],
    pub beta: [f64; 3],
    pub mass: f64,
    pub diverged: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lambda: f64,
    pub criterion: Option<MiseCriterion>,
    pub mise_at_lambda: Option<MiseEstimate>,
    /// `(λ, criterion value)` over the search grid.
    pub mise_curve: Vec<[f64; 2]>,
    pub smooth_mass: f64,
    pub normalizer: f64,
    pub crowded_partition: bool,
    pub detection_skipped: bool,
    pub locals: Vec<LocalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub version: String,
}

/// The JSON result of an `estimate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDocument {
    pub schema_version: u32,
    pub input: InputSummary,
    pub config: PipelineConfig,
    /// `[x, density]` pairs.
    pub density: Vec<[f64; 2]>,
    pub detection: DetectionReport,
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
}

impl OutputDocument {
    /// Assemble a document, keeping every `stride`-th grid point so that
    /// about `points` rows are written.
    pub fn build(
        out: &PipelineOutput,
        input: InputSummary,
        config: &PipelineConfig,
        seed: Option<u64>,
        points: usize,
    ) -> Result<Self> {
        let est = &out.estimate;
        let n = est.grid.len();
        if points == 0 || points > n || n % points != 0 {
            return Err(Error::Domain(format!(
                "output points must divide the grid size {n}, got {points}"
            )));
        }
        let stride = n / points;
        let density = (0..n).step_by(stride).map(|i| [est.grid[i], est.values[i]]).collect();
        let locals = est
            .report
            .features
            .iter()
            .zip(&est.locals)
            .map(|(f, l)| LocalSummary {
                kind: f.kind,
                location: f.location,
                interval: [l.fit.params.interval.start, l.fit.params.interval.len],
                beta: l.fit.params.beta(),
                mass: l.mass,
                diverged: l.fit.diverged,
                degenerate: l.fit.degenerate,
            })
            .collect();
        let diagnostics = Diagnostics {
            lambda: est.smooth.lambda,
            criterion: out.selection.as_ref().map(|s| s.criterion),
            mise_at_lambda: out.selection.as_ref().map(|s| s.mise),
            mise_curve: out
                .selection
                .as_ref()
                .map(|s| s.curve.iter().map(|&(l, r)| [l, r]).collect())
                .unwrap_or_default(),
            smooth_mass: est.smooth.mass,
            normalizer: est.normalizer,
            crowded_partition: est.partition.crowded,
            detection_skipped: out.detection_skipped,
            locals,
        };
        let doc = OutputDocument {
            schema_version: SCHEMA_VERSION,
            input,
            config: config.clone(),
            density,
            detection: est.report.clone(),
            diagnostics,
            provenance: Provenance {
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Structural checks on a parsed or freshly built document.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.density.is_empty() {
            return Err(Error::Validation("density table is empty".into()));
        }
        for &[x, v] in &self.density {
            if !(0.0..TAU).contains(&x) {
                return Err(Error::Validation(format!("grid angle {x} outside [0, 2π)")));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("density value {v} at {x} is not a finite nonnegative number")));
            }
        }
        let in_range = |a: f64, len: f64| (0.0..TAU).contains(&a) && len > 0.0 && len <= TAU;
        for f in &self.detection.features {
            if !in_range(f.interval.start, f.interval.len) || !(0.0..TAU).contains(&f.location) {
                return Err(Error::Validation(format!("feature interval {:?} out of range", f.interval)));
            }
        }
        for a in self.detection.support.iter().chain(&self.detection.exterior) {
            if !in_range(a.start, a.len) {
                return Err(Error::Validation(format!("arc {a:?} out of range")));
            }
        }
        Ok(())
    }

    /// Periodic trapezoid integral of the density table.
    pub fn grid_integral(&self) -> f64 {
        let s: f64 = self.density.iter().map(|p| p[1]).sum();
        s * TAU / self.density.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: OutputDocument =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("invalid output document: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Formatter that writes every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize with [`FullPrecision`].
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(format!("serialization failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Rows `x,density,is_feature_boundary` for plotting. A row is marked when
/// a reported feature location falls in its grid cell.
pub fn plot_rows(doc: &OutputDocument) -> Vec<(f64, f64, bool)> {
    let m = doc.density.len();
    let h = TAU / m as f64;
    let mut mark = vec![false; m];
    for f in &doc.detection.features {
        let i = ((f.location / h).round() as usize) % m;
        mark[i] = true;
    }
    doc.density.iter().zip(mark).map(|(p, b)| (p[0], p[1], b)).collect()
}

/// Write [`plot_rows`] as CSV.
pub fn write_plot_csv(doc: &OutputDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["x", "density", "is_feature_boundary"]).map_err(io)?;
    for (x, v, b) in plot_rows(doc) {
        w.write_record([format!("{x:.16e}"), format!("{v:.16e}"), (b as u8).to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::estimate_detailed;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn angle_parsing() {
        let s = parse_angles("0\n3.14159\n", false).unwrap();
        assert_eq!(s.angles(), &[0.0, 3.14159]);
        let d = parse_angles("# heading\n\n90\n", true).unwrap();
        assert!((d.angles()[0] - FRAC_PI_2).abs() < 1e-15);
        match parse_angles("1\n2\nabc\n", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_angles("# nothing\n", false), Err(Error::Validation(_))));
    }

    #[test]
    fn grouped_parsing_and_jitter() {
        let g = GroupedData::parse("start_deg,end_deg,count\n0,19,75\n20,39,0\n340,359,5\n").unwrap();
        assert_eq!(g.total, 80);
        let s = g.to_sample(4, 0.0).unwrap();
        assert_eq!(s.len(), 80);
        let first = s.angles().iter().filter(|&&x| x < 20f64.to_radians()).count();
        assert_eq!(first, 75);
        assert_eq!(s, g.to_sample(4, 0.0).unwrap());
        assert!(matches!(GroupedData::parse("0,19,5\n10,29,3\n"), Err(Error::Validation(_))));
        assert!(matches!(GroupedData::parse("0,19,-1\n"), Err(Error::Validation(_))));
        assert!(matches!(GroupedData::parse("0,19,x\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn full_precision_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0];
        let s = to_json_string(&v).unwrap();
        assert!(s.contains("3.3333333333333331e-1"));
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn document_round_trip() {
        let s = AngularSample::new((0..200).map(|i| 0.031 * i as f64)).unwrap();
        let cfg = PipelineConfig::default();
        let out = estimate_detailed(&s, &cfg).unwrap();
        let input = InputSummary {
            source: "mem".into(),
            n: 200,
            degrees: false,
            grouped: false,
        };
        let doc = OutputDocument::build(&out, input, &cfg, Some(7), OUTPUT_POINTS).unwrap();
        assert_eq!(doc.density.len(), OUTPUT_POINTS);
        let text = doc.to_json().unwrap();
        let back = OutputDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json().unwrap(), text);
        let rows = plot_rows(&doc);
        assert_eq!(rows.len(), OUTPUT_POINTS);
    }
}
