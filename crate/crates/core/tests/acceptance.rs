//! Acceptance criteria 1 to 14. Each test writes one `PASS`/`FAIL` line to
//! stdout (bypassing capture) before asserting.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use circspline::circle::{data_from_power_sums, empirical_fourier, power_sums, Arc, AngularSample};
use circspline::detect::{detect_features, DetectConfig, FeatureKind};
use circspline::io::{load_grouped, InputSummary, OutputDocument, OUTPUT_POINTS};
use circspline::local::{
    expected_statistics, fit_mle, log_likelihood, log_likelihood_gradient, ExpFamilyParams, SufficientStats,
};
use circspline::pipeline::{estimate, estimate_detailed, PipelineConfig};
use circspline::quad::GaussLegendre;
use circspline::sim::{run_replicates, table1_percent_increase, table2_compare, table2_theta_grid, IseGrid, Method, Scenario};
use circspline::spline::diagnostics::pointwise_mse;
use circspline::spline::{
    default_order, empirical_mise, fit_spline_density, select_lambda, shrinkage, spline_kernel, LambdaGrid,
};

const SEED: u64 = 20240601;
const R: usize = 1000;

fn report(id: u32, pass: bool, detail: String, started: Instant) {
    let line = format!(
        "\nAC{id:02} {} {detail} [{:.1}s]\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn rate(hits: impl Iterator<Item = bool>, total: usize) -> f64 {
    hits.filter(|&b| b).count() as f64 / total as f64
}

#[test]
fn ac01_kernel_negativity_threshold() {
    let t = Instant::now();
    let xs: Vec<f64> = (0..4096).map(|i| -PI + TAU * i as f64 / 4096.0).collect();
    let threshold = (1..=40).map(|i| 0.05 * i as f64).find(|&lam| {
        xs.iter().map(|&x| spline_kernel(x, lam).unwrap()).fold(f64::INFINITY, f64::min) >= 0.0
    });
    let pass = matches!(threshold, Some(l) if (0.7..=0.9).contains(&l));
    report(1, pass, format!("threshold λ = {threshold:?}, want [0.7, 0.9]"), t);
    assert!(pass);
}

#[test]
fn ac02_lambda_rate() {
    let t = Instant::now();
    let sc = Scenario::wrapped_bimodal(FRAC_PI_4);
    let ns = [100usize, 400, 1600, 6400];
    let mut pts = Vec::new();
    for &n in &ns {
        let (mut lams, _) = run_replicates(200, SEED, |_, rng| {
            let s = sc.sample_with(n, rng)?;
            let u = empirical_fourier(&s, default_order(n))?;
            Ok(select_lambda(&u, n, &LambdaGrid::default())?.0)
        })
        .unwrap();
        lams.sort_by(f64::total_cmp);
        let med = 0.5 * (lams[99] + lams[100]);
        pts.push(((n as f64).ln(), med.ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let pass = (-0.95..=-0.65).contains(&slope);
    let meds: Vec<String> = pts.iter().map(|p| format!("{:.3e}", p.1.exp())).collect();
    report(2, pass, format!("slope {slope:.3}, want [-0.95, -0.65]; medians {meds:?}"), t);
    assert!(pass);
}

#[test]
fn ac03_parseval_and_convolution() {
    let t = Instant::now();
    let s = Scenario::wrapped_bimodal(0.9).sample(300, SEED).unwrap();
    let n = s.len();
    let k = 24;
    let lam = 2e-4;
    let u = empirical_fourier(&s, k).unwrap();
    let m = empirical_mise(&u, lam, n).unwrap();
    let c: Vec<f64> = (0..=k as i64).map(|j| shrinkage(j, lam).unwrap()).collect();
    let series = |x: f64, f: &dyn Fn(usize) -> f64| -> f64 {
        1.0 + 2.0
            * (1..=k)
                .map(|j| {
                    let e = Complex64::from_polar(1.0, -(j as f64) * x);
                    f(j) * (u.get(j as i64) * e).re
                })
                .sum::<f64>()
    };
    let fitted = |x: f64| series(x, &|j| c[j]);
    let raw = |x: f64| series(x, &|_| 1.0);
    let kern = |y: f64| 1.0 + 2.0 * (1..=k).map(|j| c[j] * (j as f64 * y).cos()).sum::<f64>();
    let gl = GaussLegendre::new(32);
    let bias_q = gl.integrate_composite(0.0, TAU, 64, |x| (fitted(x) - raw(x)).powi(2));
    let var_q = (gl.integrate_composite(-PI, PI, 64, |y| kern(y).powi(2))
        - gl.integrate_composite(0.0, TAU, 64, |x| fitted(x).powi(2)))
        / n as f64;
    let e_par = (m.bias_term - bias_q).abs().max((m.variance_term - var_q).abs());

    let fit = fit_spline_density(&s, 0.01, Some(4000)).unwrap();
    let e_conv = (0..256)
        .map(|i| {
            let x = TAU * i as f64 / 256.0;
            let conv = s.angles().iter().map(|&a| spline_kernel(x - a, 0.01).unwrap()).sum::<f64>() / n as f64;
            (fit.evaluate(x) - conv).abs()
        })
        .fold(0.0, f64::max);
    let pass = e_par < 1e-8 && e_conv < 1e-9;
    report(3, pass, format!("parseval err {e_par:.2e} (<1e-8), convolution err {e_conv:.2e} (<1e-9)"), t);
    assert!(pass);
}

#[test]
fn ac04_pointwise_mse_oracle() {
    let t = Instant::now();
    let sc = Scenario::wrapped_bimodal(0.8);
    let (k, lam, n) = (20usize, 1e-3, 200usize);
    let truth = sc.fourier(2 * k).unwrap();
    let xs: Vec<f64> = (0..8).map(|i| 0.1 + TAU * i as f64 / 8.0).collect();
    let f_rel: Vec<f64> = xs.iter().map(|&x| TAU * sc.density(x)).collect();
    let (errs, _) = run_replicates(10_000, SEED, |_, rng| {
        let s = sc.sample_with(n, rng)?;
        let fit = fit_spline_density(&s, lam, Some(k))?;
        Ok(xs.iter().zip(&f_rel).map(|(&x, f)| (fit.evaluate(x) - f).powi(2)).collect::<Vec<_>>())
    })
    .unwrap();
    let r = errs.len() as f64;
    let mut worst: f64 = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        let mean = errs.iter().map(|e| e[j]).sum::<f64>() / r;
        let sd = (errs.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        let exact = pointwise_mse(&truth, lam, n, x).unwrap().total;
        worst = worst.max((mean - exact).abs() / (sd / r.sqrt()));
    }
    let pass = worst <= 3.0;
    report(4, pass, format!("max |MC - exact| = {worst:.2} standard errors, want <= 3"), t);
    assert!(pass);
}

#[test]
fn ac05_null_calibration() {
    let t = Instant::now();
    let cfg = DetectConfig::new(DetectConfig::default_layer(1000), 0.05);
    let (any, _) = run_replicates(200, SEED, |_, rng| {
        let s = Scenario::Uniform.sample_with(1000, rng)?;
        Ok(!detect_features(&s, &cfg)?.features.is_empty())
    })
    .unwrap();
    let fwer = rate(any.iter().copied(), 200);
    let bound = 0.05 + 3.0 * (0.05f64 / 200.0).sqrt();
    let pass = fwer <= bound;
    report(5, pass, format!("family-wise rejection {fwer:.3}, want <= {bound:.4}"), t);
    assert!(pass);
}

struct Replicate {
    features: Vec<(FeatureKind, f64, Arc)>,
    ise_pipeline: f64,
    ise_kde: f64,
}

fn reproduce(sc: &Scenario) -> Vec<Replicate> {
    let grid = IseGrid::new(sc);
    let kde = Method::parse("kde").unwrap();
    let cfg = PipelineConfig::default();
    let (rows, failures) = run_replicates(R, SEED, |_, rng| {
        let s = sc.sample_with(1000, rng)?;
        let out = estimate_detailed(&s, &cfg)?;
        let v: Vec<f64> = grid.nodes().iter().map(|&x| out.estimate.evaluate(x, false)).collect();
        let k = kde.fit_eval(sc, &s, grid.nodes())?;
        Ok(Replicate {
            features: out.estimate.report.features.iter().map(|f| (f.kind, f.location, f.interval)).collect(),
            ise_pipeline: grid.ise(&v),
            ise_kde: grid.ise(&k),
        })
    })
    .unwrap();
    assert_eq!(failures, 0);
    rows
}

fn mises(rows: &[Replicate]) -> (f64, f64) {
    let r = rows.len() as f64;
    (
        rows.iter().map(|x| x.ise_pipeline).sum::<f64>() / r,
        rows.iter().map(|x| x.ise_kde).sum::<f64>() / r,
    )
}

#[test]
fn ac06_unif_triangular() {
    let t = Instant::now();
    let rows = reproduce(&Scenario::UnifTriangular);
    let (mp, mk) = mises(&rows);
    let tol = 2.0 * TAU / 2f64.powi(DetectConfig::default_layer(1000) as i32);
    let ends = [-3.0 * FRAC_PI_4, -FRAC_PI_4, FRAC_PI_4, 3.0 * FRAC_PI_4];
    let located = rate(
        rows.iter().map(|r| {
            ends.iter().all(|&e| {
                r.features
                    .iter()
                    .any(|f| f.0 == FeatureKind::SupportBoundary && circ_dist(f.1, e) <= tol)
            })
        }),
        rows.len(),
    );
    let pass = mp < mk && located >= 0.9;
    report(
        6,
        pass,
        format!("MISE pipeline {mp:.5} vs KDE {mk:.5}; all four endpoints within {tol:.3} rad in {:.1}% (want >= 90%)", 100.0 * located),
        t,
    );
    assert!(pass);
}

#[test]
fn ac07_eps_mixture() {
    let t = Instant::now();
    let rows = reproduce(&Scenario::eps_mixture(0.05));
    let (mp, mk) = mises(&rows);
    let atoms = [0.75 * PI, 1.25 * PI];
    let found = rate(
        rows.iter().map(|r| {
            atoms.iter().all(|&a| {
                r.features
                    .iter()
                    .any(|f| f.0 == FeatureKind::Outlier && f.2.contains_closed(a))
            })
        }),
        rows.len(),
    );
    let pass = mp < mk && found >= 0.9;
    report(
        7,
        pass,
        format!("MISE pipeline {mp:.5} vs KDE {mk:.5}; both outliers detected in {:.1}% (want >= 90%)", 100.0 * found),
        t,
    );
    assert!(pass);
}

#[test]
fn ac08_piecewise_uniform() {
    let t = Instant::now();
    let rows = reproduce(&Scenario::PiecewiseUniform);
    let tol = 2.0 * TAU / 2f64.powi(DetectConfig::default_layer(1000) as i32);
    let breaks = [-FRAC_PI_2, -FRAC_PI_4, FRAC_PI_4, FRAC_PI_2];
    let rates: Vec<f64> = breaks
        .iter()
        .map(|&b| rate(rows.iter().map(|r| r.features.iter().any(|f| circ_dist(f.1, b) <= tol)), rows.len()))
        .collect();
    let three = rate(
        rows.iter().map(|r| {
            breaks
                .iter()
                .filter(|&&b| r.features.iter().any(|f| circ_dist(f.1, b) <= tol))
                .count()
                >= 3
        }),
        rows.len(),
    );
    let good = rates.iter().filter(|&&p| p >= 0.8).count();
    let pass = good >= 3;
    let pct: Vec<String> = rates.iter().map(|p| format!("{:.1}%", 100.0 * p)).collect();
    report(
        8,
        pass,
        format!(
            "detection rates at -π/2, -π/4, π/4, π/2: {pct:?}; {good} of 4 at >= 80% (want >= 3); >= 3 found jointly in {:.1}%",
            100.0 * three
        ),
        t,
    );
    assert!(pass);
}

#[test]
fn ac09_table1_band() {
    let t = Instant::now();
    let rows = table1_percent_increase(&[0.01, 0.05, 0.10], &[1000], R, SEED).unwrap();
    let inc: Vec<f64> = rows.iter().map(|r| r.percent_increase).collect();
    let monotone = inc.windows(2).all(|w| w[1] > w[0]);
    let pass = (5.0..=35.0).contains(&inc[1]) && monotone;
    report(
        9,
        pass,
        format!("increase at ε = 0.01: {:.2}% (want [5, 35]); ε = 0.05: {:.2}%, ε = 0.10: {:.2}%; monotone {monotone}", inc[1], inc[2], inc[3]),
        t,
    );
    assert!(pass);
}

#[test]
fn ac10_table2_ordering() {
    let t = Instant::now();
    let grid = table2_theta_grid();
    let rows = table2_compare(&grid, 50, R, SEED).unwrap();
    let wins = rows.iter().filter(|r| r.spline < r.kde_cv).count();
    let frac = wins as f64 / rows.len() as f64;
    let pass = frac >= 0.8;
    report(10, pass, format!("spline beats KDE-CV at {wins} of {} θ values ({:.1}%, want >= 80%)", rows.len(), 100.0 * frac), t);
    assert!(pass);
}

/// Draw from `β = (0, β₁, 0)` on `[0, 1)` with the break at `0.5`.
fn jump_sample(rng: &mut impl Rng, beta1: f64, n: usize) -> Vec<f64> {
    let right = beta1.exp() / (1.0 + beta1.exp());
    (0..n)
        .map(|_| {
            let off = if rng.random::<f64>() < right { 0.5 } else { 0.0 };
            off + 0.5 * rng.random::<f64>()
        })
        .collect()
}

#[test]
fn ac11_mle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut grad_err: f64 = 0.0;
    let mut match_err: f64 = 0.0;
    for _ in 0..20 {
        let start = rng.random::<f64>() * TAU;
        let len = 0.2 + rng.random::<f64>();
        let u = Arc::new(start, len).unwrap();
        let x0 = start + len * (0.2 + 0.6 * rng.random::<f64>());
        let pts: Vec<f64> = (0..300).map(|_| start + len * rng.random::<f64>().powf(1.3)).collect();
        let stats = SufficientStats::from_points(&pts, x0, &u).unwrap();
        let beta = [0.0; 3].map(|_: f64| rng.random_range(-2.0..2.0));
        let p = ExpFamilyParams::new(beta, x0, u).unwrap();
        let g = log_likelihood_gradient(&p, &stats);
        for i in 0..3 {
            let h = 1e-5;
            let mut bp = beta;
            let mut bm = beta;
            bp[i] += h;
            bm[i] -= h;
            let lp = log_likelihood(&ExpFamilyParams::new(bp, x0, u).unwrap(), &stats);
            let lm = log_likelihood(&ExpFamilyParams::new(bm, x0, u).unwrap(), &stats);
            let fd = (lp - lm) / (2.0 * h);
            grad_err = grad_err.max((g[i] - fd).abs() / g[i].abs().max(1.0));
        }
        let s = AngularSample::new(pts.iter().copied()).unwrap();
        let fit = fit_mle(&s, x0, u).unwrap();
        let e = expected_statistics(&fit.params);
        for i in 0..3 {
            match_err = match_err.max((e[i] - stats.sums[i] / stats.n as f64).abs());
        }
    }
    let u = Arc::new(0.0, 1.0).unwrap();
    let (b1, _) = run_replicates(R, SEED, |_, rng| {
        let s = AngularSample::new(jump_sample(rng, 1.5, 2000))?;
        Ok(fit_mle(&s, 0.5, u)?.params.beta1)
    })
    .unwrap();
    let cover = rate(b1.iter().map(|b| (b - 1.5).abs() <= 0.2), b1.len());
    let pass = grad_err < 1e-4 && match_err < 1e-6 && cover >= 0.95;
    report(
        11,
        pass,
        format!(
            "gradient rel err {grad_err:.2e} (<1e-4), moment match {match_err:.2e} (<1e-6), β₁ within ±0.2 in {:.1}% (want >= 95%)",
            100.0 * cover
        ),
        t,
    );
    assert!(pass);
}

fn kamthi_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/kamthi_upper.csv")
}

#[test]
fn ac12_normalization() {
    let t = Instant::now();
    let scenarios = [
        Scenario::eps_mixture(0.05),
        Scenario::eps_mixture(0.2),
        Scenario::wrapped_bimodal(0.4),
        Scenario::wrapped_bimodal(1.2),
        Scenario::UnifTriangular,
        Scenario::PiecewiseUniform,
        Scenario::Uniform,
    ];
    let mut samples: Vec<AngularSample> = Vec::new();
    for sc in &scenarios {
        for (n, seed) in [(30usize, 1u64), (200, 2), (1000, 3), (5000, 4)] {
            samples.push(sc.sample(n, seed).unwrap());
        }
    }
    samples.push(load_grouped(kamthi_path(), 0, 0.0).unwrap());
    let mut worst: f64 = 0.0;
    let mut min: f64 = f64::INFINITY;
    for s in &samples {
        let est = estimate(s, &PipelineConfig::default()).unwrap();
        worst = worst.max((est.grid_integral() - 1.0).abs());
        min = est.values.iter().copied().fold(min, f64::min);
    }
    let pass = worst < 1e-6 && min >= 0.0;
    report(12, pass, format!("{} fits, max |∫f - 1| = {worst:.2e}, min value {min:.3e}", samples.len()), t);
    assert!(pass);
}

#[test]
fn ac13_moment_round_trip() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=8usize);
        let s = AngularSample::new((0..n).map(|_| rng.random::<f64>() * TAU)).unwrap();
        let p = power_sums(&s, n);
        let back = power_sums(&data_from_power_sums(&p).unwrap(), n);
        worst = p.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(worst, f64::max);
    }
    let pass = worst < 1e-6;
    report(13, pass, format!("max moment error {worst:.2e} over 100 samples (<1e-6)"), t);
    assert!(pass);
}

#[test]
fn ac14_kamthi() {
    let t = Instant::now();
    let s = load_grouped(kamthi_path(), 0, 0.0).unwrap();
    let cfg = PipelineConfig::default();
    let out = estimate_detailed(&s, &cfg).unwrap();
    let rep = &out.estimate.report;
    // the four empty 20° bins, 140° to 200°
    let empty = (141..200).map(|d| (d as f64).to_radians());
    let covered = empty.clone().all(|x| rep.exterior.iter().any(|a| a.contains_closed(x)));
    let input = InputSummary {
        source: "kamthi_upper.csv".into(),
        n: s.len(),
        degrees: true,
        grouped: true,
    };
    let doc = OutputDocument::build(&out, input, &cfg, Some(0), OUTPUT_POINTS).unwrap();
    let json = doc.to_json().unwrap();
    let back = OutputDocument::from_json(&json).unwrap();
    let schema_ok = back.validate().is_ok() && back == doc;
    let ext: Vec<String> = rep
        .exterior
        .iter()
        .map(|a| format!("[{:.1}°, {:.1}°)", a.start.to_degrees(), a.end().to_degrees()))
        .collect();
    let pass = s.len() == 580 && covered && schema_ok;
    report(
        14,
        pass,
        format!("n = {}, exterior {ext:?} covers 140°-200°: {covered}, JSON round trip valid: {schema_ok}", s.len()),
        t,
    );
    assert!(pass);
}
