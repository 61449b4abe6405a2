use std::f64::consts::{PI, TAU};

use circspline::circle::{
    circular_distance, data_from_power_sums, empirical_fourier, power_sums, wrap_angle, AngularSample,
};
use circspline::detect::{aggregate_pvalues, holm, WeightScheme};
use circspline::io::{GroupedData, Bin};
use circspline::kde::{KdeEstimate, KernelKind, KernelSpec};
use circspline::local::{exp_density, fit_mle, normalizer, ExpFamilyParams};
use circspline::circle::Arc;
use circspline::pipeline::{estimate, PipelineConfig};
use circspline::quad::GaussLegendre;
use circspline::sim::Scenario;
use circspline::spline::{empirical_mise, shrinkage};
use proptest::prelude::*;

fn angles(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..TAU, 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wrapped_angles_stay_in_range(raw in -1e6f64..1e6) {
        let a = wrap_angle(raw).unwrap().value();
        prop_assert!((0.0..TAU).contains(&a));
        let back = (raw - a) / TAU;
        prop_assert!((back - back.round()).abs() < 1e-6);
    }

    #[test]
    fn distance_is_a_metric(a in 0.0..TAU, b in 0.0..TAU, c in 0.0..TAU) {
        let (a, b, c) = (wrap_angle(a).unwrap(), wrap_angle(b).unwrap(), wrap_angle(c).unwrap());
        let d = circular_distance;
        prop_assert!((0.0..=PI).contains(&d(a, b)));
        prop_assert_eq!(d(a, b), d(b, a));
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
    }

    #[test]
    fn moments_are_conjugate_symmetric_and_bounded(xs in angles(60), k in 0usize..20) {
        let s = AngularSample::new(xs.clone()).unwrap();
        let u = empirical_fourier(&s, k).unwrap();
        prop_assert_eq!(u.get(0).re, 1.0);
        for j in 1..=k as i64 {
            prop_assert!((u.get(-j) - u.get(j).conj()).norm() < 1e-12);
            prop_assert!(u.get(j).norm() <= 1.0 + 1e-12);
        }
        let mut rev = xs;
        rev.reverse();
        let v = empirical_fourier(&AngularSample::new(rev).unwrap(), k).unwrap();
        for j in 0..=k as i64 {
            prop_assert!((u.get(j) - v.get(j)).norm() < 1e-12);
        }
    }

    #[test]
    fn moment_round_trip(xs in prop::collection::vec(0.0..TAU, 1..=8)) {
        // distinct points keep the companion matrix well conditioned
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let gaps_ok = sorted.windows(2).all(|w| w[1] - w[0] > 0.05)
            && (sorted.len() < 2 || sorted[0] + TAU - sorted[sorted.len() - 1] > 0.05);
        prop_assume!(gaps_ok);
        let s = AngularSample::new(xs).unwrap();
        let back = data_from_power_sums(&power_sums(&s, s.len())).unwrap();
        let got = back.sorted();
        for (a, b) in got.iter().zip(&sorted) {
            prop_assert!(circular_distance(wrap_angle(*a).unwrap(), wrap_angle(*b).unwrap()) < 1e-6);
        }
    }

    #[test]
    fn shrinkage_is_monotone(k in 1i64..200, l1 in 0.0f64..10.0, dl in 0.0f64..10.0) {
        let c = shrinkage(k, l1).unwrap();
        prop_assert!(c > 0.0 && c <= 1.0);
        prop_assert!(shrinkage(k, l1 + dl).unwrap() <= c);
        prop_assert!(shrinkage(k + 1, l1).unwrap() <= c);
    }

    #[test]
    fn mise_terms_move_with_lambda(xs in angles(40), l in 1e-6f64..10.0, f in 1.0f64..100.0) {
        let s = AngularSample::new(xs).unwrap();
        let u = empirical_fourier(&s, 20).unwrap();
        let a = empirical_mise(&u, l, s.len()).unwrap();
        let b = empirical_mise(&u, l * f, s.len()).unwrap();
        prop_assert!(b.bias_term >= a.bias_term - 1e-12);
        prop_assert!(b.variance_term <= a.variance_term + 1e-12);
        prop_assert!((a.total - a.bias_term - a.variance_term).abs() < 1e-12);
    }

    #[test]
    fn aggregate_stays_between_extremes(ps in prop::collection::vec(1e-12f64..=1.0, 1..10)) {
        let w = WeightScheme::default().weights(ps.len()).unwrap();
        let p = aggregate_pvalues(&ps, &w).unwrap();
        let lo = ps.iter().copied().fold(1.0, f64::min);
        let hi = ps.iter().copied().fold(0.0, f64::max);
        prop_assert!(p >= lo * (1.0 - 1e-12) && p <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn holm_is_order_free_and_monotone(ps in prop::collection::vec(0.0f64..0.2, 1..30), a in 0.001f64..0.2, da in 0.0f64..0.3) {
        let base: Vec<usize> = holm(&ps, a);
        let mut idx: Vec<usize> = (0..ps.len()).collect();
        idx.reverse();
        let perm: Vec<f64> = idx.iter().map(|&i| ps[i]).collect();
        let mut mapped: Vec<usize> = holm(&perm, a).into_iter().map(|j| idx[j]).collect();
        mapped.sort_unstable();
        let mut sorted = base.clone();
        sorted.sort_unstable();
        prop_assert_eq!(&mapped, &sorted);
        let wider = holm(&ps, (a + da).min(0.99));
        prop_assert!(base.iter().all(|i| wider.contains(i)));
    }

    #[test]
    fn kde_is_rotation_invariant(xs in angles(40), x in 0.0..TAU, d in 0.0..TAU, h in 0.05f64..1.5) {
        let s = AngularSample::new(xs).unwrap();
        let spec = KernelSpec::new(KernelKind::Epanechnikov, h).unwrap();
        let a = KdeEstimate::new(&s, spec).unwrap().density(x);
        let b = KdeEstimate::new(&s.rotate(d), spec).unwrap().density(x + d);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn local_density_integrates_to_one(
        b0 in -20.0f64..20.0, b1 in -5.0f64..5.0, b2 in -20.0f64..20.0,
        start in 0.0..TAU, len in 0.05f64..2.0, frac in 0.05f64..0.95,
    ) {
        let interval = Arc::new(start, len).unwrap();
        let x0 = interval.start + frac * len;
        let p = ExpFamilyParams::new([b0, b1, b2], x0, interval).unwrap();
        let gl = GaussLegendre::new(40);
        let f = |t: f64| exp_density(&p, interval.start + t).unwrap_or(0.0);
        let total = gl.integrate(0.0, frac * len, f) + gl.integrate(frac * len, len, f);
        prop_assert!((total - 1.0).abs() < 1e-8, "{}", total);
        prop_assert!(normalizer(&p).value > 0.0);
    }

    #[test]
    fn mle_shape_is_translation_equivariant(seed in 0u64..1000, delta in 0.0..TAU) {
        let s = Scenario::Uniform.sample(300, seed).unwrap();
        let interval = Arc::new(1.0, 1.5).unwrap();
        let inside = s.restrict(&interval);
        let a = fit_mle(&inside, 1.6, interval).unwrap();
        let b = fit_mle(&inside.rotate(delta), 1.6 + delta, interval.rotate(delta)).unwrap();
        prop_assert!((a.params.beta1 - b.params.beta1).abs() < 1e-6);
        prop_assert!((a.params.beta2 - b.params.beta2).abs() < 1e-6);
    }

    #[test]
    fn grouped_loading_counts_and_bins(counts in prop::collection::vec(0u64..30, 18), seed in 0u64..100) {
        let bins: Vec<Bin> = counts.iter().enumerate().map(|(i, &c)| Bin {
            start_deg: 20.0 * i as f64,
            end_deg: 20.0 * i as f64 + 19.0,
            count: c,
        }).collect();
        let g = GroupedData::new(bins).unwrap();
        prop_assume!(g.total > 0);
        let s = g.to_sample(seed, 0.0).unwrap();
        prop_assert_eq!(s.len() as u64, counts.iter().sum::<u64>());
        for (i, &c) in counts.iter().enumerate() {
            let lo = (20.0 * i as f64).to_radians();
            let hi = (20.0 * (i + 1) as f64).to_radians();
            let got = s.angles().iter().filter(|&&x| x >= lo && x < hi).count() as u64;
            prop_assert_eq!(got, c);
        }
        prop_assert_eq!(s, g.to_sample(seed, 0.0).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pipeline_output_is_a_density(seed in 0u64..10_000, which in 0usize..5, n in 30usize..600) {
        let sc = [
            Scenario::UnifTriangular,
            Scenario::PiecewiseUniform,
            Scenario::eps_mixture(0.05),
            Scenario::wrapped_bimodal(0.8),
            Scenario::Uniform,
        ][which];
        let s = sc.sample(n, seed).unwrap();
        let cfg = PipelineConfig::default();
        let est = estimate(&s, &cfg).unwrap();
        prop_assert!((est.grid_integral() - 1.0).abs() < 1e-6);
        prop_assert!(est.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
        let again = estimate(&s, &cfg).unwrap();
        prop_assert_eq!(est, again);
    }
}
