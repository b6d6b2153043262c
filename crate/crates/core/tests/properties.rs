//! Property tests over the public API.

use proptest::prelude::*;

use tcsf::estimators::{assemble, estimate, EstimatorKind};
use tcsf::objectives::{make_linear, make_rastrigin, make_rosenbrock, NoiseModel, NoisyObjective};
use tcsf::optimizer::{check_schedule_conditions, run, ScheduleConfig};
use tcsf::perturbations::{sample, PerturbationKind};
use tcsf::stats::log_log_slope;
use tcsf::Stream;

fn kinds() -> impl Strategy<Value = EstimatorKind> {
    prop_oneof![
        Just(EstimatorKind::TcsfOneSided),
        Just(EstimatorKind::TcsfBalanced),
        Just(EstimatorKind::TcsfCrn),
        Just(EstimatorKind::Gsf),
        Just(EstimatorKind::Spsa),
        Just(EstimatorKind::RdsaUniform { eta: 5.0 }),
    ]
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimates_are_reproducible_from_the_seed(
        kind in kinds(),
        seed in any::<u64>(),
        x in prop::collection::vec(-3.0..3.0f64, 4),
        delta in 1e-3..1.0f64,
    ) {
        let obj = NoisyObjective::new(make_rosenbrock(4).unwrap(), NoiseModel::Type1 { sigma: 5.0 }).unwrap();
        let a = estimate(kind, &obj, &x, delta, &mut Stream::new(seed)).unwrap();
        let b = estimate(kind, &obj, &x, delta, &mut Stream::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn balanced_estimate_is_invariant_under_direction_flip(
        u in prop::collection::vec(-1.0..1.0f64, 1..8),
        yp in -1e3..1e3f64,
        ym in -1e3..1e3f64,
        delta in 1e-4..1.0f64,
    ) {
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let a = assemble(EstimatorKind::TcsfBalanced, &u, yp, ym, delta);
        let b = assemble(EstimatorKind::TcsfBalanced, &neg, ym, yp, delta);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn noiseless_linear_tcsf_estimate_is_the_projected_gradient(
        coef in prop::collection::vec(-5.0..5.0f64, 3),
        x in prop::collection::vec(-2.0..2.0f64, 3),
        seed in any::<u64>(),
    ) {
        // f(x+δu) − f(x−δu) = 2δ cᵀu, so the balanced estimate equals (cᵀu) w(u).
        let obj = NoisyObjective::noiseless(make_linear(coef.clone()));
        let e = estimate(EstimatorKind::TcsfBalanced, &obj, &x, 0.1, &mut Stream::new(seed)).unwrap();
        let cu: f64 = coef.iter().zip(&e.u.u).map(|(c, u)| c * u).sum();
        for (g, w) in e.g.iter().zip(e.u.cauchy_weight()) {
            prop_assert!((g - cu * w).abs() <= 1e-9 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn bounded_kinds_stay_in_the_unit_ball(dim in 1usize..10, seed in any::<u64>()) {
        let mut rng = Stream::new(seed);
        for kind in [PerturbationKind::TruncatedCauchyExact, PerturbationKind::TProjectedSphere] {
            let s = sample(kind, dim, &mut rng).unwrap();
            let n2: f64 = s.u.iter().map(|v| v * v).sum();
            prop_assert!(n2 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn objective_gradients_match_central_differences(x in prop::collection::vec(-2.0..2.0f64, 4)) {
        for spec in [make_rastrigin(4).unwrap(), make_rosenbrock(4).unwrap()] {
            let fd = central_difference(|p| spec.value(p), &x, 1e-5);
            for (g, d) in spec.gradient(&x).iter().zip(&fd) {
                prop_assert!((g - d).abs() <= 1e-4 * (1.0 + g.abs()), "{} {} vs {}", spec.name, g, d);
            }
        }
    }

    #[test]
    fn state_dependent_noise_never_goes_negative_or_nan(x in prop::collection::vec(-3.0..3.0f64, 4)) {
        for noise in [NoiseModel::Type2, NoiseModel::Type3] {
            let obj = NoisyObjective::new(make_rosenbrock(4).unwrap(), noise).unwrap();
            let (sd, degenerate) = obj.noise_std(&x);
            prop_assert!(sd.is_finite() && sd > 0.0);
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if noise == NoiseModel::Type2 && nx <= 1.0 {
                prop_assert!(degenerate);
            }
        }
    }

    #[test]
    fn power_schedule_conditions_follow_the_exponents(
        alpha in 0.01..1.5f64,
        phi in 0.01..1.0f64,
    ) {
        let r = check_schedule_conditions(&ScheduleConfig::power(1.0, alpha, 1.0, phi, 10));
        prop_assert_eq!(r.step_sum_diverges, alpha <= 1.0);
        prop_assert_eq!(r.ratio_square_sum_converges, alpha - phi > 0.5);
        prop_assert_eq!(r.valid, alpha <= 1.0 && alpha - phi > 0.5);
        prop_assert!((r.upsilon - (alpha - 2.0 * phi)).abs() < 1e-15);
    }

    #[test]
    fn power_schedule_values_decrease(gamma0 in 1e-3..10.0f64, alpha in 0.1..1.0f64, k in 1usize..10_000) {
        let s = ScheduleConfig::power(gamma0, alpha, 1.0, 1.0 / 6.0, 20_000);
        prop_assert!(s.gamma(k + 1) < s.gamma(k));
        prop_assert!(s.delta(k + 1) < s.delta(k));
        prop_assert!((s.gamma(k) - gamma0 * (k as f64).powf(-alpha)).abs() <= 1e-12 * gamma0);
    }

    #[test]
    fn log_log_slope_recovers_power_laws(c in 0.1..10.0f64, p in -3.0..3.0f64) {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|v: &f64| c * v.powf(p)).collect();
        prop_assert!((log_log_slope(&x, &y).unwrap() - p).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_reproducible_and_finite(kind in kinds(), seed in any::<u64>()) {
        let obj = NoisyObjective::new(make_rastrigin(4).unwrap(), NoiseModel::Type3).unwrap();
        let sched = ScheduleConfig::benchmark_diminishing(200);
        let x1 = [1.0, -0.5, 0.25, 2.0];
        let a = run(&obj, kind, &x1, &sched, &mut Stream::new(seed)).unwrap();
        let b = run(&obj, kind, &x1, &sched, &mut Stream::new(seed)).unwrap();
        prop_assert!(a.final_x.iter().all(|v| v.is_finite()));
        prop_assert_eq!(a, b);
    }
}
