use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reliable_fw::estimation::{pattern, LeastSquaresState};
use reliable_fw::geometry::random_polytope;
use reliable_fw::harness::{wilson_interval, ExperimentSpec};
use reliable_fw::solver::{schedule, step, Variant};
use reliable_fw::Polytope;

fn poly(seed: u64, d: usize, extra: usize) -> (Polytope, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_polytope(d, d + 1 + extra, &mut rng)
}

fn unit(v: Vec<f64>) -> DVector<f64> {
    let v = DVector::from_vec(v);
    let n = v.norm();
    if n < 1e-6 {
        DVector::from_element(v.len(), 1.0)
    } else {
        v / n
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_minimum_matches_best_vertex(seed in any::<u64>(), d in 1usize..4, extra in 0usize..4, c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (p, _) = poly(seed, d, extra);
        let c = DVector::from_column_slice(&c[..d]);
        let x = p.minimize_linear(&c).unwrap();
        let best = p.enumerate_vertices().unwrap().iter().map(|v| c.dot(v)).fold(f64::INFINITY, f64::min);
        prop_assert!(p.contains(&x, 1e-9));
        prop_assert!((c.dot(&x) - best).abs() <= 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn projection_is_feasible_and_no_farther_than_any_vertex(seed in any::<u64>(), d in 1usize..4, dir in prop::collection::vec(-1.0f64..1.0, 3), r in 0.0f64..3.0) {
        let (p, center) = poly(seed, d, 2);
        let x = &center + unit(dir[..d].to_vec()) * r;
        let y = p.project(&x).unwrap();
        prop_assert!(p.contains(&y, 1e-9));
        let dist = (&x - &y).norm();
        for v in p.enumerate_vertices().unwrap() {
            prop_assert!(dist <= (&x - v).norm() + 1e-9);
        }
        if p.contains(&x, 0.0) {
            prop_assert_eq!(dist, 0.0);
        }
    }

    #[test]
    fn shrinking_moves_every_residual_by_tau(seed in any::<u64>(), tau in 0.0f64..0.4) {
        let (p, center) = poly(seed, 2, 2);
        let s = p.shrink(tau).unwrap();
        let diff = p.residuals(&center).unwrap() - s.residuals(&center).unwrap();
        prop_assert!(diff.iter().all(|v| (v - tau).abs() < 1e-12));
    }

    #[test]
    fn fw_step_stays_in_the_polytope(seed in any::<u64>(), d in 1usize..4, eta in 0.0f64..=1.0, c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (p, center) = poly(seed, d, 2);
        let v = p.minimize_linear(&DVector::from_column_slice(&c[..d])).unwrap();
        let x = step(&center, &v, eta);
        prop_assert!(p.contains(&x, 1e-9));
    }

    #[test]
    fn schedules_are_decreasing_and_in_unit_interval(t in 0usize..100_000) {
        for v in Variant::ALL {
            let (e0, r0) = schedule(v, t);
            let (e1, r1) = schedule(v, t + 1);
            prop_assert!(e0 > 0.0 && e0 <= 1.0 && r0 > 0.0 && r0 <= 1.0);
            prop_assert!(e1 <= e0 && r1 <= r0);
        }
    }

    #[test]
    fn noiseless_pattern_recovers_any_polytope(seed in any::<u64>(), d in 1usize..4, extra in 0usize..4, r0 in 1e-3f64..0.1) {
        let (p, center) = poly(seed, d, extra);
        let pts = pattern(&center, r0);
        let x = DMatrix::from_fn(pts.len(), d, |i, j| pts[i][j]);
        let y = DMatrix::from_fn(pts.len(), p.m(), |i, k| (p.a().row(k) * &pts[i])[0] - p.b()[k]);
        let mut ls = LeastSquaresState::new(d, p.m());
        ls.update(&x, &y).unwrap();
        let est = ls.estimate().unwrap();
        prop_assert!((&est.a_hat - p.a()).amax() < 1e-8);
        prop_assert!((&est.b_hat - p.b()).amax() < 1e-8);
    }

    #[test]
    fn recursive_inverse_tracks_the_scatter(seed in any::<u64>(), d in 1usize..4, reps in 1usize..40, w in 1u32..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, center) = random_polytope(d, d + 2, &mut rng);
        let mut ls = LeastSquaresState::new(d, p.m());
        for k in 0..reps {
            for (j, q) in pattern(&center, 0.01 * (k + 1) as f64).into_iter().enumerate() {
                let y = p.a() * &q - p.b();
                ls.update_repeated(&q, &y, (w as u128) * (j as u128 + 1)).unwrap();
            }
        }
        let direct = ls.scatter().clone().try_inverse().unwrap();
        let q = ls.q().unwrap();
        prop_assert!((q - &direct).amax() <= 1e-9 * direct.amax());
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1usize..5000, k_frac in 0.0f64..=1.0) {
        let k = ((n as f64) * k_frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, 1.96);
        let p = k as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn experiment_text_round_trips(dim in 1usize..6, eps in 1e-4f64..1.0, delta in 1e-4f64..0.5, seed in any::<u64>(), horizon in prop::option::of(1usize..100_000), v in 0usize..4) {
        let mut spec = ExperimentSpec::default();
        spec.dim = dim;
        spec.config.eps = eps;
        spec.config.delta = delta;
        spec.config.seed = seed;
        spec.config.horizon = horizon;
        spec.config.variant = Variant::ALL[v];
        let mut back = ExperimentSpec::default();
        back.apply_text(&spec.to_text()).unwrap();
        prop_assert_eq!(back.dim, dim);
        prop_assert_eq!(back.config.eps, eps);
        prop_assert_eq!(back.config.delta, delta);
        prop_assert_eq!(back.config.seed, seed);
        prop_assert_eq!(back.config.horizon, horizon);
        prop_assert_eq!(back.config.variant, Variant::ALL[v]);
    }
}
