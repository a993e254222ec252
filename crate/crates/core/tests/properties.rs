use proptest::prelude::*;

use sgd_cover::bounds::*;
use sgd_cover::cover::{cover_horizon, enumerate_cover, DEFAULT_CAP};
use sgd_cover::data::{Dataset, Sample};
use sgd_cover::domain::{hoeffding_tail, ConvexDomain, ParamPoint};
use sgd_cover::experiments::em_step;
use sgd_cover::losses;
use sgd_cover::sgd::{contraction_factor, UpdateMap};

fn pt(v: &[f64]) -> ParamPoint {
    ParamPoint::new(v.to_vec()).unwrap()
}

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ball_projection_is_idempotent_and_inside(x in vec2(), r in 0.1..2.0f64) {
        let dom = ConvexDomain::centered_ball(2, r).unwrap();
        let p = dom.project(&pt(&x)).unwrap();
        prop_assert!(p.norm() <= r * (1.0 + 1e-12));
        let q = dom.project(&p).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn contraction_factor_is_a_contraction(alpha in 0.01..1.0f64, extra in 0.0..5.0f64, frac in 0.01..0.99f64) {
        let beta = alpha + extra;
        let eta = frac * 2.0 / beta;
        let g = contraction_factor(alpha, beta, eta).unwrap();
        prop_assert!((0.0..1.0).contains(&g));
    }

    #[test]
    fn horizon_reaches_target(r in 0.1..10.0f64, eps in 1e-4..1.0f64, gamma in 0.01..0.99f64) {
        let t = cover_horizon(r, eps, gamma).unwrap();
        prop_assert!(gamma.powi(t as i32) * r <= eps * (1.0 + 1e-9));
        if t > 0 {
            prop_assert!(gamma.powi(t as i32 - 1) * r > eps * (1.0 - 1e-9));
        }
    }

    #[test]
    fn hoeffding_tail_is_a_monotone_probability(n in 1usize..500, eps in 0.001..2.0f64, w in 0.1..5.0f64) {
        let a = hoeffding_tail(n, eps, w).unwrap();
        let b = hoeffding_tail(n, eps * 1.1, w).unwrap();
        let c = hoeffding_tail(n + 1, eps, w).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a && c <= a);
    }

    #[test]
    fn certificate_total_is_sum_of_components(
        n in 1usize..10_000, delta in 0.001..0.999f64, b in 0.0..10.0f64,
        l in 0.0..10.0f64, gamma in 0.0..0.99f64, t in 0usize..30, xi in 0.0..1.0f64,
    ) {
        let certs = [
            bound_strongly_convex(n, delta, b, l, 1.0, gamma).unwrap(),
            bound_single_trajectory(n, delta, b, t).unwrap(),
            bound_early(n, delta, b, t).unwrap(),
            bound_piecewise_contractive(n, delta, b, l, 1.0, gamma, Some(t), 3.0, xi).unwrap(),
            bound_master_covering(n, delta, b, l, t, 7.0, xi).unwrap(),
        ];
        for c in certs {
            let parts = [
                c.components.sample_dependency_term,
                c.components.concentration_term,
                c.components.covering_slack_term,
                c.components.approximation_term,
            ];
            let s: f64 = parts.iter().flatten().sum();
            prop_assert_eq!(s, c.total);
            prop_assert!(parts.iter().flatten().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn piecewise_reduces_to_master(
        n in 1usize..10_000, delta in 0.001..0.999f64, b in 0.0..10.0f64,
        l in 0.0..10.0f64, r in 0.1..5.0f64, gamma in 0.01..0.99f64, t in 0usize..30,
    ) {
        let p = bound_piecewise_contractive(n, delta, b, l, r, gamma, Some(t), 1.0, 0.0).unwrap();
        let q = bound_piecewise_approx(n, delta, b, l, r, gamma, Some(t), 1.0, 0.0, 0.3).unwrap();
        let m = bound_master_covering_log(n, delta, b, l, t, t as f64 * (n as f64).ln(), gamma.powi(t as i32) * r).unwrap();
        let tol = 1e-12 * p.total.max(1.0);
        prop_assert!((p.total - q.total).abs() <= tol);
        prop_assert!((p.total - m.total).abs() <= tol);
    }

    #[test]
    fn pinned_horizon_bounds_decrease_in_n(n in 1usize..100_000, t in 0usize..30, delta in 0.01..0.5f64) {
        let a = bound_single_trajectory(n, delta, 1.0, t).unwrap().total;
        let b = bound_single_trajectory(n + 1, delta, 1.0, t).unwrap().total;
        prop_assert!(b <= a);
        let a = bound_piecewise_contractive(n, delta, 1.0, 1.0, 1.0, 0.5, Some(t), 2.0, 0.01).unwrap().total;
        let b = bound_piecewise_contractive(n + 1, delta, 1.0, 1.0, 1.0, 0.5, Some(t), 2.0, 0.01).unwrap().total;
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn em_weights_are_distributions(
        zs in prop::collection::vec(vec2(), 1..20),
        cs in prop::collection::vec(vec2(), 1..4),
        zeta in 0.05..20.0f64,
    ) {
        let data = Dataset::new(zs.into_iter().map(|z| Sample::point(z).unwrap()).collect()).unwrap();
        let theta: Vec<ParamPoint> = cs.iter().map(|c| pt(c)).collect();
        let step = em_step(&theta, &data, zeta).unwrap();
        for row in &step.weights {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert_eq!(step.theta.len(), theta.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cover_entries_depend_only_on_their_indices(
        cs in prop::collection::vec(prop::collection::vec(-0.5..0.5f64, 2), 2..4),
        t in 1usize..4,
        eta in 0.1..0.9f64,
        victim in 0usize..4,
        bump in prop::collection::vec(-0.2..0.2f64, 2),
    ) {
        let n = cs.len();
        let victim = victim % n;
        let centers: Vec<ParamPoint> = cs.iter().map(|c| pt(c)).collect();
        let fam = losses::quadratic_centers(&centers, 1.0).unwrap();
        let data = Dataset::new(centers.iter().cloned().map(Sample::Point).collect()).unwrap();
        let cover = enumerate_cover(&UpdateMap::sgd(&fam, eta).unwrap(), &data, t, DEFAULT_CAP).unwrap();
        prop_assert_eq!(cover.len(), n.pow(t as u32));

        let mut moved = cs.clone();
        moved[victim][0] += bump[0];
        moved[victim][1] += bump[1];
        let centers2: Vec<ParamPoint> = moved.iter().map(|c| pt(c)).collect();
        let fam2 = losses::quadratic_centers(&centers2, 1.0).unwrap();
        let data2 = Dataset::new(centers2.iter().cloned().map(Sample::Point).collect()).unwrap();
        let cover2 = enumerate_cover(&UpdateMap::sgd(&fam2, eta).unwrap(), &data2, t, DEFAULT_CAP).unwrap();
        for (a, b) in cover.entries().zip(cover2.entries()) {
            if !a.deps.contains(&victim) {
                prop_assert_eq!(a.point, b.point);
            }
        }
    }
}
