//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::{Duration, Instant};

use rand::Rng;
use sgd_cover::bounds::*;
use sgd_cover::cover::{
    box_counting_dimension, build_piecewise_approx, cover_horizon, enumerate_cover, ifs_dimension, verify_cover,
    ApproxOptions, IfsModel, VerifyConfig, DEFAULT_CAP,
};
use sgd_cover::data::{Dataset, Sample, SampleGenerator};
use sgd_cover::domain::{ConvexDomain, ParamPoint};
use sgd_cover::experiments::{
    hoeffding_check, run_em, soft_kmeans_gradient, stability_experiment, validate_bound, verify_em_equivalence,
    ValidationScenario,
};
use sgd_cover::losses;
use sgd_cover::rng;
use sgd_cover::sgd::{coupled_contraction_ratio, UpdateMap};

type Outcome = Result<String, String>;

fn pt(v: &[f64]) -> ParamPoint {
    ParamPoint::new(v.to_vec()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<E: std::fmt::Debug>(err: E) -> String {
    format!("error: {err:?}")
}

fn contraction_exactness() -> Outcome {
    let d = 3;
    let centers: Vec<ParamPoint> = vec![pt(&[0.5, 0.0, 0.1]), pt(&[-0.3, 0.4, 0.0]), pt(&[0.0, -0.6, 0.2]), pt(&[0.1, 0.1, -0.7])];
    let fam = losses::quadratic_centers(&centers, 1.0).map_err(e)?;
    let data = Dataset::new(centers.into_iter().map(Sample::Point).collect()).map_err(e)?;
    let mut worst: f64 = 0.0;
    for (k, eta) in [0.1, 0.5, 0.9, 1.5].into_iter().enumerate() {
        let mut map = UpdateMap::sgd(&fam, eta).map_err(e)?;
        map.project = false;
        map.enforce_domain = false;
        map.domain = ConvexDomain::whole_space(d);
        let target = (1.0_f64 - eta).abs();
        for pair in 0..100 {
            let mut r = rng::substream(1, k as u64, pair);
            let draw = |r: &mut rng::StreamRng| pt(&(0..d).map(|_| r.random_range(-5.0..5.0)).collect::<Vec<_>>());
            let a = draw(&mut r);
            let b = draw(&mut r);
            // few steps, so the pair stays far enough apart for the ratio to
            // be measured to 1e-12 (0.1^3 of the initial distance at most)
            let idx: Vec<usize> = (0..3).map(|_| r.random_range(0..data.len())).collect();
            let rep = coupled_contraction_ratio(&map, &a, &b, &idx, &data).map_err(e)?;
            for ratio in rep.ratios {
                worst = worst.max((ratio - target).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("max |ratio - |1-eta|| = {worst:.2e}"))
}

fn cover_soundness() -> Outcome {
    let centers = vec![pt(&[0.5, 0.0]), pt(&[-0.3, 0.4]), pt(&[0.0, -0.6])];
    let fam = losses::quadratic_centers(&centers, 1.0).map_err(e)?;
    let data = Dataset::new(centers.into_iter().map(Sample::Point).collect()).map_err(e)?;
    let eta = 0.5;
    let map = UpdateMap::sgd(&fam, eta).map_err(e)?;
    let c = fam.constants();
    let l = c.require("L").map_err(e)?;
    let r = c.require("R").map_err(e)?;
    let gamma = sgd_cover::sgd::contraction_factor(1.0, 1.0, eta).map_err(e)?;
    let eps = 1.0 / (2.0 * l * data.len() as f64);
    let t = cover_horizon(r, eps, gamma).map_err(e)?;
    let cover = enumerate_cover(&map, &data, t, DEFAULT_CAP).map_err(e)?;
    let cfg = VerifyConfig {
        trials: 10_000,
        max_extra_steps: 50,
        epsilon: eps,
        seed: 2,
    };
    let rep = verify_cover(&cover, &map, &data, &cfg).map_err(e)?;
    check(
        rep.pass && rep.failures.is_empty() && cover.len() == 27,
        format!(
            "T={t}, |cover|={}, eps={eps:.4}, failures={}, max distance={:.3e}",
            cover.len(),
            rep.failures.len(),
            rep.max_distance
        ),
    )
}

fn certificate_regression() -> Outcome {
    // reference values from a 30-digit evaluation of the closed forms
    let a = bound_strongly_convex(100, 0.05, 1.0, 1.0, 1.0, 0.5).map_err(e)?;
    let b = bound_single_trajectory(1000, 0.05, 1.0, 8).map_err(e)?;
    let c = bound_hard_kmeans(1000, 0.05, 2, 1.0, 0.25).map_err(e)?;
    let ok = (a.total - 0.540_167_973_883).abs() <= 1e-6
        && (b.total - 0.051_946_940_8).abs() <= 1e-6
        && c.inputs.T == Some(15);
    check(
        ok,
        format!(
            "strongly convex {:.6} (T={:?}), single trajectory {:.6}, hard K-means T={:?}",
            a.total, a.inputs.T, b.total, c.inputs.T
        ),
    )
}

fn bound_validity() -> Outcome {
    let sc = ValidationScenario {
        seed: 4,
        ..Default::default()
    };
    let rep = validate_bound(&sc).map_err(e)?;
    let neg = validate_bound(&ValidationScenario {
        certificate_scale: 1.0 / 50.0,
        ..sc
    })
    .map_err(e)?;
    check(
        rep.violation_fraction <= 0.05 && neg.violation_fraction > 0.05,
        format!(
            "certificate {:.4}: {} / {} violations (max gap {:.4}); control {:.4}: fraction {:.3}",
            rep.threshold, rep.violations, rep.resamplings, rep.max_observed_gap, neg.threshold, neg.violation_fraction
        ),
    )
}

fn piecewise_approximation() -> Outcome {
    let fam = losses::sin_cos(1.0).map_err(e)?;
    let approx = build_piecewise_approx(&fam, 0.5, (1.0, 1.0), ApproxOptions::default()).map_err(e)?;
    let grid: Vec<ParamPoint> = (0..200)
        .flat_map(|i| (0..200).map(move |j| (i, j)))
        .map(|(i, j)| pt(&[-1.0 + 2.0 * i as f64 / 199.0, -1.0 + 2.0 * j as f64 / 199.0]))
        .filter(|p| p.norm() <= 1.0)
        .collect();
    let err = approx.max_gradient_error(&grid, &Sample::Scalar(0.0)).map_err(e)?;
    check(
        err <= 0.5 && approx.within_bound(),
        format!(
            "max gradient error {err:.4} on {} grid points; {} pieces (bound {:.1})",
            grid.len(),
            approx.piece_count(),
            approx.piece_bound
        ),
    )
}

fn em_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in 0..50u64 {
        let mut r = rng::stream(6, inst);
        let k = r.random_range(1..=4);
        let d = r.random_range(1..=3);
        let n = r.random_range(1..=100);
        let zeta = r.random_range(0.1..5.0);
        let draw = |r: &mut rng::StreamRng| (0..d).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let theta: Vec<ParamPoint> = (0..k).map(|_| pt(&draw(&mut r))).collect();
        let samples = (0..n).map(|_| Sample::point(draw(&mut r))).collect::<Result<Vec<_>, _>>().map_err(e)?;
        let data = Dataset::new(samples).map_err(e)?;
        let rep = verify_em_equivalence(&theta, &data, zeta).map_err(e)?;
        worst = worst.max(rep.relative_residual);
    }

    // fixed point on two well-separated clusters
    let gen = SampleGenerator::GaussianClusters {
        centers: vec![pt(&[-1.0, 0.0]), pt(&[1.0, 0.5])],
        sigma: 0.2,
        radius: 3.0,
    };
    let data = Dataset::generate(&gen, 80, 7).map_err(e)?;
    let zeta = 2.0;
    let (fixed, iters, converged) = run_em(&[pt(&[-0.5, 0.0]), pt(&[0.5, 0.0])], &data, zeta, 100_000, 1e-14).map_err(e)?;
    let analytic = soft_kmeans_gradient(&fixed, &data, zeta).map_err(e)?;
    let an = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    // central differences of the empirical risk
    let flat: Vec<f64> = fixed.iter().flat_map(|t| t.coords().to_vec()).collect();
    let fam = losses::soft_kmeans(2, zeta, 3.5, 2).map_err(e)?;
    let risk = |v: &[f64]| fam.empirical_risk(&pt(v), &data.samples).unwrap();
    let h = 1e-6;
    let fd: f64 = (0..flat.len())
        .map(|j| {
            let (mut a, mut b) = (flat.clone(), flat.clone());
            a[j] += h;
            b[j] -= h;
            ((risk(&a) - risk(&b)) / (2.0 * h)).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    check(
        worst <= 1e-8 && converged && an <= 1e-6 && fd <= 1e-6,
        format!("max residual {worst:.2e}; EM fixed point after {iters} steps, |grad| {an:.2e} (finite differences {fd:.2e})"),
    )
}

fn stability_counterexample() -> Outcome {
    let rep = stability_experiment(1.0 / 3.0, 10, 10_000, 200, 8).map_err(e)?;
    check(
        (rep.mean_loss_s - 2.0).abs() <= 0.05 && rep.mean_loss_s_prime.abs() <= 0.05,
        format!(
            "mean f(theta_t; 1): {:.4} vs {:.4} (difference {:.4}, basins {})",
            rep.mean_loss_s, rep.mean_loss_s_prime, rep.difference, rep.basin_check
        ),
    )
}

fn ifs_dimension_check() -> Outcome {
    let model = IfsModel::quadratic(&[pt(&[-1.0]), pt(&[1.0])], 2.0 / 3.0, 1.0).map_err(e)?;
    let dim = ifs_dimension(&model);
    let orbit = model.orbit(200_000, 100, 9);
    let scales: Vec<f64> = (1..=6).map(|k| 2.0 / 3f64.powi(k)).collect();
    let est = box_counting_dimension(&orbit, &scales).map_err(e)?;
    let target = 2f64.ln() / 3f64.ln();
    let cert = bound_fractal(100, 0.05, 1.0, 1.0, 1.0, model.gamma(), est).map_err(e)?;
    check(
        (est - target).abs() <= 0.05 && dim.separated,
        format!("box counting {est:.4}, similarity {:.4}, certificate {:.4}", dim.d_h, cert.total),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

fn reduction_suite() -> Outcome {
    let mut r = rng::stream(10, 0);
    for _ in 0..20 {
        let n = r.random_range(1..10_000);
        let delta = r.random_range(0.001..0.5);
        let b = r.random_range(0.1..10.0);
        let l = r.random_range(0.1..10.0);
        let rad = r.random_range(0.1..10.0);
        let gamma = r.random_range(0.05..0.95);
        let t = r.random_range(0..40);
        let eta = r.random_range(0.01..1.0);
        let a = bound_piecewise_approx(n, delta, b, l, rad, gamma, Some(t), 1.0, 0.0, eta).map_err(e)?;
        let c = bound_piecewise_contractive(n, delta, b, l, rad, gamma, Some(t), 1.0, 0.0).map_err(e)?;
        let eps = gamma.powi(t as i32) * rad;
        let m = bound_master_covering_log(n, delta, b, l, t, t as f64 * (n as f64).ln(), eps).map_err(e)?;
        if !(close(a.total, c.total) && close(c.total, m.total)) {
            return Err(format!("mismatch {} {} {}", a.total, c.total, m.total));
        }
    }

    // 10 x 10 x 10 grid over (n, delta, B); each bound must be monotone in
    // every axis and in its remaining parameters
    let ns: Vec<usize> = (0..10).map(|i| 3 * 2usize.pow(i)).collect();
    let deltas: Vec<f64> = (0..10).map(|i| 0.01 + 0.09 * i as f64).collect();
    let bs: Vec<f64> = (0..10).map(|i| 0.5 + i as f64).collect();
    let mut checked = 0usize;
    let mut bad = Vec::new();
    let mut le = |what: &str, lo: f64, hi: f64| {
        checked += 1;
        if lo > hi + 1e-12 * hi.abs().max(1.0) {
            bad.push(format!("{what}: {lo} > {hi}"));
        }
    };
    let (l, rad, gamma, t, p, xi) = (1.0, 1.0, 0.5, 6, 4.0, 0.01);
    type Calc = Box<dyn Fn(usize, f64, f64) -> f64>;
    let calcs: Vec<(&str, Calc)> = vec![
        ("single", Box::new(move |n, d, b| bound_single_trajectory(n, d, b, t).unwrap().total)),
        ("early", Box::new(move |n, d, b| bound_early(n, d, b, t).unwrap().total)),
        (
            "contractive",
            Box::new(move |n, d, b| bound_piecewise_contractive(n, d, b, l, rad, gamma, Some(t), p, xi).unwrap().total),
        ),
        (
            "approx",
            Box::new(move |n, d, b| bound_piecewise_approx(n, d, b, l, rad, gamma, Some(t), p, xi, 0.5).unwrap().total),
        ),
        ("master", Box::new(move |n, d, b| bound_master_covering(n, d, b, l, t, 50.0, 0.01).unwrap().total)),
        (
            "multi_index",
            Box::new(move |n, d, b| {
                bound_multi_index_with_horizon(n, d, b, l, rad, 1.0, 2, 1, 1.0, 0.1, 1.0, Some(t)).unwrap().total
            }),
        ),
        ("expectation", Box::new(move |n, _d, b| bound_expectation(n, b, t, TheoremId::ThmD2, 1.0).unwrap().total)),
    ];
    for (name, f) in &calcs {
        for (i, &n) in ns.iter().enumerate() {
            for (j, &d) in deltas.iter().enumerate() {
                for (k, &b) in bs.iter().enumerate() {
                    let v = f(n, d, b);
                    if i + 1 < ns.len() {
                        le(&format!("{name} in n"), f(ns[i + 1], d, b), v);
                    }
                    if j + 1 < deltas.len() {
                        le(&format!("{name} in delta"), f(n, deltas[j + 1], b), v);
                    }
                    if k + 1 < bs.len() {
                        le(&format!("{name} in B"), v, f(n, d, bs[k + 1]));
                    }
                }
            }
        }
    }
    // remaining parameters along one-dimensional sweeps
    for s in 0..1000 {
        let x = s as f64 / 1000.0;
        let n = 500;
        le("strongly convex in B", bound_strongly_convex(n, 0.05, x, 1.0, 1.0, 0.5).unwrap().total, bound_strongly_convex(n, 0.05, x + 0.001, 1.0, 1.0, 0.5).unwrap().total);
        le("contractive in xi", bound_piecewise_contractive(n, 0.05, 1.0, 1.0, 1.0, 0.5, Some(t), 2.0, x).unwrap().total, bound_piecewise_contractive(n, 0.05, 1.0, 1.0, 1.0, 0.5, Some(t), 2.0, x + 0.001).unwrap().total);
        le("contractive in P", bound_piecewise_contractive(n, 0.05, 1.0, 1.0, 1.0, 0.5, Some(t), 1.0 + s as f64, 0.0).unwrap().total, bound_piecewise_contractive(n, 0.05, 1.0, 1.0, 1.0, 0.5, Some(t), 2.0 + s as f64, 0.0).unwrap().total);
        le("master in eps", bound_master_covering(n, 0.05, 1.0, 1.0, t, 10.0, x).unwrap().total, bound_master_covering(n, 0.05, 1.0, 1.0, t, 10.0, x + 0.001).unwrap().total);
        le("master in |Phi|", bound_master_covering(n, 0.05, 1.0, 1.0, t, 1.0 + s as f64, 0.0).unwrap().total, bound_master_covering(n, 0.05, 1.0, 1.0, t, 2.0 + s as f64, 0.0).unwrap().total);
        le("early in t", bound_early(n, 0.05, 1.0, s).unwrap().total, bound_early(n, 0.05, 1.0, s + 1).unwrap().total);
        le("fractal in d_H", bound_fractal(n, 0.05, 1.0, 1.0, 1.0, 0.5, 3.0 * x).unwrap().total, bound_fractal(n, 0.05, 1.0, 1.0, 1.0, 0.5, 3.0 * x + 0.003).unwrap().total);
    }
    check(bad.is_empty(), format!("20 reduction tuples agree; {checked} monotonicity comparisons, {} violated {:?}", bad.len(), bad.first()))
}

fn hoeffding_sanity() -> Outcome {
    let centers = vec![pt(&[1.0, 0.0]), pt(&[-1.0, 0.0]), pt(&[0.0, 0.5]), pt(&[0.3, -0.9])];
    let fam = losses::quadratic_centers(&centers, 1.0).map_err(e)?;
    let gen = SampleGenerator::Finite {
        support: centers.into_iter().map(Sample::Point).collect(),
    };
    let b = fam.constants().require("B").map_err(e)?;
    let eps: Vec<f64> = [0.05, 0.1, 0.2, 0.3].iter().map(|f| f * b).collect();
    let rep = hoeffding_check(&fam, &gen, &pt(&[0.2, 0.1]), &[10, 30, 100, 300], &eps, 10_000, 11).map_err(e)?;
    let worst = rep
        .cells
        .iter()
        .map(|c| c.rate - c.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    check(rep.pass && rep.cells.len() == 16, format!("16 cells, max(rate - bound) = {worst:.4}"))
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("contraction exactness", Duration::from_secs(1), contraction_exactness),
        ("cover soundness", Duration::from_secs(60), cover_soundness),
        ("certificate regression", Duration::from_secs(1), certificate_regression),
        ("bound validity", Duration::from_secs(300), bound_validity),
        ("piecewise approximation", Duration::from_secs(30), piecewise_approximation),
        ("EM equivalence", Duration::from_secs(30), em_equivalence),
        ("stability counterexample", Duration::from_secs(30), stability_counterexample),
        ("IFS dimension", Duration::from_secs(60), ifs_dimension_check),
        ("reduction and consistency", Duration::from_secs(10), reduction_suite),
        ("Hoeffding sanity", Duration::from_secs(60), hoeffding_sanity),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let (ok, detail) = match out {
            Ok(d) => (took <= budget, d),
            Err(d) => (false, d),
        };
        let status = if ok { "PASS" } else { "FAIL" };
        println!("{status} {:>2} {name}: {detail} [{:.2}s, budget {}s]", k + 1, took.as_secs_f64(), budget.as_secs());
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
