use super::*;
use crate::data::Sample;
use crate::domain::ConvexDomain;
use crate::losses::{quadratic_centers, sin_cos, stability_counterexample_1d};
use crate::sgd::sgd_step;

fn pt(v: &[f64]) -> ParamPoint {
    ParamPoint::new(v.to_vec()).unwrap()
}

fn centers(cs: &[&[f64]], radius: f64, eta: f64) -> (UpdateMap, Dataset) {
    let pts: Vec<ParamPoint> = cs.iter().map(|c| pt(c)).collect();
    let fam = quadratic_centers(&pts, radius).unwrap();
    let ds = Dataset::new(pts.into_iter().map(Sample::Point).collect()).unwrap();
    (UpdateMap::sgd(&fam, eta).unwrap(), ds)
}

#[test]
fn horizon_examples() {
    assert_eq!(cover_horizon(1.0, 1.0, 0.5).unwrap(), 0);
    assert_eq!(cover_horizon(1.0, 2.0, 0.5).unwrap(), 0);
    assert_eq!(cover_horizon(1.0, 0.01, 0.5).unwrap(), 7);
    assert_eq!(cover_horizon(1.0, 1.0 / 200.0, 0.5).unwrap(), 8);
    // exact power: log 8 / log 2 = 3 up to rounding
    assert_eq!(cover_horizon(1.0, 0.125, 0.5).unwrap(), 3);
    assert_eq!(cover_horizon(1.0, 0.1, 0.0).unwrap(), 1);
    assert!(cover_horizon(1.0, 0.1, 1.0).is_err());
    assert!(cover_horizon(1.0, 0.0, 0.5).is_err());
}

#[test]
fn enumeration_counts_and_order() {
    let (m, ds) = centers(&[&[0.5], &[-0.5]], 1.0, 0.5);
    let c = enumerate_cover(&m, &ds, 0, DEFAULT_CAP).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.point(0), &[0.0]);

    let c = enumerate_cover(&m, &ds, 2, DEFAULT_CAP).unwrap();
    assert_eq!(c.len(), 4);
    let seqs: Vec<Vec<usize>> = c.entries().map(|e| e.seq).collect();
    assert_eq!(seqs, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    // seq [0, 1]: 0 -> 0.25 -> 0.25/2 - 0.25 = -0.125
    assert_eq!(c.entry(1).point.coords(), &[-0.125]);
    assert_eq!(c.entry(1).deps, vec![0, 1]);
    assert_eq!(c.entry(3).deps, vec![1]);

    let (m, ds) = centers(&[&[0.5], &[-0.5], &[0.0]], 1.0, 0.5);
    assert_eq!(enumerate_cover(&m, &ds, 3, DEFAULT_CAP).unwrap().len(), 27);
    assert!(matches!(
        enumerate_cover(&m, &ds, 3, 26),
        Err(Error::CapExceeded { required: 27, cap: 26 })
    ));
}

#[test]
fn entries_replay_from_anchor() {
    let (m, ds) = centers(&[&[0.5, 0.1], &[-0.5, 0.3], &[0.0, -0.6]], 1.0, 0.3);
    let c = enumerate_cover(&m, &ds, 3, DEFAULT_CAP).unwrap();
    for e in c.entries() {
        let mut x = c.anchor.clone();
        for &i in &e.seq {
            x = sgd_step(&m, &x, i, &ds).unwrap();
        }
        assert_eq!(x, e.point);
        assert!(e.deps.len() <= c.horizon);
    }
}

#[test]
fn dependency_sets_are_exact() {
    let base: Vec<&[f64]> = vec![&[0.5, 0.1], &[-0.5, 0.3], &[0.0, -0.6], &[0.2, 0.2]];
    let (m, ds) = centers(&base, 1.0, 0.4);
    let c = enumerate_cover(&m, &ds, 2, DEFAULT_CAP).unwrap();
    for k in 0..ds.len() {
        let mut perturbed = ds.clone();
        perturbed.samples[k] = Sample::Point(pt(&[-0.9, 0.1]));
        let c2 = enumerate_cover(&m, &perturbed, 2, DEFAULT_CAP).unwrap();
        for (a, b) in c.entries().zip(c2.entries()) {
            if !a.deps.contains(&k) {
                assert_eq!(a.point, b.point);
            }
        }
    }
}

#[test]
fn verification_passes_and_negative_control_fails() {
    let (m, ds) = centers(&[&[0.5], &[-0.5], &[0.1]], 1.0, 0.5);
    let eps = 1.0 / (2.0 * 1.0 * 3.0);
    let t = cover_horizon(1.0, eps, 0.5).unwrap();
    let c = enumerate_cover(&m, &ds, t, DEFAULT_CAP).unwrap();
    let cfg = VerifyConfig {
        trials: 2000,
        max_extra_steps: 20,
        epsilon: eps,
        seed: 3,
    };
    let rep = verify_cover(&c, &m, &ds, &cfg).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.max_distance <= eps);

    let tight = VerifyConfig {
        epsilon: eps / 100.0,
        ..cfg
    };
    assert!(!verify_cover(&c, &m, &ds, &tight).unwrap().pass);
}

#[test]
fn jsonl_has_header_and_canonical_entries() {
    let (m, ds) = centers(&[&[0.5], &[-0.5]], 1.0, 0.5);
    let c = enumerate_cover(&m, &ds, 2, DEFAULT_CAP).unwrap().with_epsilon(0.25);
    let mut buf = Vec::new();
    c.write_jsonl(&mut buf, &serde_json::json!({"seed": 1})).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    let head: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(head["meta"]["seed"], 1);
    assert_eq!(head["meta"]["entries"], 4);
    let e: CoverEntry = serde_json::from_str(lines[2]).unwrap();
    assert_eq!(e.seq, vec![0, 1]);
    assert!(!lines[2].contains("pieces"));
}

#[test]
fn dedup_keeps_first_of_coalesced_points() {
    // eta = 1 jumps straight to the center, so only the last index matters
    let (m, ds) = centers(&[&[0.5], &[-0.5]], 1.0, 1.0);
    let c = enumerate_cover(&m, &ds, 2, DEFAULT_CAP).unwrap().dedup();
    assert!(c.deduplicated());
    assert_eq!(c.len(), 2);
    let seqs: Vec<Vec<usize>> = c.entries().map(|e| e.seq).collect();
    assert_eq!(seqs, vec![vec![0, 0], vec![0, 1]]);
}

#[test]
fn piecewise_examples() {
    let fam = quadratic_centers(&[pt(&[0.3])], 1.0).unwrap();
    let approx = build_piecewise_approx(&fam, 6.0, (1.0, 1.0), ApproxOptions::default()).unwrap();
    assert_eq!(approx.piece_count(), 1);
    assert!((approx.piece_bound - 1.0).abs() < 1e-12);
    let z = Sample::Point(pt(&[0.3]));
    for x in [-0.9, -0.2, 0.4, 1.0] {
        let g = fam.gradient(&pt(&[x]), &z).unwrap();
        assert_eq!(approx.gradient(&[x], &z).unwrap(), g.coords());
    }
}

#[test]
fn piecewise_reduces_to_plain_cover() {
    let pts = [pt(&[0.5, 0.1]), pt(&[-0.5, 0.3])];
    let fam = quadratic_centers(&pts, 1.0).unwrap();
    let ds = Dataset::new(pts.iter().cloned().map(Sample::Point).collect()).unwrap();
    let m = UpdateMap::sgd(&fam, 0.3).unwrap();
    let approx = build_piecewise_approx(&fam, 10.0, (1.0, 1.0), ApproxOptions::default()).unwrap();
    assert_eq!(approx.piece_count(), 1);
    let plain = enumerate_cover(&m, &ds, 3, DEFAULT_CAP).unwrap();
    let pw = enumerate_piecewise_cover(&approx, &m, &ds, 3, DEFAULT_CAP).unwrap();
    assert_eq!(plain.len(), pw.len());
    for k in 0..plain.len() {
        assert_eq!(plain.point(k), pw.point(k));
    }
}

#[test]
fn piecewise_counts_and_affine_oracle() {
    let fam = stability_counterexample_1d();
    let approx = build_piecewise_approx(&fam, 4.0, (2.0, 2.0), ApproxOptions::default()).unwrap();
    // spacing 2, lattice {0, 2, 4} on [0, 4]
    assert_eq!(approx.anchors().len(), 3);
    let p = approx.piece_count();
    assert_eq!(p, 6);
    let ds = Dataset::new(vec![Sample::Scalar(0.0), Sample::Scalar(1.0)]).unwrap();
    let mut m = UpdateMap::sgd(&fam, 0.2).unwrap();
    m.project = false;
    m.enforce_domain = false;
    m.domain = ConvexDomain::whole_space(1);
    let c = enumerate_piecewise_cover(&approx, &m, &ds, 2, DEFAULT_CAP).unwrap();
    assert_eq!(c.len(), (2 * p) * (2 * p));

    // each surrogate step is x -> (1 - eta beta) x - eta (g0 - beta phi)
    let eta = 0.2;
    for e in c.entries() {
        let mut b = 0.0;
        for (&i, &piece) in e.seq.iter().zip(e.pieces.as_ref().unwrap()) {
            let h = approx.piece(piece, &ds.samples[i]).unwrap();
            let shift = -eta * (h.gradient.coords()[0] - h.curvature * h.anchor.coords()[0]);
            b = (1.0 - eta * h.curvature) * b + shift;
        }
        assert!((e.point.coords()[0] - b).abs() < 1e-12);
    }

    let (m2, ds2) = centers(&[&[0.5], &[-0.5]], 1.0, 0.5);
    let fam2 = m2.family().unwrap().clone();
    let a2 = build_piecewise_approx(&fam2, 1.2, (1.0, 1.0), ApproxOptions::default()).unwrap();
    // lattice {-1.2, 0, 1.2}, the outer anchors projected to +-1
    assert_eq!(a2.piece_count(), 3);
    assert_eq!(enumerate_piecewise_cover(&a2, &m2, &ds2, 2, DEFAULT_CAP).unwrap().len(), 36);
    assert!(enumerate_piecewise_cover(&a2, &m2, &ds2, 2, 35).is_err());

    // two smooth pieces, one anchor: P = 2
    let hk = crate::losses::hard_kmeans(2, 1.0, 1, "lowest_index").unwrap();
    let a3 = build_piecewise_approx(&hk, 100.0, (2.0, 2.0), ApproxOptions::default()).unwrap();
    assert_eq!(a3.piece_count(), 2);
    let m3 = UpdateMap::sgd(&hk, 0.1).unwrap();
    assert_eq!(enumerate_piecewise_cover(&a3, &m3, &ds2, 2, DEFAULT_CAP).unwrap().len(), 16);
}

#[test]
fn sin_cos_gradient_error_on_grid() {
    let fam = sin_cos(1.0).unwrap();
    let approx = build_piecewise_approx(&fam, 0.5, (1.0, 1.0), ApproxOptions::default()).unwrap();
    assert!(approx.within_bound());
    let grid: Vec<ParamPoint> = (0..200)
        .flat_map(|i| (0..200).map(move |j| (i, j)))
        .map(|(i, j)| pt(&[-1.0 + 2.0 * i as f64 / 199.0, -1.0 + 2.0 * j as f64 / 199.0]))
        .filter(|p| p.norm() <= 1.0)
        .collect();
    let err = approx.max_gradient_error(&grid, &Sample::Scalar(0.0)).unwrap();
    assert!(err <= 0.5, "{err}");
}

#[test]
fn piecewise_cover_verification() {
    let fam = stability_counterexample_1d();
    let xi = 1.0;
    let approx = build_piecewise_approx(&fam, xi, (2.0, 2.0), ApproxOptions::default()).unwrap();
    let ds = Dataset::new(vec![Sample::Scalar(0.0), Sample::Scalar(1.0)]).unwrap();
    let eta = 0.25;
    let m = UpdateMap::sgd(&fam, eta).unwrap();
    let gamma = (1.0 - 2.0 * 2.0 * eta + 2.0 * 2.0 * eta * eta).sqrt();
    let t = 3;
    let eps = gamma.powi(t) * 4.0 + (1.0 - gamma.powi(t)) / (1.0 - gamma) * eta * xi;
    let c = enumerate_piecewise_cover(&approx, &m, &ds, t as usize, DEFAULT_CAP).unwrap();
    let cfg = VerifyConfig {
        trials: 500,
        max_extra_steps: 10,
        epsilon: eps,
        seed: 9,
    };
    let rep = verify_piecewise_cover(&c, &approx, &m, &ds, &cfg).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn ifs_examples() {
    let one = IfsModel::quadratic(&[pt(&[0.3])], 0.5, 1.0).unwrap();
    assert_eq!(ifs_dimension(&one).d_h, 0.0);

    let cantor = IfsModel::quadratic(&[pt(&[-1.0]), pt(&[1.0])], 2.0 / 3.0, 1.0).unwrap();
    let dim = ifs_dimension(&cantor);
    assert!((dim.d_h - 0.630_929_753_6).abs() < 1e-9);
    assert!(dim.separated);
    assert!(cantor.maps_ball_into_itself());

    let half = IfsModel::quadratic(&[pt(&[-1.0]), pt(&[1.0])], 0.5, 1.0).unwrap();
    assert!((ifs_dimension(&half).d_h - 1.0).abs() < 1e-12);
}

#[test]
fn fixed_point_criterion_can_miss_overlap() {
    // gamma = eta = 1/2, fixed points 1 apart = 2 gamma R, but the images
    // (centers +-1/4, radius 1/2) overlap
    let m = IfsModel::quadratic(&[pt(&[-0.5]), pt(&[0.5])], 0.5, 1.0).unwrap();
    let d = ifs_dimension(&m);
    assert!(d.fixed_point_criterion);
    assert!(!d.separated);
    assert!(d.warning.is_some());
}

#[test]
fn box_counting_examples() {
    let scales = [0.1, 0.03, 0.01, 0.003, 0.001];
    let line: Vec<ParamPoint> = (0..20_000)
        .map(|k| {
            let s = k as f64 / 19_999.0;
            pt(&[s, 0.5 * s])
        })
        .collect();
    let est = box_counting_dimension(&line, &scales).unwrap();
    assert!((est - 1.0).abs() <= 0.1, "{est}");

    let same = vec![pt(&[0.2, 0.2]); 1000];
    assert_eq!(box_counting_dimension(&same, &scales).unwrap(), 0.0);

    let cantor = IfsModel::quadratic(&[pt(&[-1.0]), pt(&[1.0])], 2.0 / 3.0, 1.0).unwrap();
    let orbit = cantor.orbit(200_000, 100, 1);
    let s: Vec<f64> = (1..=6).map(|k| 2.0 / 3f64.powi(k)).collect();
    let est = box_counting_dimension(&orbit, &s).unwrap();
    assert!((est - 0.6309).abs() <= 0.05, "{est}");

    assert!(box_counting_dimension(&line, &[0.1, 0.05, 0.02, 0.01]).is_err());
    assert!(box_counting_dimension(&line[..10], &scales).is_err());
}
