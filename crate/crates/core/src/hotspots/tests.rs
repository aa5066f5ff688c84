use super::*;

fn regression_setup() -> ProblemSetup {
    let g = BumpSum::new(
        2,
        vec![
            Bump::new(vec![0.0, 0.0], 0.5, 1.0),
            Bump::new(vec![0.8, 0.3], 0.4, 0.6),
        ],
    )
    .unwrap();
    let f = BumpSum::new(2, vec![Bump::new(vec![0.3, -0.2], 0.3, 0.5)]).unwrap();
    ProblemSetup::new(f, g).unwrap()
}

fn single_bump(n: usize, center: &[f64], as_velocity: bool) -> ProblemSetup {
    let b = BumpSum::new(n, vec![Bump::new(center.to_vec(), 0.5, 1.0)]).unwrap();
    if as_velocity {
        ProblemSetup::new(BumpSum::zero(n), b).unwrap()
    } else {
        ProblemSetup::new(b, BumpSum::zero(n)).unwrap()
    }
}

#[test]
fn s_star_is_the_critical_point() {
    let s = s_star();
    assert!(2.0 < s && s < 3.0);
    assert!((s - 2.39936).abs() < 1e-4);
    // d/ds [cosh(s/2)/s] = (s/2 sinh(s/2) − cosh(s/2))/s²
    let d = (0.5 * s * (0.5 * s).sinh() - (0.5 * s).cosh()) / (s * s);
    assert!(d.abs() < 1e-10);
}

#[test]
fn symmetric_bump_peaks_at_center() {
    let e = Engine::standard();
    for (n, t) in [(1, 0.7), (1, 30.0), (3, 15.0), (2, 40.0)] {
        let c: Vec<f64> = [0.2, -0.1, 0.3][..n].to_vec();
        let s = single_bump(n, &c, true);
        let set = find_hotspots(e, &s, t, &SearchParams::default()).unwrap();
        assert_eq!(set.points.len(), 1, "n={n} t={t}: {:?}", set.points);
        let d = distance(&set.points[0], &c);
        assert!(d < set.cluster_tol, "n={n} t={t}: {d}");
    }
}

#[test]
fn initial_hot_spot_is_the_bump_center() {
    let e = Engine::standard();
    let s = single_bump(2, &[0.4, -0.3], false);
    let set = find_hotspots(e, &s, 0.0, &SearchParams::default()).unwrap();
    assert_eq!(set.points.len(), 1);
    assert!(distance(&set.points[0], &[0.4, -0.3]) < 1e-6);
    assert!((set.value - s.f.eval(&[0.4, -0.3])).abs() < 1e-12);
}

#[test]
fn large_time_hot_spot_is_contained_and_unique() {
    let e = Engine::standard();
    let s = regression_setup();
    let set = find_hotspots(e, &s, 200.0, &SearchParams::default()).unwrap();
    assert_eq!(set.points.len(), 1);
    let p = &set.points[0];
    assert!(distance(p, &s.m_h) < s.d_h);
    assert!(s.hull_h.contains(p));
    // First-order condition and common value.
    assert!(set.gradient_norms[0] <= set.refine_tol);
    let v = e.solve_u(&s, p, 200.0).unwrap();
    assert!((v - set.value).abs() <= 1e-8 * (1.0 + set.value.abs()));
}

#[test]
fn refined_points_satisfy_set_invariants() {
    let e = Engine::standard();
    let s = regression_setup();
    for t in [0.5, 3.0] {
        let set = find_hotspots(e, &s, t, &SearchParams::default()).unwrap();
        assert!(!set.points.is_empty());
        for (i, p) in set.points.iter().enumerate() {
            let v = e.solve_u(&s, p, t).unwrap();
            assert!((v - set.value).abs() <= 1e-8 * (1.0 + set.value.abs()));
            for q in &set.points[i + 1..] {
                assert!(distance(p, q) >= set.cluster_tol);
            }
        }
    }
}

#[test]
fn grid_refinement_does_not_move_hot_spots() {
    let e = Engine::standard();
    let f = BumpSum::new(1, vec![Bump::new(vec![0.3], 0.3, 0.5)]).unwrap();
    let g = BumpSum::new(
        1,
        vec![
            Bump::new(vec![0.0], 0.5, 1.0),
            Bump::new(vec![0.8], 0.4, 0.6),
        ],
    )
    .unwrap();
    let s1 = ProblemSetup::new(f, g).unwrap();
    for t in [1.0, 10.0, 100.0] {
        let coarse = SearchParams {
            coarse_resolution: Some(201),
            ..Default::default()
        };
        let fine = SearchParams {
            coarse_resolution: Some(401),
            ..Default::default()
        };
        let a = find_hotspots(e, &s1, t, &coarse).unwrap();
        let b = find_hotspots(e, &s1, t, &fine).unwrap();
        assert_eq!(a.points.len(), b.points.len(), "t={t}");
        for p in &a.points {
            let d = b
                .points
                .iter()
                .map(|q| distance(p, q))
                .fold(f64::INFINITY, f64::min);
            assert!(d < a.cluster_tol, "t={t}: {d}");
        }
    }
}

#[test]
fn one_dimensional_escape_then_return() {
    let e = Engine::standard();
    let eps = 0.02;
    let s = EscapeExample::Ex1d.setup(eps).unwrap();
    let times = vec![0.08, 0.15, 0.3, 0.6, 1.2, 2.5, 5.0, 10.0, 20.0];
    let recs = track(
        e,
        &s,
        &Schedule::new(times).unwrap(),
        &TrackOptions::default(),
    )
    .unwrap();
    let flags: Vec<bool> = recs.iter().map(|r| r.inside_hull).collect();
    assert!(!flags[0], "{flags:?}");
    assert!(*flags.last().unwrap(), "{flags:?}");
    let flips = flags.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(flips, 1, "{flags:?}");
}

#[test]
fn escape_examples_are_confirmed() {
    let e = Engine::standard();
    for ex in EscapeExample::ALL {
        let r = escape_experiment(e, ex, None, None).unwrap();
        assert!(r.escape_confirmed, "{ex:?}: {r:?}");
        assert_eq!(EscapeExample::parse(ex.name()), Some(ex));
    }
    let r = escape_experiment(e, EscapeExample::Ex2dCritical, None, None).unwrap();
    assert!(r.rings.len() >= 4);
    for ring in &r.rings {
        assert!(ring.ring_radius > ring.inner_radius);
        assert!(ring.pushed_value > ring.inner_value);
    }
}

#[test]
fn escape_preconditions_are_enforced() {
    let e = Engine::standard();
    let bad = [
        (EscapeExample::Ex1d, Some(0.02), Some(0.05)),
        (EscapeExample::Ex3d, Some(0.02), Some(0.03)),
        (EscapeExample::Ex2dSmallSupport, Some(1.5), None),
        (EscapeExample::Ex2dSmallSupport, Some(0.5), Some(2.6)),
        (EscapeExample::Ex2dCritical, Some(1.3), None),
        (EscapeExample::Ex2dCritical, Some(0.25), Some(2.0)),
        (EscapeExample::Ex1d, Some(-1.0), None),
    ];
    for (ex, eps, t) in bad {
        assert!(
            matches!(escape_experiment(e, ex, eps, t), Err(Error::Invalid { .. })),
            "{ex:?} {eps:?} {t:?}"
        );
    }
}

#[test]
fn schedule_validation() {
    assert!(Schedule::new(vec![]).is_err());
    assert!(Schedule::new(vec![1.0, -2.0]).is_err());
    let s = Schedule::new(vec![5.0, 1.0]).unwrap();
    assert_eq!(s.times, vec![1.0, 5.0]);
    let mut bad = s.clone();
    bad.psi_exponent = 0.6;
    assert!(bad.validate().is_err());
    let r = Schedule::log_range(10.0, 160.0, 8).unwrap();
    assert_eq!(r.times.len(), 8);
    assert_eq!(r.times[0], 10.0);
    assert_eq!(r.times[7], 160.0);
    let json = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<Schedule>(&json).unwrap(), r);
    assert!(serde_json::from_str::<Schedule>(r#"{"times":[1.0],"extra":1}"#).is_err());
}

#[test]
fn concavity_and_floor_at_large_time() {
    let e = Engine::standard();
    let s = regression_setup();
    let probes = hull_probes(&s.hull_h, 4);
    let dirs = probe_directions(2);
    assert!(!probes.is_empty());
    let m = concavity_check(e, &s, 100.0, &probes, &dirs).unwrap();
    assert!(m < 0.0);
    assert!(concavity_check(e, &s, 100.0, &[vec![5.0, 5.0]], &dirs).is_err());
    let mut last = None;
    for t in [50.0, 100.0] {
        let r = floor_check(e, &s, t, 2.0 / 3.0).unwrap();
        assert!(r.min_inside > 0.0 && r.scaled_floor > 0.0);
        assert!(r.outside_below_floor, "{r:?}");
        if let Some(prev) = last {
            let ratio: f64 = r.scaled_floor / prev;
            assert!(ratio > 0.5 && ratio < 2.0);
        }
        last = Some(r.scaled_floor);
    }
}

#[test]
fn symmetric_floor_sits_on_boundary() {
    let e = Engine::standard();
    let s = single_bump(2, &[0.0, 0.0], true);
    let r = floor_check(e, &s, 60.0, 2.0 / 3.0).unwrap();
    assert!(r.argmin_on_boundary, "{r:?}");
}
