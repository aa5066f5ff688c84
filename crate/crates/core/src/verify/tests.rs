use super::*;
use crate::initdata::Bump;

fn setup_1d() -> ProblemSetup {
    let f = BumpSum::new(1, vec![Bump::new(vec![0.3], 0.5, 0.8)]).unwrap();
    let g = BumpSum::new(
        1,
        vec![
            Bump::new(vec![0.0], 0.5, 1.0),
            Bump::new(vec![0.9], 0.3, 0.5),
        ],
    )
    .unwrap();
    ProblemSetup::new(f, g).unwrap()
}

fn setup_2d() -> ProblemSetup {
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

fn setup_3d() -> ProblemSetup {
    let g = BumpSum::new(3, vec![Bump::new(vec![0.0, 0.1, 0.0], 0.5, 1.0)]).unwrap();
    let f = BumpSum::new(3, vec![Bump::new(vec![0.2, 0.0, -0.1], 0.4, 0.7)]).unwrap();
    ProblemSetup::new(f, g).unwrap()
}

#[test]
fn config_enforces_stability_and_dimension() {
    let s = setup_1d();
    let mut cfg = FDConfig::for_setup(&s, 0.01, 1.0).unwrap();
    assert!(cfg.dt <= CFL * cfg.dx);
    assert!(((cfg.t_final / cfg.dt).round() * cfg.dt - 1.0).abs() < 1e-12);
    cfg.dt = cfg.dx;
    assert!(matches!(fd_solve(&s, &cfg, 1), Err(Error::Invalid { .. })));
    assert!(FDConfig::for_setup(&setup_3d(), 0.01, 1.0).is_err());
    let cfg2 = FDConfig::for_setup(&setup_2d(), 0.02, 1.0).unwrap();
    assert!(cfg2.dt <= CFL * cfg2.dx / 2f64.sqrt());
}

#[test]
fn boundary_touch_aborts() {
    let s = setup_1d();
    let mut cfg = FDConfig::for_setup(&s, 0.01, 1.0).unwrap();
    cfg.domain = AxisBox {
        lo: vec![-0.8],
        hi: vec![1.5],
    };
    assert!(matches!(
        fd_solve(&s, &cfg, 1),
        Err(Error::Tolerance { .. })
    ));
}

#[test]
fn initial_snapshot_is_the_displacement() {
    let s = setup_1d();
    let cfg = FDConfig::for_setup(&s, 0.01, 0.5).unwrap();
    let sol = fd_solve(&s, &cfg, 10).unwrap();
    assert_eq!(sol.times[0], 0.0);
    assert!((sol.times.last().unwrap() - 0.5).abs() < 1e-12);
    for x in [-0.1, 0.3, 0.55] {
        assert!((sol.interpolate(0, &[x]).unwrap() - s.f.eval(&[x])).abs() < 1e-3);
    }
    assert!(sol.interpolate(0, &[1e3]).is_err());
}

#[test]
fn one_dimensional_oracle_agrees() {
    let e = Engine::standard();
    let s = setup_1d();
    let probes = probe_points(&s, 2.0, 60, 7);
    let err = compare_oracle(e, &s, 2.0, 1.0 / 400.0, &probes).unwrap();
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn two_dimensional_oracle_agrees() {
    let e = Engine::standard();
    let s = setup_2d();
    let probes = probe_points(&s, 1.5, 50, 11);
    let err = compare_oracle(e, &s, 1.5, 1.0 / 150.0, &probes).unwrap();
    assert!(err <= 5e-3, "{err}");
}

#[test]
fn finite_differences_converge_at_second_order() {
    let e = Engine::standard();
    // Broad bumps keep the data derivatives moderate on these grids.
    let f = BumpSum::new(1, vec![Bump::new(vec![0.0], 1.5, 1.0)]).unwrap();
    let g = BumpSum::new(1, vec![Bump::new(vec![0.3], 1.2, 1.0)]).unwrap();
    let s = ProblemSetup::new(f, g).unwrap();
    let probes = probe_points(&s, 1.0, 40, 3);
    let errs: Vec<f64> = [0.005, 0.0025, 0.00125]
        .iter()
        .map(|&dx| compare_oracle(e, &s, 1.0, dx, &probes).unwrap())
        .collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.4..=4.6).contains(&r), "{errs:?}");
    }
}

#[test]
fn pde_residual_is_small_and_second_order() {
    let e = Engine::standard();
    for (s, x, t) in [
        (setup_1d(), vec![0.4], 1.3),
        (setup_2d(), vec![0.2, 0.1], 0.9),
        (setup_3d(), vec![0.3, -0.2, 0.4], 1.1),
    ] {
        let r1 = pde_residual(e, &s, &x, t, 1e-2).unwrap();
        let r2 = pde_residual(e, &s, &x, t, 5e-3).unwrap();
        let r3 = pde_residual(e, &s, &x, t, 1e-3).unwrap();
        assert!(r3.abs() <= 1e-3, "n={} {r3}", x.len());
        let ratio = r1 / r2;
        assert!((3.4..=4.6).contains(&ratio), "n={} {r1} {r2}", x.len());
    }
    assert!(pde_residual(e, &setup_1d(), &[0.0], 1e-3, 1e-3).is_err());
}

#[test]
fn log_log_fit_recovers_power_laws() {
    let times: Vec<f64> = (0..6).map(|k| 10.0 * 2f64.powi(k)).collect();
    let values: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(-1.5)).collect();
    let (slope, intercept, res) = fit_log_log(&times, &values).unwrap();
    assert!((slope + 1.5).abs() < 1e-12);
    assert!((intercept - 3f64.ln()).abs() < 1e-12);
    assert!(res < 1e-12);
    assert!(fit_log_log(&times[..3], &values[..3]).is_err());
    assert!(fit_log_log(&[10.0, 12.0, 14.0, 16.0], &[1.0, 0.9, 0.8, 0.7]).is_err());
}

#[test]
fn decay_quantity_names_round_trip() {
    for q in DecayQuantity::ALL {
        assert_eq!(DecayQuantity::parse(q.name()), Some(q));
    }
    assert_eq!(DecayQuantity::HeatPart.target_slope(2), -1.0);
    assert_eq!(DecayQuantity::FullDifference.target_slope(3), -2.5);
}

#[test]
fn one_dimensional_decay_rates() {
    let e = Engine::standard();
    let s = setup_1d();
    let times: Vec<f64> = (0..8).map(|k| 10.0 * 16f64.powf(k as f64 / 7.0)).collect();
    for q in DecayQuantity::ALL {
        let fit = decay_fit(e, &s, q, &times, 2.0 / 3.0).unwrap();
        assert!(
            (fit.slope - fit.target_slope).abs() <= 0.2,
            "{}: {} vs {}",
            fit.quantity,
            fit.slope,
            fit.target_slope
        );
        assert!(fit
            .exterior_bounds
            .iter()
            .zip(&fit.values)
            .all(|(b, v)| b < v));
    }
}
