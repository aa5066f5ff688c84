use super::*;
use crate::initdata::Bump;
use proptest::prelude::*;

fn padded(v: &[f64], n: usize) -> Vec<f64> {
    v[..n].to_vec()
}

/// Two bumps of `g` and one of `f`, none centered at the origin.
fn setup_in(n: usize) -> ProblemSetup {
    let g = BumpSum::new(
        n,
        vec![
            Bump::new(padded(&[0.0, 0.0, 0.1], n), 0.5, 1.0),
            Bump::new(padded(&[0.8, 0.3, -0.2], n), 0.4, 0.6),
        ],
    )
    .unwrap();
    let f = BumpSum::new(n, vec![Bump::new(padded(&[0.3, -0.2, 0.15], n), 0.3, 0.5)]).unwrap();
    ProblemSetup::new(f, g).unwrap()
}

fn probe(n: usize) -> Vec<f64> {
    padded(&[0.35, -0.1, 0.05], n)
}

fn shifted(x: &[f64], dir: &[f64], step: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, d)| a + step * d).collect()
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[k] = 1.0;
    e
}

/// Central difference of `f` along `dir`.
fn central(f: impl Fn(&[f64]) -> f64, x: &[f64], dir: &[f64], step: f64) -> f64 {
    (f(&shifted(x, dir, step)) - f(&shifted(x, dir, -step))) / (2.0 * step)
}

fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| central(&f, x, &unit(x.len(), k), step))
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn diagonal(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

#[test]
fn fused_solution_matches_parts() {
    let e = Engine::standard();
    for n in 1..=3 {
        let s = setup_in(n);
        let x = probe(n);
        for t in [0.2, 1.0, 5.0, 40.0] {
            let (v, g) = e.value_grad_u(&s, &x, t).unwrap();
            let v_parts = e.solve_u_by_parts(&s, &x, t).unwrap();
            let g_parts = e.grad_u_by_parts(&s, &x, t).unwrap();
            assert!((v - v_parts).abs() < 1e-11, "n={n} t={t}");
            assert!(max_diff(&g, &g_parts) < 1e-8, "n={n} t={t}");
            assert_eq!(v, e.solve_u(&s, &x, t).unwrap());
        }
    }
}

#[test]
fn default_rule_is_converged() {
    let coarse = Engine::standard();
    let fine = Engine::new(EngineRule::default().refined());
    for n in 1..=3 {
        let s = setup_in(n);
        for t in [0.3, 2.0, 30.0] {
            for x in [probe(n), padded(&[1.5, -0.7, 0.2], n)] {
                let a = coarse.solve_u(&s, &x, t).unwrap();
                let b = fine.solve_u(&s, &x, t).unwrap();
                assert!((a - b).abs() < 1e-10, "n={n} t={t} x={x:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn split_matches_direct_solution() {
    let e = Engine::standard();
    for n in 1..=3 {
        let s = setup_in(n);
        for t in [0.5, 3.0, 20.0] {
            for x in [probe(n), padded(&[-0.6, 0.9, 0.0], n)] {
                let split = e.split_solution_s(&s.h, &x, t).unwrap();
                let direct = e.solution_s(&s.h, &x, t).unwrap();
                assert!(
                    (split - direct).abs() < 1e-8,
                    "n={n} t={t}: {split} vs {direct}"
                );
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let e = Engine::standard();
    let step = 1e-6;
    for n in 1..=3 {
        let s = setup_in(n);
        for t in [0.4, 1.3, 6.0] {
            let x = probe(n);
            let fd = fd_grad(|y| e.solve_u(&s, y, t).unwrap(), &x, step);
            assert!(
                max_diff(&e.grad_u(&s, &x, t).unwrap(), &fd) < 1e-7,
                "u n={n} t={t}"
            );
            let fd = fd_grad(|y| e.heat_part_j(&s.h, y, t).unwrap(), &x, step);
            assert!(
                max_diff(&e.grad_j(&s.h, &x, t).unwrap(), &fd) < 1e-7,
                "J n={n} t={t}"
            );
            let fd = fd_grad(|y| e.tilde_j(&s.f, y, t).unwrap(), &x, step);
            let g = e.grad_tilde_j(&s.f, &x, t).unwrap();
            assert!(max_diff(&g, &fd) < 1e-7, "tilde J n={n} t={t}");
            let fd = fd_grad(|y| e.heat(&s.h, y, t).unwrap(), &x, step);
            assert!(
                max_diff(&e.grad_heat(&s.h, &x, t).unwrap(), &fd) < 1e-7,
                "P n={n} t={t}"
            );
        }
    }
}

#[test]
fn second_derivatives_match_finite_differences() {
    let e = Engine::standard();
    let step = 1e-5;
    for n in 1..=3 {
        let s = setup_in(n);
        let omega = diagonal(n);
        for t in [0.4, 1.3, 6.0] {
            let x = probe(n);
            let fd = central(
                |y| dot(&e.grad_j(&s.h, y, t).unwrap(), &omega),
                &x,
                &omega,
                step,
            );
            let v = e.second_dir_j(&s.h, &x, t, &omega).unwrap();
            assert!((v - fd).abs() < 1e-6, "J n={n} t={t}: {v} vs {fd}");
            let fd = central(
                |y| dot(&e.grad_tilde_j(&s.f, y, t).unwrap(), &omega),
                &x,
                &omega,
                step,
            );
            let v = e.second_dir_tilde_j(&s.f, &x, t, &omega).unwrap();
            assert!((v - fd).abs() < 1e-6, "tilde J n={n} t={t}: {v} vs {fd}");
            let fd = central(
                |y| dot(&e.grad_u(&s, y, t).unwrap(), &omega),
                &x,
                &omega,
                step,
            );
            let v = e.second_dir_u(&s, &x, t, &omega).unwrap();
            assert!((v - fd).abs() < 1e-5, "u n={n} t={t}: {v} vs {fd}");
        }
    }
}

/// In 1D the rim term of `∂²J_1 h` is `t e^{-t/2}/16 · (h(x+t) + h(x−t))`;
/// twice that coefficient is visibly wrong.
#[test]
fn one_dimensional_rim_coefficient() {
    let e = Engine::standard();
    let s = setup_in(1);
    let (x, t, step) = ([0.1], 0.7, 1e-5);
    let omega = [1.0];
    let fd = central(|y| e.grad_j(&s.h, y, t).unwrap()[0], &x, &omega, step);
    let v = e.second_dir_j(&s.h, &x, t, &omega).unwrap();
    let rim = t * (-0.5 * t).exp() / 16.0 * (s.h.eval(&[x[0] + t]) + s.h.eval(&[x[0] - t]));
    assert!(rim.abs() > 1e-3);
    assert!((v - fd).abs() < 1e-7, "{v} vs {fd}");
    assert!((v + rim - fd).abs() > 100.0 * (v - fd).abs().max(1e-9));
}

/// The centroid-seeking moment form of `∇J_n` is exact for odd `n` away
/// from the rim, but for even `n` it misses the unit-ball term.
#[test]
fn moment_form_of_grad_j() {
    let e = Engine::standard();
    let step = 1e-5;
    for n in 1..=3 {
        let s = setup_in(n);
        let x = padded(&[0.1, 0.05, 0.0], n);
        let t = 5.0;
        assert!(Engine::sphere_misses(&s.h, &x, t));
        let fd = fd_grad(|y| e.heat_part_j(&s.h, y, t).unwrap(), &x, step);
        let moment = e.grad_j_moment_form(&s.h, &x, t).unwrap();
        if n % 2 == 1 {
            assert!(max_diff(&moment, &fd) < 1e-7, "n={n}");
        } else {
            assert!(max_diff(&moment, &fd) > 0.1 * fd[0].abs(), "n={n}");
            assert!(max_diff(&e.grad_j(&s.h, &x, t).unwrap(), &fd) < 1e-7);
        }
    }
}

#[test]
fn time_derivative_of_solution_operator() {
    let e = Engine::standard();
    let step = 1e-5;
    for n in 1..=3 {
        let s = setup_in(n);
        let x = probe(n);
        for t in [0.6, 2.5, 9.0] {
            let fd = (e.split_solution_s(&s.f, &x, t + step).unwrap()
                - e.split_solution_s(&s.f, &x, t - step).unwrap())
                / (2.0 * step);
            let v = e.dt_solution_s(&s.f, &x, t).unwrap();
            assert!((v - fd).abs() < 1e-7, "n={n} t={t}: {v} vs {fd}");
        }
    }
}

#[test]
fn initial_values_are_recovered() {
    let e = Engine::standard();
    for n in 1..=3 {
        let s = setup_in(n);
        let x = probe(n);
        assert_eq!(e.solve_u(&s, &x, 0.0).unwrap(), s.f.eval(&x));
        assert_eq!(e.grad_u(&s, &x, 0.0).unwrap(), s.f.grad(&x));
        let tiny = e.solve_u(&s, &x, 1e-4).unwrap();
        assert!((tiny - s.f.eval(&x)).abs() < 1e-3, "n={n}");
        let dt = (e.solve_u(&s, &x, 2e-4).unwrap() - tiny) / 1e-4;
        assert!((dt - s.g.eval(&x)).abs() < 1e-2, "n={n}: {dt}");
    }
}

#[test]
fn zero_displacement_gives_solution_operator() {
    let e = Engine::standard();
    for n in 1..=3 {
        let g = setup_in(n).g;
        let s = ProblemSetup::new(BumpSum::zero(n), g.clone()).unwrap();
        let x = probe(n);
        for t in [0.5, 4.0] {
            let u = e.solve_u(&s, &x, t).unwrap();
            let sg = e.split_solution_s(&g, &x, t).unwrap();
            assert!((u - sg).abs() < 1e-12, "n={n}");
        }
    }
}

#[test]
fn solution_vanishes_outside_light_cone() {
    let e = Engine::standard();
    for n in 1..=3 {
        let s = setup_in(n);
        let far = padded(&[3.0, 2.5, 1.0], n);
        let t = 1.0;
        assert!(s.h.distance_to_support(&far) > t);
        assert_eq!(e.solve_u(&s, &far, t).unwrap(), 0.0);
        assert_eq!(e.grad_u(&s, &far, t).unwrap(), vec![0.0; n]);
    }
}

#[test]
fn three_dimensional_wave_part_is_silent_inside_cone() {
    let e = Engine::standard();
    let s = setup_in(3);
    let x = [0.2, 0.0, 0.0];
    let t = 4.0;
    assert!(Engine::sphere_misses(&s.h, &x, t));
    assert_eq!(e.wave_part_w(&s.h, &x, t).unwrap(), 0.0);
    assert_eq!(e.tilde_w(&s, &x, t).unwrap(), 0.0);
    assert!(e.heat_part_j(&s.h, &x, t).unwrap() > 0.0);
}

#[test]
fn one_dimensional_wave_part_captures_half_mass() {
    let e = Engine::standard();
    let s = setup_in(1);
    let t = 10.0;
    let w = e.wave_part_w(&s.h, &[0.2], t).unwrap();
    assert!((w - 0.5 * s.h.mass()).abs() < 1e-12, "{w}");
}

#[test]
fn heat_part_approaches_heat_semigroup() {
    let e = Engine::standard();
    for n in 1..=7 {
        let g = BumpSum::new(n, vec![Bump::new(vec![0.1; n], 0.6, 1.0)]).unwrap();
        let x = vec![0.0; n];
        let rel = |t: f64| {
            let p = e.heat(&g, &x, t).unwrap();
            (e.heat_part_j(&g, &x, t).unwrap() - p) / p
        };
        // The relative gap closes at least like 1/t.
        let (a, b) = (rel(200.0), rel(400.0));
        assert!(b.abs() < 0.025 && b / a < 0.55, "n={n}: {a} {b}");
        // t^{n/2} J_n g → mass/(4π)^{n/2}
        let limit = g.mass() / (4.0 * PI).powf(0.5 * n as f64);
        let scaled = |t: f64| t.powf(0.5 * n as f64) * e.heat_part_j(&g, &x, t).unwrap();
        let (a, b) = (scaled(400.0), scaled(800.0));
        assert!((b - limit).abs() < 0.6 * (a - limit).abs(), "n={n}");
        assert!((b - limit).abs() / limit < 0.02, "n={n}");
    }
}

#[test]
fn heat_semigroup_properties() {
    let e = Engine::standard();
    for n in 1..=3 {
        let s = setup_in(n);
        let x = probe(n);
        let p = e.heat(&s.h, &x, 1e-4).unwrap();
        assert!((p - s.h.eval(&x)).abs() < 0.01 * s.h.eval(&x), "n={n}: {p}");
        // Far from the support scale only the mass is seen.
        let t = 1e4;
        let p = e.heat(&s.h, &x, t).unwrap();
        let gauss = s.h.mass() / (4.0 * PI * t).powf(0.5 * n as f64);
        assert!((p / gauss - 1.0).abs() < 1e-3, "n={n}");
    }
}

#[test]
fn wave_parts_reject_high_dimensions() {
    let e = Engine::standard();
    let g = BumpSum::new(4, vec![Bump::new(vec![0.0; 4], 0.5, 1.0)]).unwrap();
    let x = vec![0.0; 4];
    assert!(matches!(
        e.wave_part_w(&g, &x, 1.0),
        Err(Error::Invalid { .. })
    ));
    assert!(e.heat_part_j(&g, &x, 1.0).is_ok());
    assert!(matches!(
        e.heat_part_j(&g, &x, -1.0),
        Err(Error::Domain { .. })
    ));
    assert!(e.heat_part_j(&g, &[0.0], 1.0).is_err());
    assert!(e.second_dir_j(&g, &x, 1.0, &[1.0, 1.0, 0.0, 0.0]).is_err());
}

#[test]
fn field_grid_layout_and_values() {
    let e = Engine::standard();
    let s = setup_in(2);
    let bounds = AxisBox {
        lo: vec![-1.0, -1.0],
        hi: vec![1.0, 2.0],
    };
    let grid = e.field(&s, Part::FullU, 0.0, &bounds, &[3, 4]).unwrap();
    assert_eq!(grid.len(), 12);
    assert_eq!(grid.node(1), vec![-1.0, 0.0]);
    assert_eq!(grid.node(4), vec![0.0, -1.0]);
    for i in 0..grid.len() {
        assert_eq!(grid.values[i], s.f.eval(&grid.node(i)));
    }
    let diff = e
        .field(&s, Part::DifferenceUMinusP, 0.0, &bounds, &[3, 4])
        .unwrap();
    for i in 0..diff.len() {
        assert!((diff.values[i] + s.g.eval(&diff.node(i))).abs() < 1e-15);
    }
    assert!(e.field(&s, Part::FullU, 1.0, &bounds, &[3]).is_err());
    assert!(e.field(&s, Part::FullU, 1.0, &bounds, &[0, 3]).is_err());
    assert_eq!(grid.setup_hash, setup_hash(&s));
}

#[test]
fn difference_part_is_small_at_large_time() {
    let e = Engine::standard();
    let s = setup_in(2);
    let x = probe(2);
    let t = 40.0;
    let d = e.part(&s, Part::DifferenceUMinusP, &x, t).unwrap();
    let p = e.part(&s, Part::HeatSemigroupP, &x, t).unwrap();
    assert!(d.abs() < 0.05 * p, "{d} vs {p}");
    let rem = e.diffusion_remainder(&s, &x, t).unwrap();
    let wave = (-0.5 * t).exp() * e.tilde_w(&s, &x, t).unwrap();
    assert!((rem + wave - d).abs() < 1e-14);
}

#[test]
fn part_names_round_trip() {
    for p in Part::ALL {
        assert_eq!(Part::parse(p.name()), Some(p));
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Part>(&json).unwrap(), p);
    }
    assert_eq!(Part::parse("nope"), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_dimensional_gradient_matches_fd(x in -2.0f64..2.0, t in 0.1f64..8.0) {
        let e = Engine::standard();
        let s = setup_in(1);
        let fd = central(|y| e.solve_u(&s, y, t).unwrap(), &[x], &[1.0], 1e-5);
        let g = e.grad_u(&s, &[x], t).unwrap()[0];
        prop_assert!((g - fd).abs() < 1e-6, "{} vs {}", g, fd);
    }

    #[test]
    fn one_dimensional_split_matches_direct(x in -2.0f64..2.0, t in 0.1f64..20.0) {
        let e = Engine::standard();
        let s = setup_in(1);
        let a = e.split_solution_s(&s.h, &[x], t).unwrap();
        let b = e.solution_s(&s.h, &[x], t).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
