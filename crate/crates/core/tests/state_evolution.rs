mod common;

use common::{assert_close, simpson};
use orthoglass::rs_core::{rs_constants, ModelSpec, RSConstants};
use orthoglass::spectral_law::{FieldLaw, SpectralLaw};
use orthoglass::state_evolution::{se_advance, se_init, se_limit_check, se_run, SeKernel, SE_ORDER};
use orthoglass::{Error, Execution};
use std::f64::consts::PI;

fn setup(beta: f64, law: SpectralLaw, field: FieldLaw) -> (ModelSpec, RSConstants) {
    let m = ModelSpec::new(beta, law, field).unwrap();
    let c = rs_constants(&m).unwrap();
    (m, c)
}

fn rademacher() -> (ModelSpec, RSConstants) {
    setup(0.1, SpectralLaw::Rademacher, FieldLaw::point_mass(0.4))
}

fn kernel(m: &ModelSpec, c: &RSConstants) -> SeKernel {
    SeKernel::new(m, c, SE_ORDER).unwrap()
}

/// `E_G[(E_{G′} f(h, aG + bG′))²]` by nested Simpson rules, for a point-mass field.
fn g_reference(c: &RSConstants, h: f64, delta: f64) -> f64 {
    let a = (c.kappa_star * delta).sqrt();
    let b = (c.sigma_star_sq - c.kappa_star * delta).max(0.0).sqrt();
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let f = |y: f64| (h + y).tanh() / (1.0 - c.q_star) - y;
    simpson(
        |g| {
            let inner = simpson(|gp| f(a * g + b * gp) * phi(gp), -10.0, 10.0, 800);
            inner * inner * phi(g)
        },
        -10.0,
        10.0,
        800,
    )
}

#[test]
fn first_entry_and_fixed_point() {
    let (m, c) = rademacher();
    let s = se_advance(&se_init(&m, &c, SE_ORDER).unwrap(), Execution::Sequential);
    assert_close(s.delta[0][0], c.delta_star, 1e-12, "delta_11");
    let k = kernel(&m, &c);
    assert_close(k.g_map(c.delta_star).unwrap(), c.delta_star, 1e-12, "g(delta*)");
    assert_eq!(k.g_deviation(0.0), 0.0);
    assert!(k.divergence().abs() <= 1e-12);
}

#[test]
fn zero_field_is_identically_zero() {
    let (m, c) = setup(0.1, SpectralLaw::Semicircle, FieldLaw::point_mass(0.0));
    let s = se_run(&m, &c, 5, SE_ORDER, Execution::Sequential).unwrap();
    assert!(s.delta.iter().flatten().all(|&v| v == 0.0));
    assert!(se_limit_check(&s).degenerate);
}

#[test]
fn g_map_matches_nested_simpson() {
    let (m, c) = rademacher();
    let k = kernel(&m, &c);
    for frac in [0.0, 0.3, 0.7, 1.0] {
        let d = frac * c.delta_star;
        assert_close(k.g_map(d).unwrap(), g_reference(&c, 0.4, d), 1e-11, "g vs simpson");
    }
    assert_close(k.g_map(0.0).unwrap(), 0.1970222841429334, 1e-13, "frozen g(0)");
}

#[test]
fn g_map_domain_and_range() {
    let (m, c) = rademacher();
    let k = kernel(&m, &c);
    assert!(matches!(k.g_map(-0.1), Err(Error::Domain(_))));
    assert!(matches!(k.g_map(2.0 * c.delta_star), Err(Error::Domain(_))));
    for i in 0..=20 {
        let d = c.delta_star * i as f64 / 20.0;
        let g = k.g_map(d).unwrap();
        assert!((0.0..=c.delta_star + 1e-12).contains(&g));
    }
}

#[test]
fn g_slope_is_at_most_half_for_small_beta() {
    for law in [SpectralLaw::Rademacher, SpectralLaw::Semicircle] {
        for beta in [0.05, 0.1] {
            let (m, c) = setup(beta, law.clone(), FieldLaw::point_mass(0.4));
            let k = kernel(&m, &c);
            let step = 1e-4 * c.delta_star;
            for i in 1..=10 {
                let d = c.delta_star * i as f64 / 11.0;
                let fd = (k.g_map(d + step).unwrap() - k.g_map(d - step).unwrap()) / (2.0 * step);
                assert!(fd.abs() <= 0.5, "beta {beta} slope {fd}");
                assert_close(k.g_prime(d).unwrap(), fd, 1e-6, "g' vs finite difference");
            }
        }
    }
}

#[test]
fn limit_check_decay() {
    let (m, c) = rademacher();
    let s = se_run(&m, &c, 8, SE_ORDER, Execution::Sequential).unwrap();
    let r = se_limit_check(&s);
    assert!(!r.degenerate);
    assert!(r.half_power_bound_holds);
    assert!(r.decay_ratios.iter().all(|&x| x <= 0.55), "{:?}", r.decay_ratios);
    assert!(r.fitted_rate.unwrap() <= 0.55);

    // Independent oracle: iterate g from 0 and compare with the superdiagonal.
    let k = kernel(&m, &c);
    let mut d = 0.0;
    for (i, dev) in r.superdiagonal_deviation.iter().enumerate() {
        d = k.g_map(d).unwrap();
        assert_close(c.delta_star - d, *dev, 1e-12, &format!("superdiagonal {i}"));
    }

    let one = se_run(&m, &c, 1, SE_ORDER, Execution::Sequential).unwrap();
    assert!(se_limit_check(&one).degenerate);
}

#[test]
fn entries_converge_to_sigma_over_kappa() {
    let (m, c) = rademacher();
    let s = se_run(&m, &c, 12, SE_ORDER, Execution::Sequential).unwrap();
    let t = s.t;
    assert_close(c.kappa_star * s.delta[t - 2][t - 1], c.sigma_star_sq, 1e-9, "kappa delta");
    assert!(se_limit_check(&s).tail_max_deviation <= 1e-7);
}

#[test]
fn state_invariants_across_grid() {
    for m in orthoglass::validation::model_grid() {
        let c = rs_constants(&m).unwrap();
        let s = se_run(&m, &c, 12, SE_ORDER, Execution::Parallel).unwrap();
        let ds = c.delta_star;
        assert!(s.min_eigenvalue() >= -1e-10);
        for i in 0..s.t {
            assert_close(s.delta[i][i], ds, 1e-9, "diagonal");
            for j in 0..s.t {
                assert_eq!(s.delta[i][j], s.delta[j][i]);
                assert!(s.delta[i][j] >= 0.0 && s.delta[i][j] <= ds + 1e-9);
            }
        }
        let short = se_run(&m, &c, 7, SE_ORDER, Execution::Sequential).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(short.delta[i][j], s.delta[i][j], "leading submatrix");
            }
        }
    }
}

#[test]
fn columns_are_compositions_of_g() {
    let (m, c) = setup(0.2, SpectralLaw::Semicircle, FieldLaw::gaussian(0.2, 0.5));
    let s = se_run(&m, &c, 6, SE_ORDER, Execution::Sequential).unwrap();
    let k = kernel(&m, &c);
    for t in 1..s.t {
        assert_close(s.delta[0][t], k.g_map(0.0).unwrap(), 1e-10, "first row");
        for sidx in 1..=t {
            let expected = k.g_map(s.delta[sidx - 1][t - 1]).unwrap();
            assert_close(s.delta[sidx][t], expected, 1e-10, "column");
        }
    }
}

#[test]
fn doubling_order_changes_little() {
    let (m, c) = setup(0.1, SpectralLaw::Rademacher, FieldLaw::gaussian(0.1, 0.6));
    let a = se_run(&m, &c, 6, 60, Execution::Sequential).unwrap();
    let b = se_run(&m, &c, 6, 120, Execution::Sequential).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!((a.delta[i][j] - b.delta[i][j]).abs() <= 1e-9);
        }
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let (m, c) = rademacher();
    let a = se_run(&m, &c, 6, SE_ORDER, Execution::Sequential).unwrap();
    let b = se_run(&m, &c, 6, SE_ORDER, Execution::Parallel).unwrap();
    assert_eq!(a.delta, b.delta);
    assert_eq!(a.dev, b.dev);
}

#[test]
fn factor_reproduces_gram_matrix() {
    let (m, c) = rademacher();
    let s = se_run(&m, &c, 6, SE_ORDER, Execution::Sequential).unwrap();
    let f = s.factor().unwrap();
    let g = &f * f.transpose();
    let dense = s.matrix();
    let err = (g - &dense).abs().max();
    assert!(err <= 1e-12 * c.delta_star, "factor error {err:e}");
    // The dense route is only trustworthy while Δ_t is well conditioned.
    let s3 = s.truncated(2);
    let x = [1.0, -0.25];
    let q = s3.inverse_quadratic_form(&x).unwrap();
    let qd = s3.inverse_quadratic_form_dense(&x).unwrap();
    assert!((q - qd).abs() <= 1e-8 * qd.abs(), "{q} vs {qd}");
}

#[test]
fn order_overflow_and_csv() {
    let (m, c) = rademacher();
    assert!(matches!(se_init(&m, &c, 201), Err(Error::QuadratureOverflow(201))));
    let s = se_run(&m, &c, 3, SE_ORDER, Execution::Sequential).unwrap();
    let csv = s.to_csv();
    let rows: Vec<Vec<f64>> = csv.lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows, s.delta);
}
