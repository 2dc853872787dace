mod common;

use common::{assert_close, bisect};
use orthoglass::rs_core::{integral_r, rs_constants, ModelSpec, RSConstants};
use orthoglass::spectral_law::{FieldLaw, SpectralLaw};
use orthoglass::state_evolution::{se_run, SEState, SE_ORDER};
use orthoglass::variational::{
    concavity_probe, default_epsilon, f2_func, f_func, gradcheck, h_func, h_func_dgamma, hciz_monte_carlo, hciz_rank1,
    hciz_rank2, inf_gamma_closed, inf_gamma_matrix, phi1_stationary, phi2_stationary, Basis, FWeight, Phi1, Phi1Point,
    Phi2, Phi2Point, Sym2,
};
use orthoglass::{Error, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::LN_2;

fn setup(beta: f64, law: SpectralLaw, field: FieldLaw, t: usize) -> (ModelSpec, RSConstants, SEState) {
    let m = ModelSpec::new(beta, law, field).unwrap();
    let c = rs_constants(&m).unwrap();
    let se = se_run(&m, &c, t, SE_ORDER, Execution::Sequential).unwrap();
    (m, c, se)
}

fn quantiles(law: &SpectralLaw, n: usize) -> Vec<f64> {
    (0..n).map(|i| law.quantile((i as f64 + 0.5) / n as f64)).collect()
}

#[test]
fn h_func_examples() {
    let atom = SpectralLaw::discrete(vec![0.0], vec![1.0]).unwrap();
    assert_close(h_func(2.0, 1.0, &atom).unwrap(), 2.0 - LN_2 - 1.0, 1e-15, "single atom");
    assert!(h_func(1.0, 0.0, &atom).is_err());
    assert!(h_func(-1.0, 1.0, &atom).is_err());

    let law = SpectralLaw::Rademacher.scaled(0.3);
    let gamma = 1.7;
    let alpha = law.cauchy(gamma).unwrap();
    assert!(h_func_dgamma(gamma, alpha, &law).unwrap().abs() <= 1e-15);
    let step = 1e-5;
    let fd = (h_func(gamma + step, 0.4, &law).unwrap() - h_func(gamma - step, 0.4, &law).unwrap()) / (2.0 * step);
    assert_close(h_func_dgamma(gamma, 0.4, &law).unwrap(), fd, 1e-9, "dgamma");
    // convex along a grid
    let vals: Vec<f64> = (0..20).map(|i| h_func(1.05 + 0.1 * i as f64, 0.4, &law).unwrap()).collect();
    assert!(vals.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] >= -1e-14));
}

#[test]
fn h_func_stationary_at_starred_gamma() {
    let m = ModelSpec::new(0.1, SpectralLaw::Rademacher, FieldLaw::point_mass(0.4)).unwrap();
    let c = rs_constants(&m).unwrap();
    let dbar = m.dbar();
    let gamma = dbar.cauchy_inverse(1.0 - c.q_star).unwrap();
    assert!(h_func_dgamma(gamma, 1.0 - c.q_star, &dbar).unwrap().abs() <= 1e-12);
    let f = |x: &[f64]| h_func(x[0], 1.0 - c.q_star, &dbar).unwrap();
    let r = gradcheck(&f, &[0.0], &[gamma], 1e-3, 1.0);
    assert!(r.passes(1e-8), "{r:?}");
}

#[test]
fn inf_gamma_examples() {
    let r = inf_gamma_closed(0.5, &SpectralLaw::Semicircle).unwrap();
    assert_close(r.closed, 0.125, 1e-12, "semicircle");
    assert_close(r.closed_argmin, 2.5, 1e-12, "argmin");
    assert_close(r.numeric, 0.125, 1e-8, "numeric");
    assert_close(r.numeric_argmin, 2.5, 1e-6, "numeric argmin");
    assert!(r.second_derivative >= 0.0);

    for law in [SpectralLaw::Semicircle, SpectralLaw::Rademacher, orthoglass::validation::three_atom_law()] {
        let alpha = 0.4;
        let scalar = inf_gamma_closed(alpha, &law).unwrap();
        let matrix = inf_gamma_matrix(&Sym2::new(alpha, 0.0, alpha), &law).unwrap();
        assert_close(matrix.closed, 2.0 * scalar.closed, 1e-12, "A = alpha I");
        assert_close(matrix.numeric, matrix.closed, 1e-6, "matrix numeric");
    }
    assert!(inf_gamma_matrix(&Sym2::new(-0.1, 0.0, 0.3), &SpectralLaw::Semicircle).is_err());
}

#[test]
fn inf_gamma_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for law in [SpectralLaw::Semicircle, SpectralLaw::Rademacher, orthoglass::validation::three_atom_law()] {
        let top = law.cauchy_at_dplus().min(5.0);
        for _ in 0..10 {
            let alpha = rng.gen_range(0.05..0.95) * top;
            let s = inf_gamma_closed(alpha, &law).unwrap();
            assert!((s.numeric - s.closed).abs() <= 1e-8);
            assert!((s.numeric_argmin - s.closed_argmin).abs() <= 1e-6);
            let (l1, l2) = (rng.gen_range(0.05..0.9) * top, rng.gen_range(0.05..0.9) * top);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (c, s2) = (th.cos(), th.sin());
            let a = Sym2::new(l1 * c * c + l2 * s2 * s2, (l1 - l2) * c * s2, l1 * s2 * s2 + l2 * c * c);
            let m = inf_gamma_matrix(&a, &law).unwrap();
            assert!((m.numeric - m.closed).abs() <= 1e-6, "{m:?}");
            let gap = m.numeric_argmin.sub(&m.closed_argmin);
            assert!(gap.a.abs().max(gap.b.abs()).max(gap.c.abs()) <= 1e-6);
        }
    }
}

#[test]
fn f_func_shape() {
    let m = ModelSpec::new(0.1, SpectralLaw::Rademacher, FieldLaw::point_mass(0.4)).unwrap();
    let c = rs_constants(&m).unwrap();
    let vals: Vec<f64> = (0..30).map(|i| f_func(0.11 + 0.2 * i as f64, &m, &c).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
    let w = FWeight::new(&m, &c);
    for i in 0..30 {
        assert!(w.f_prime(0.11 + 0.2 * i as f64).unwrap() < 0.0);
    }
    assert!(f_func(1e9, &m, &c).unwrap() < 1e-9 * vals[0].max(1e-300) * 1e3);
    assert!(f_func(0.05, &m, &c).is_err());

    for (g, r) in [(0.5, 0.9), (1.3, 0.2)] {
        let f2 = f2_func(g, 0.0, r, &m, &c).unwrap();
        assert_close(f2.a, f_func(g, &m, &c).unwrap(), 1e-15, "f2 gamma");
        assert_close(f2.c, f_func(r, &m, &c).unwrap(), 1e-15, "f2 rho");
        assert_eq!(f2.b, 0.0);
    }
}

#[test]
fn f_weight_scales_as_beta_to_the_fourth() {
    let weight = |law: &SpectralLaw, beta: f64| {
        let m = ModelSpec::new(beta, law.clone(), FieldLaw::point_mass(0.4)).unwrap();
        let c = rs_constants(&m).unwrap();
        let w = FWeight::new(&m, &c);
        (m.dbar().integrate(&|x| w.omega(x).powi(2)), c.q_star)
    };
    for law in [SpectralLaw::Semicircle, orthoglass::validation::three_atom_law()] {
        let (w1, q1) = weight(&law, 0.02);
        let (w2, q2) = weight(&law, 0.04);
        let ratio = w2 / w1 * ((1.0 - q1) / (1.0 - q2)).powi(2);
        assert!((ratio - 16.0).abs() <= 0.5, "ratio {ratio}");
    }
    // For a two-point law the weight vanishes on both atoms.
    let (w, _) = weight(&SpectralLaw::Rademacher, 0.04);
    assert!(w <= 1e-25);
}

#[test]
fn rank1_closed_cases() {
    let n = 50;
    let alpha: f64 = 0.7;
    let a = vec![alpha.sqrt(); n];
    let r = hciz_rank1(&a, &vec![0.0; n], &vec![0.0; n], 1e-6).unwrap();
    assert!(r.value.abs() <= 1e-12);
    assert_close(r.gamma_opt, 1.0 / alpha, 1e-8, "gamma = 1/alpha");
    assert!(r.second_derivative >= 0.0);

    assert!(matches!(hciz_rank1(&vec![0.0; n], &vec![0.0; n], &vec![0.0; n], 1e-6), Err(Error::InfeasibleAlpha(_))));
    assert!(hciz_rank1(&a, &vec![0.0; n - 1], &vec![0.0; n], 1e-6).is_err());
}

#[test]
fn rank1_against_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for _ in 0..10 {
        let n = rng.gen_range(5..40);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let nf = n as f64;
        let alpha = a.iter().map(|x| x * x).sum::<f64>() / nf;
        let top = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let eps = default_epsilon(top);
        let fn_ = |g: f64| d.iter().zip(&b).map(|(x, y)| 1.0 / (g - x) + y * y / (g - x).powi(2)).sum::<f64>() / nf;
        let obj = |g: f64| {
            g * alpha + d.iter().zip(&b).map(|(x, y)| y * y / (g - x) - (g - x).ln()).sum::<f64>() / nf
                - 1.0
                - alpha.ln()
        };
        let r = hciz_rank1(&a, &b, &d, eps).unwrap();
        if fn_(top + eps) <= alpha {
            assert!(r.at_boundary);
            assert_close(r.value, obj(top + eps), 1e-10, "boundary value");
        } else {
            let g = bisect(|g| fn_(g) - alpha, top + eps, top + 10.0 / alpha + 10.0);
            assert_close(r.gamma_opt, g, 1e-8, "argmin");
            assert_close(r.value, obj(g), 1e-12, "value");
            assert!(r.derivative.abs() <= 1e-8);
        }
        assert!(r.gamma_opt >= top + eps);
    }
}

#[test]
fn rank1_large_n_tends_to_integral() {
    for law in [SpectralLaw::Semicircle, SpectralLaw::Rademacher] {
        let n = 4000;
        let d = quantiles(&law, n);
        let alpha: f64 = 0.5;
        let a = vec![alpha.sqrt(); n];
        let r = hciz_rank1(&a, &vec![0.0; n], &d, default_epsilon(2.0)).unwrap();
        let limit = integral_r(&law, alpha).unwrap();
        assert!((r.value - limit).abs() <= 2e-3, "{law:?}: {} vs {limit}", r.value);
    }
}

#[test]
fn rank1_epsilon_insensitive_in_the_interior() {
    let law = SpectralLaw::Semicircle.scaled(0.3);
    let d = quantiles(&law, 300);
    let a = vec![0.8f64.sqrt(); 300];
    let b: Vec<f64> = (0..300).map(|i| 0.1 * ((i % 7) as f64 - 3.0)).collect();
    let base = hciz_rank1(&a, &b, &d, 1e-6).unwrap();
    for eps in [1e-8, 1e-5, 1e-4] {
        let r = hciz_rank1(&a, &b, &d, eps).unwrap();
        assert!(!r.at_boundary);
        assert!((r.value - base.value).abs() <= 1e-12);
    }
}

#[test]
fn monte_carlo_degenerate_exponents() {
    let n = 30;
    let a: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
    let alpha = a.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let zero = hciz_monte_carlo(&a, &vec![0.0; n], &vec![0.0; n], 100, 4, 1, Execution::Sequential).unwrap();
    assert!(zero.exponent.abs() <= 1e-14);
    let c = 0.3;
    let flat = hciz_monte_carlo(&a, &vec![0.0; n], &vec![c; n], 100, 4, 1, Execution::Parallel).unwrap();
    assert_close(flat.exponent, alpha * c, 1e-12, "D = cI");
    assert_close(flat.ess, 100.0, 1e-9, "equal weights");
    assert!(hciz_monte_carlo(&a, &a, &a, 10, 3, 1, Execution::Sequential).is_err());
}

#[test]
fn rank2_decouples_into_rank1() {
    let n = 40;
    let a: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.9 } else { 0.5 }).collect();
    let c: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.9 }).collect();
    assert!(a.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>().abs() <= 1e-12);
    let b: Vec<f64> = (0..n).map(|i| if i < n / 2 { 0.3 * (i as f64).sin() } else { 0.0 }).collect();
    let dv: Vec<f64> = (0..n).map(|i| if i >= n / 2 { 0.2 * (i as f64).cos() } else { 0.0 }).collect();
    let eigs = quantiles(&SpectralLaw::Rademacher.scaled(0.2), n);
    let eps = default_epsilon(0.2);
    let r2 = hciz_rank2(&a, &b, &c, &dv, &eigs, eps).unwrap();
    let r1a = hciz_rank1(&a, &b, &eigs, eps).unwrap();
    let r1c = hciz_rank1(&c, &dv, &eigs, eps).unwrap();
    assert_close(r2.value, r1a.value + r1c.value, 1e-8, "decoupled sum");
    assert!(r2.optimum.b.abs() <= 1e-8);
    assert!(r2.grad_norm <= 1e-6 || r2.boundary_active);
}

#[test]
fn rank2_identity_gram_tends_to_matrix_closed_form() {
    let m = ModelSpec::new(0.1, SpectralLaw::Rademacher, FieldLaw::point_mass(0.4)).unwrap();
    let c = rs_constants(&m).unwrap();
    let z = 1.0 - c.q_star;
    let n = 4000;
    let a = vec![z.sqrt(); n];
    let cc: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { z.sqrt() } else { -z.sqrt() }).collect();
    let eigs = quantiles(&m.dbar(), n);
    let r = hciz_rank2(&a, &vec![0.0; n], &cc, &vec![0.0; n], &eigs, default_epsilon(0.1)).unwrap();
    let matrix = inf_gamma_matrix(&Sym2::new(z, 0.0, z), &m.dbar()).unwrap();
    assert_close(matrix.closed, 2.0 * integral_r(&m.dbar(), z).unwrap(), 1e-12, "closed");
    assert!((r.value - matrix.closed).abs() <= 1e-3, "{} vs {}", r.value, matrix.closed);
    assert!(r.gram.det() > 0.0);
}

#[test]
fn rank2_rejects_singular_gram() {
    let a = vec![0.5; 10];
    let z = vec![0.0; 10];
    assert!(matches!(hciz_rank2(&a, &z, &a, &z, &z, 1e-6), Err(Error::SingularGram(_))));
}

#[test]
fn stationary_identities() {
    for law in [SpectralLaw::Rademacher, SpectralLaw::Semicircle] {
        for beta in [0.05, 0.1] {
            for field in [FieldLaw::point_mass(0.3), FieldLaw::gaussian(0.1, 0.5)] {
                let (m, c, se) = setup(beta, law.clone(), field, 9);
                let mut last = f64::INFINITY;
                for t in 1..=8 {
                    let r1 = phi1_stationary(&m, &c, &se, t).unwrap();
                    assert_close(r1.value, c.psi_rs, 1e-9, "phi1 value");
                    assert!(r1.max_exact_partial() <= 1e-9, "t {t}: {r1:?}");
                    assert!(r1.divergence.abs() <= 1e-9);
                    assert!(r1.d_big_v_norm < last, "dV not decreasing at t = {t}");
                    last = r1.d_big_v_norm;

                    let r2 = phi2_stationary(&m, &c, &se, t).unwrap();
                    assert_close(r2.value, 2.0 * c.psi_rs, 1e-8, "phi2 value");
                    assert!(r2.d_big_p.abs() <= 1e-9);
                    assert!(r2.max_exact_partial <= 1e-9, "t {t}: {r2:?}");
                }
            }
        }
    }
}

#[test]
fn stationary_needs_one_more_se_step() {
    let (m, c, se) = setup(0.1, SpectralLaw::Rademacher, FieldLaw::point_mass(0.3), 4);
    assert!(phi1_stationary(&m, &c, &se, 4).is_err());
    assert!(phi1_stationary(&m, &c, &se, 3).is_ok());
}

#[test]
fn bases_agree_at_the_starred_point() {
    let (m, c, se) = setup(0.1, SpectralLaw::Semicircle, FieldLaw::gaussian(0.2, 0.4), 5);
    let f = Phi1::new(&m, &c, &se, 3, Basis::Factor).unwrap().stationary(&c, &se).unwrap();
    let s = Phi1::new(&m, &c, &se, 3, Basis::SymmetricRoot).unwrap().stationary(&c, &se).unwrap();
    assert_close(f.value, s.value, 1e-12, "value");
    assert!(s.max_exact_partial() <= 1e-9);
    // The symmetric root goes through an LU solve of a nearly singular Δ_t.
    assert_close(f.d_big_v_norm, s.d_big_v_norm, 1e-6 * f.d_big_v_norm, "dV");
    if let Some(dense) = f.d_big_v_norm_dense {
        assert!((dense - f.d_big_v_norm).abs() <= 1e-6 * f.d_big_v_norm.max(1e-3));
    }
}

fn perturbed(x: &[f64], rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    x.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn phi1_gradients() {
    let (m, c, se) = setup(0.2, SpectralLaw::Rademacher, FieldLaw::gaussian(0.1, 0.5), 3);
    let phi = Phi1::new(&m, &c, &se, 2, Basis::Factor).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = perturbed(&phi.starred().unwrap().to_vec(), &mut rng, 0.05);
    let p = Phi1Point::from_slice(2, &x);

    let (_, g) = phi.algebraic(&p).unwrap();
    let f = |y: &[f64]| phi.algebraic(&Phi1Point::from_slice(2, y)).unwrap().0;
    let r = gradcheck(&f, &g.to_vec(), &x, 1e-3, 1e-2);
    assert!(r.passes(1e-5), "{r:?}");

    let s = phi.samples(400, 9);
    let g = phi.grad_mc(&p, &s).unwrap();
    let f = |y: &[f64]| phi.value_mc(&Phi1Point::from_slice(2, y), &s).unwrap();
    let r = gradcheck(&f, &g.to_vec(), &x, 1e-3, 1e-2);
    assert!(r.passes(1e-5), "{r:?}");
}

#[test]
fn phi2_gradients() {
    let (m, c, se) = setup(0.2, SpectralLaw::Semicircle, FieldLaw::gaussian(0.1, 0.5), 3);
    let phi = Phi2::new(&m, &c, &se, 2, Basis::Factor).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = perturbed(&phi.starred().unwrap().to_vec(), &mut rng, 0.03);
    let p = Phi2Point::from_slice(2, &x);

    let (_, g) = phi.algebraic(&p).unwrap();
    let f = |y: &[f64]| phi.algebraic(&Phi2Point::from_slice(2, y)).unwrap().0;
    let r = gradcheck(&f, &g.to_vec(), &x, 1e-3, 1e-2);
    assert!(r.passes(1e-5), "{r:?}");

    let s = phi.samples(300, 10);
    let g = phi.grad_mc(&p, &s).unwrap();
    let f = |y: &[f64]| phi.value_mc(&Phi2Point::from_slice(2, y), &s).unwrap();
    let r = gradcheck(&f, &g.to_vec(), &x, 1e-3, 1e-2);
    assert!(r.passes(1e-5), "{r:?}");
}

#[test]
fn mc_value_near_starred_value() {
    let (m, c, se) = setup(0.1, SpectralLaw::Rademacher, FieldLaw::gaussian(0.2, 0.5), 3);
    let phi = Phi1::new(&m, &c, &se, 2, Basis::Factor).unwrap();
    let s = phi.samples(40_000, 5);
    let v = phi.value_mc(&phi.starred().unwrap(), &s).unwrap();
    assert!((v - c.psi_rs).abs() <= 0.01, "{v} vs {}", c.psi_rs);
}

#[test]
fn concavity_probe_at_starred_point() {
    let (m, c, se) = setup(0.1, SpectralLaw::Rademacher, FieldLaw::gaussian(0.2, 0.6), 2);
    let phi = Phi1::new(&m, &c, &se, 1, Basis::Factor).unwrap();
    let s = phi.samples(2000, 6);
    let r = concavity_probe(&phi, &s, 6, 1e-2, 7).unwrap();
    assert_eq!(r.second_differences.len(), 6);
    assert!(r.all_negative, "{r:?}");
}
