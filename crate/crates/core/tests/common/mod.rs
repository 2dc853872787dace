//! Reference computations that share no code with the library: composite
//! Simpson rules on truncated domains and closed-form transforms.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E f(G)` for standard normal `G`, truncated at ±12.
pub fn gauss(f: impl Fn(f64) -> f64) -> f64 {
    simpson(|x| f(x) * phi(x), -12.0, 12.0, 4800)
}

/// `E f(G₁, G₂)` for independent standard normals, truncated at ±9.
pub fn gauss2(f: impl Fn(f64, f64) -> f64) -> f64 {
    simpson(|x| phi(x) * simpson(|y| f(x, y) * phi(y), -9.0, 9.0, 360), -9.0, 9.0, 360)
}

/// `∫ f dμ` for the semicircle on `[−2, 2]`, via `x = 2 sin θ`.
pub fn semicircle(f: impl Fn(f64) -> f64) -> f64 {
    simpson(|t| f(2.0 * t.sin()) * 2.0 * t.cos().powi(2) / PI, -PI / 2.0, PI / 2.0, 4000)
}

/// Closed-form R-transform of Rademacher and its derivative.
pub fn rademacher_r(g: f64) -> (f64, f64) {
    let s = (1.0 + 4.0 * g * g).sqrt();
    ((s - 1.0) / (2.0 * g), (8.0 * g * g / s - 2.0 * s + 2.0) / (4.0 * g * g))
}

/// `R̄(z) = βR(βz)` and `R̄′(z)` for the two analytic laws.
#[derive(Clone, Copy, Debug)]
pub enum Law {
    Semicircle,
    Rademacher,
}

pub fn r_bar(law: Law, beta: f64, z: f64) -> (f64, f64) {
    match law {
        Law::Semicircle => (beta * beta * z, beta * beta),
        Law::Rademacher => {
            let (r, rp) = rademacher_r(beta * z);
            (beta * r, beta * beta * rp)
        }
    }
}

/// `E_H φ(H)` for a point-mass or Gaussian field.
pub fn field_expect(field: (f64, f64), f: impl Fn(f64) -> f64) -> f64 {
    let (mean, sd) = field;
    if sd == 0.0 {
        f(mean)
    } else {
        gauss(|x| f(mean + sd * x))
    }
}

/// Plain fixed-point iteration for `q*` and the RS free energy.
pub struct RsReference {
    pub q: f64,
    pub sigma_sq: f64,
    pub psi: f64,
}

/// A Gaussian field folds into the noise, so every expectation is one
/// Simpson rule over `mean + √(sd² + σ²)·G`.
pub fn rs_reference(law: Law, beta: f64, field: (f64, f64)) -> RsReference {
    let (mean, sd) = field;
    let mut q = 0.5;
    for _ in 0..400 {
        let s = (sd * sd + q * r_bar(law, beta, 1.0 - q).1).sqrt();
        q = gauss(|g| (mean + s * g).tanh().powi(2));
    }
    let (a, rp) = r_bar(law, beta, 1.0 - q);
    let sigma_sq = q * rp;
    let s = (sd * sd + sigma_sq).sqrt();
    let ent = gauss(|g| (2.0 * (mean + s * g).cosh()).ln());
    let int_r = simpson(|z| r_bar(law, beta, z.max(1e-300)).0, 0.0, 1.0 - q, 2000);
    RsReference { q, sigma_sq, psi: ent + 0.5 * q * a - 0.5 * q * (1.0 - q) * rp + 0.5 * int_r }
}

/// Root of a decreasing function on `[lo, hi]` by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!((got - want).abs() <= tol, "{what}: got {got:.16e}, want {want:.16e}, tol {tol:e}");
}
