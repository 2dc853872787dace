//! Replica-symmetric fixed point, model constants and free energies.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad::{integrate, normal_rule};
use crate::solve::{minimize_convex, ConvexMin};
use crate::spectral_law::{FieldLaw, SpectralLaw};

/// Gauss–Hermite order for the `𝖦` direction in scalar expectations.
pub const GAUSS_ORDER: usize = 80;
/// Damping of the fixed-point iteration for `q*`.
pub const DAMPING: f64 = 0.7;

/// Inverse temperature, standardized spectral law and field law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub beta: f64,
    pub spectral: SpectralLaw,
    pub field: FieldLaw,
}

impl ModelSpec {
    pub fn new(beta: f64, spectral: SpectralLaw, field: FieldLaw) -> Result<Self> {
        let model = ModelSpec { beta, spectral, field };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.spectral.validate()?;
        self.field.validate()?;
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return domain(format!("beta = {} must be positive", self.beta));
        }
        if !self.spectral.is_standardized() {
            return Err(Error::InvalidLaw(format!(
                "spectral law must be standardized (mean {:e}, variance {})",
                self.spectral.mean(),
                self.spectral.variance()
            )));
        }
        let top = self.spectral.cauchy_at_dplus();
        if !(self.beta < top) {
            return domain(format!("beta = {} must be below G(d+) = {top}", self.beta));
        }
        if let Some(msg) = self.regime_warning() {
            log::warn!("{msg}");
        }
        Ok(())
    }

    /// The rescaled law `μ_D̄` of `βd`.
    pub fn dbar(&self) -> SpectralLaw {
        self.spectral.scaled(self.beta)
    }

    /// Note emitted when β is outside the comfortable high-temperature range.
    pub fn regime_warning(&self) -> Option<String> {
        let limit = 0.5 * self.spectral.cauchy_at_dplus().min(1.0);
        (self.beta > limit)
            .then(|| format!("beta = {} exceeds {limit}; the fixed point is not guaranteed unique here", self.beta))
    }
}

/// `E φ(𝖧, 𝖦)` over the field law and an `order`-point rule for `𝖦`.
pub fn expect_hg(field: &[(f64, f64)], order: usize, phi: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let rule = normal_rule(order)?;
    Ok(field.iter().map(|&(h, wh)| wh * rule.expect(|g| phi(h, g))).sum())
}

/// Numerically stable `log 2cosh x`.
pub fn log2cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// Solver metadata attached to the constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub residual: f64,
    /// Fixed point reached from the second start, when that run converged.
    pub alternate_start_q: Option<f64>,
    pub starts_agree: bool,
}

/// Solution of the `q*` fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QStar {
    pub q: f64,
    pub meta: SolverMeta,
}

/// The map `f(q) = E tanh²(𝖧 + √(q R̄′(1−q)) 𝖦)`.
pub fn q_map(model: &ModelSpec, q: f64) -> Result<f64> {
    let field = model.field.nodes()?;
    q_map_with(&model.dbar(), &field, q)
}

fn q_map_with(dbar: &SpectralLaw, field: &[(f64, f64)], q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return domain(format!("q = {q} outside [0, 1)"));
    }
    let sigma = (q * dbar.r_prime(1.0 - q)?).sqrt();
    expect_hg(field, GAUSS_ORDER, |h, g| {
        let t = (h + sigma * g).tanh();
        t * t
    })
}

fn damped_iteration(
    dbar: &SpectralLaw,
    field: &[(f64, f64)],
    start: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize, f64)> {
    let mut q = start;
    let mut last = f64::INFINITY;
    for it in 0..=max_iter {
        let fq = q_map_with(dbar, field, q)?;
        let residual = (fq - q).abs();
        if residual <= tol {
            return Ok((q, it, residual));
        }
        if residual > last {
            log::debug!("q iteration residual rose from {last:e} to {residual:e} at step {it}");
        }
        last = residual;
        if it == max_iter {
            return Err(Error::NoConvergence { iterations: max_iter, residual });
        }
        q = ((1.0 - DAMPING) * q + DAMPING * fq).clamp(0.0, 1.0 - 1e-12);
    }
    unreachable!()
}

/// Damped fixed-point iteration for `q*` from `q₀ = E tanh²(𝖧)`, repeated
/// from a second start to detect multiple fixed points.
pub fn solve_q_star(model: &ModelSpec, tol: f64, max_iter: usize) -> Result<QStar> {
    if !(tol >= 1e-14) {
        return domain(format!("tol = {tol:e} is below 1e-14"));
    }
    let dbar = model.dbar();
    let field = model.field.nodes()?;
    let q0: f64 = field.iter().map(|&(h, w)| w * h.tanh().powi(2)).sum();
    let (q, iterations, residual) = damped_iteration(&dbar, &field, q0, tol, max_iter)?;

    let second = 0.5 * (1.0 + q0);
    let alternate_start_q = damped_iteration(&dbar, &field, second, tol, max_iter).ok().map(|r| r.0);
    let starts_agree = alternate_start_q.map_or(true, |qa| (qa - q).abs() <= 1e-6);
    if !starts_agree {
        log::warn!("q* iteration from {q0} and {second} reached {q} and {:?}", alternate_start_q);
    }
    Ok(QStar { q, meta: SolverMeta { iterations, residual, alternate_start_q, starts_agree } })
}

/// The solved RS constants and free energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSConstants {
    pub beta: f64,
    pub q_star: f64,
    pub sigma_star_sq: f64,
    pub lambda_star: f64,
    pub kappa_star: f64,
    pub delta_star: f64,
    /// `a* = R̄(1−q*)`.
    pub a_star: f64,
    /// `R̄′(1−q*)`.
    pub r_prime_star: f64,
    /// `δ*` from the Gaussian-expectation form, kept as a cross-check.
    pub delta_star_expectation: f64,
    pub psi_rs: f64,
    pub psi_rs_sphere: f64,
    pub solver: SolverMeta,
}

const Q_TOL: f64 = 1e-13;
const Q_MAX_ITER: usize = 2000;

/// Solves `q*` and fills in every constant.
pub fn rs_constants(model: &ModelSpec) -> Result<RSConstants> {
    let qs = solve_q_star(model, Q_TOL, Q_MAX_ITER)?;
    rs_constants_from_q(model, qs)
}

/// [`rs_constants`] with an explicit fixed-point tolerance and iteration cap.
pub fn rs_constants_with(model: &ModelSpec, tol: f64, max_iter: usize) -> Result<RSConstants> {
    let qs = solve_q_star(model, tol, max_iter)?;
    rs_constants_from_q(model, qs)
}

fn rs_constants_from_q(model: &ModelSpec, qs: QStar) -> Result<RSConstants> {
    let dbar = model.dbar();
    let field = model.field.nodes()?;
    let q = qs.q;
    let z = 1.0 - q;
    dbar.r_transform(z)?;
    let (a_star, r_prime_star, _) = dbar.r_raw(z);
    let sigma_star_sq = q * r_prime_star;
    let lambda_star = dbar.cauchy_inverse(z)?;
    let kappa_star = 1.0 / (1.0 - z * z * r_prime_star) - 1.0;
    if !(kappa_star > 0.0) || !kappa_star.is_finite() {
        return domain(format!("kappa* = {kappa_star} is not positive"));
    }
    let delta_star = sigma_star_sq / kappa_star;
    let sigma = sigma_star_sq.sqrt();
    let delta_star_expectation = expect_hg(&field, GAUSS_ORDER, |h, g| {
        let x = (h + sigma * g).tanh() / z - sigma * g;
        x * x
    })?;
    let psi_rs = psi_rs_parts(&dbar, &field, q, sigma, a_star, r_prime_star)?;
    let psi_rs_sphere = sphere_solve(model)?.value;
    Ok(RSConstants {
        beta: model.beta,
        q_star: q,
        sigma_star_sq,
        lambda_star,
        kappa_star,
        delta_star,
        a_star,
        r_prime_star,
        delta_star_expectation,
        psi_rs,
        psi_rs_sphere,
        solver: qs.meta,
    })
}

/// `∫₀^upper R(z) dz` by adaptive Gauss–Legendre.
pub fn integral_r(law: &SpectralLaw, upper: f64) -> Result<f64> {
    if upper == 0.0 {
        return Ok(0.0);
    }
    law.r_transform(upper)?;
    Ok(integrate(|z| law.r_raw(z).0, 0.0, upper, 1e-14))
}

fn psi_rs_parts(
    dbar: &SpectralLaw,
    field: &[(f64, f64)],
    q: f64,
    sigma: f64,
    a_star: f64,
    r_prime_star: f64,
) -> Result<f64> {
    let entropy = expect_hg(field, GAUSS_ORDER, |h, g| log2cosh(h + sigma * g))?;
    Ok(entropy + 0.5 * q * a_star - 0.5 * q * (1.0 - q) * r_prime_star + 0.5 * integral_r(dbar, 1.0 - q)?)
}

/// RS free energy of the Ising model.
pub fn psi_rs(model: &ModelSpec) -> Result<f64> {
    Ok(rs_constants(model)?.psi_rs)
}

/// Minimizer of the spherical RS objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSolution {
    pub value: f64,
    pub gamma: f64,
    pub second_derivative: f64,
}

/// `½ inf_{γ>d̄₊} { γ + E[𝖧²]Ḡ(γ) − ∫log(γ−x)dμ_D̄ − 1 }`.
pub fn psi_rs_sphere(model: &ModelSpec) -> Result<f64> {
    Ok(sphere_solve(model)?.value)
}

pub fn sphere_solve(model: &ModelSpec) -> Result<SphereSolution> {
    if !(model.beta < model.spectral.cauchy_at_dplus()) {
        return domain("beta must be below G(d+)");
    }
    let dbar = model.dbar();
    let m2 = model.field.moment(2);
    let dp = dbar.support_max();
    let lo = dp + 1e-6 * (1.0 + dp.abs());
    let phi = |g: f64| {
        let (gv, g1, g2) = dbar.g_raw(g);
        let value = g + m2 * gv - dbar.log_potential_raw(g) - 1.0;
        (value, 1.0 + m2 * g1 - gv, m2 * g2 - g1)
    };
    let ConvexMin { x, value, second_derivative, .. } = minimize_convex(phi, lo, 1.0);
    Ok(SphereSolution { value: 0.5 * value, gamma: x, second_derivative })
}
