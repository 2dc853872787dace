//! HCIZ exponents, the closed-form infima over `γ`, and the first- and
//! second-moment variational functions at their stationary points.

mod gradcheck;
mod hciz;
mod phi;
mod sym2;

pub use gradcheck::{gradcheck, GradcheckReport};
pub use hciz::{
    default_epsilon, hciz_monte_carlo, hciz_rank1, hciz_rank2, HcizMonteCarlo, Rank1Exponent, Rank2Exponent,
};
pub use phi::{
    concavity_probe, phi1_stationary, phi2_stationary, Basis, ConcavityReport, McSamples, Phi1, Phi1Point, Phi2,
    Phi2Point, Stationary1Report, Stationary2Report,
};
pub use sym2::Sym2;

use crate::error::{domain, Result};
use crate::rs_core::{integral_r, ModelSpec, RSConstants};
use crate::solve::minimize_convex;
use crate::spectral_law::SpectralLaw;

/// `𝓗(γ, α) = γα − ∫log(γ−x)dμ − (1 + log α)` for the given (rescaled) law.
pub fn h_func(gamma: f64, alpha: f64, law: &SpectralLaw) -> Result<f64> {
    if !(alpha > 0.0) {
        return domain(format!("alpha = {alpha} must be positive"));
    }
    Ok(gamma * alpha - law.log_potential(gamma)? - (1.0 + alpha.ln()))
}

/// `∂_γ𝓗(γ, α) = α − G(γ)`.
pub fn h_func_dgamma(gamma: f64, alpha: f64, law: &SpectralLaw) -> Result<f64> {
    Ok(alpha - law.cauchy(gamma)?)
}

/// Constants entering the weight of `𝓕`.
#[derive(Debug, Clone)]
pub struct FWeight {
    pub dbar: SpectralLaw,
    pub q_star: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub a_star: f64,
}

impl FWeight {
    pub fn new(model: &ModelSpec, constants: &RSConstants) -> Self {
        FWeight {
            dbar: model.dbar(),
            q_star: constants.q_star,
            kappa: constants.kappa_star,
            lambda: constants.lambda_star,
            a_star: constants.a_star,
        }
    }

    /// `x + (a*/κ*)(1 − 1/((1−q*)(λ*−x)))`.
    pub fn omega(&self, x: f64) -> f64 {
        x + self.a_star / self.kappa * (1.0 - 1.0 / ((1.0 - self.q_star) * (self.lambda - x)))
    }

    fn check(&self, gamma: f64) -> Result<()> {
        let dp = self.dbar.support_max();
        if !(gamma > dp) || !gamma.is_finite() {
            return domain(format!("gamma = {gamma} must exceed {dp}"));
        }
        Ok(())
    }

    /// `𝓕(γ) = ∫ ω(x)²/(γ−x) dμ_D̄`.
    pub fn f(&self, gamma: f64) -> Result<f64> {
        self.check(gamma)?;
        Ok(self.dbar.integrate(&|x| self.omega(x).powi(2) / (gamma - x)))
    }

    /// `𝓕′(γ)`.
    pub fn f_prime(&self, gamma: f64) -> Result<f64> {
        self.check(gamma)?;
        Ok(-self.dbar.integrate(&|x| (self.omega(x) / (gamma - x)).powi(2)))
    }

    fn check_matrix(&self, g: &Sym2) -> Result<()> {
        let dp = self.dbar.support_max();
        if !(g.eigen().values[1] > dp) {
            return domain(format!("matrix {g:?} is not above {dp}·I"));
        }
        Ok(())
    }

    /// `𝓕(γ,ν,ρ) = ∫ (Γ−x)⁻¹ ω(x)² dμ_D̄`.
    pub fn f2(&self, g: &Sym2) -> Result<Sym2> {
        self.check_matrix(g)?;
        Ok(Sym2::integrate(&self.dbar, |x| g.shifted(-x).inverse().scaled(self.omega(x).powi(2))))
    }

    /// `∂_θ𝓕(γ,ν,ρ) = −∫ (Γ−x)⁻¹E_θ(Γ−x)⁻¹ ω² dμ_D̄` for `θ = γ, ν, ρ`.
    pub fn f2_partials(&self, g: &Sym2) -> Result<[Sym2; 3]> {
        self.check_matrix(g)?;
        let part = |e: Sym2| {
            Sym2::integrate(&self.dbar, |x| {
                let k = g.shifted(-x).inverse();
                k.sandwich(&e).scaled(-self.omega(x).powi(2))
            })
        };
        Ok([part(Sym2::E_GAMMA), part(Sym2::E_NU), part(Sym2::E_RHO)])
    }
}

/// `𝓕(γ)` for a model and its constants.
pub fn f_func(gamma: f64, model: &ModelSpec, constants: &RSConstants) -> Result<f64> {
    FWeight::new(model, constants).f(gamma)
}

/// `𝓕(γ,ν,ρ)` for a model and its constants.
pub fn f2_func(gamma: f64, nu: f64, rho: f64, model: &ModelSpec, constants: &RSConstants) -> Result<Sym2> {
    FWeight::new(model, constants).f2(&Sym2::new(gamma, nu, rho))
}

/// Closed form and direct minimization of `inf_γ 𝓗(γ, α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfGamma {
    /// `∫₀^α R(z)dz`.
    pub closed: f64,
    /// `G⁻¹(α) = R(α) + 1/α`.
    pub closed_argmin: f64,
    pub numeric: f64,
    pub numeric_argmin: f64,
    pub second_derivative: f64,
}

pub fn inf_gamma_closed(alpha: f64, law: &SpectralLaw) -> Result<InfGamma> {
    let closed = integral_r(law, alpha)?;
    let closed_argmin = law.r_transform(alpha)? + 1.0 / alpha;
    let dp = law.support_max();
    let lo = dp + 1e-10 * (1.0 + dp.abs());
    let phi = |g: f64| {
        let (gv, g1, _) = law.g_raw(g);
        (g * alpha - law.log_potential_raw(g) - 1.0 - alpha.ln(), alpha - gv, -g1)
    };
    let m = minimize_convex(phi, lo, 1.0 / alpha);
    Ok(InfGamma {
        closed,
        closed_argmin,
        numeric: m.value,
        numeric_argmin: m.x,
        second_derivative: m.second_derivative,
    })
}

/// Closed form `Tr f(A)` and a three-parameter Newton minimization of the
/// matrix objective over `Γ ≻ d₊I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfGammaMatrix {
    pub closed: f64,
    /// `G⁻¹(A)` by functional calculus.
    pub closed_argmin: Sym2,
    pub numeric: f64,
    pub numeric_argmin: Sym2,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub fn inf_gamma_matrix(a: &Sym2, law: &SpectralLaw) -> Result<InfGammaMatrix> {
    let eig = a.eigen();
    let top = law.cauchy_at_dplus();
    if !(eig.values[1] > 0.0 && eig.values[0] < top) {
        return domain(format!("A must satisfy 0 < A < G(d+)I, eigenvalues {:?}", eig.values));
    }
    let closed = integral_r(law, eig.values[0])? + integral_r(law, eig.values[1])?;
    let closed_argmin = eig.map(|x| law.g_inv_raw(x));
    let logdet_a = a.det().ln();
    let dp = law.support_max();

    let objective = |g: &Sym2| -> Option<f64> {
        let e = g.eigen();
        if !(e.values[1] > dp) {
            return None;
        }
        Some(
            g.trace_product(a)
                - law.log_potential_raw(e.values[0])
                - law.log_potential_raw(e.values[1])
                - 2.0
                - logdet_a,
        )
    };
    let gradient = |g: &Sym2| -> [f64; 3] {
        let cauchy = g.eigen().map(|x| law.g_raw(x).0);
        let diff = a.sub(&cauchy);
        [diff.a, 2.0 * diff.b, diff.c]
    };
    let hessian = |g: &Sym2| -> [[f64; 3]; 3] {
        // Second derivative of −Σ L(λᵢ(Γ)) by the Daleckii–Krein formula with
        // first divided differences of G.
        g.eigen().trace_hessian(|x| law.g_raw(x).0, |x| law.g_raw(x).1, -1.0)
    };
    let start = Sym2::new(1.0, 0.0, 1.0).scaled(law.g_inv_raw(0.5 * a.trace()));
    let newton = sym2::newton3(start, objective, gradient, hessian, 1e-13, 200)?;
    Ok(InfGammaMatrix {
        closed,
        closed_argmin,
        numeric: newton.value,
        numeric_argmin: newton.point,
        iterations: newton.iterations,
        grad_norm: newton.grad_norm,
    })
}
