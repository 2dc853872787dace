//! Limit spectral laws of the coupling matrix and their transforms.
//!
//! A [`SpectralLaw`] is the weak limit `μ_D` of the eigenvalue distribution.
//! The rescaled law of `βd` is `law.scaled(β)`; every transform below applies
//! unchanged to it.

mod field;

pub use field::FieldLaw;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::solve::bisect_newton;

/// Nodes of the Chebyshev rule used to integrate against the semicircle.
const SEMICIRCLE_NODES: usize = 512;

/// Compactly supported limit eigenvalue law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields, from = "LawRepr")]
pub enum SpectralLaw {
    /// Semicircle on `[-2, 2]` with variance 1.
    Semicircle,
    /// Atoms at `±1` with weight ½ each.
    Rademacher,
    /// Finitely many atoms.
    Discrete { values: Vec<f64>, weights: Vec<f64> },
    /// Law of `shift + scale·X` with `X ~ base`.
    ShiftedScaled { base: Box<SpectralLaw>, shift: f64, scale: f64 },
}

// serde ignores `deny_unknown_fields` on unit variants of internally tagged
// enums, so deserialization goes through empty struct variants.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum LawRepr {
    Semicircle {},
    Rademacher {},
    Discrete { values: Vec<f64>, weights: Vec<f64> },
    ShiftedScaled { base: Box<SpectralLaw>, shift: f64, scale: f64 },
}

impl From<LawRepr> for SpectralLaw {
    fn from(r: LawRepr) -> Self {
        match r {
            LawRepr::Semicircle {} => SpectralLaw::Semicircle,
            LawRepr::Rademacher {} => SpectralLaw::Rademacher,
            LawRepr::Discrete { values, weights } => SpectralLaw::Discrete { values, weights },
            LawRepr::ShiftedScaled { base, shift, scale } => SpectralLaw::ShiftedScaled { base, shift, scale },
        }
    }
}

/// Result of [`SpectralLaw::standardize`]: the original law is the law of
/// `shift + scale·X` with `X ~ law`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub law: SpectralLaw,
    pub shift: f64,
    pub scale: f64,
}

impl Standardized {
    /// Inverse temperature to use with the standardized law.
    pub fn effective_beta(&self, beta: f64) -> f64 {
        beta * self.scale
    }

    /// Per-spin free-energy offset `β·shift/2` from the identity part of `J`.
    /// For spins with `‖σ‖² = n` this is the only correction; the scale is
    /// absorbed into the effective β.
    pub fn free_energy_offset(&self, beta: f64) -> f64 {
        0.5 * beta * self.shift
    }
}

impl SpectralLaw {
    /// Discrete law with validated atoms and weights.
    pub fn discrete(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let law = SpectralLaw::Discrete { values, weights };
        law.validate()?;
        Ok(law)
    }

    /// Equal-weight discrete law, e.g. an empirical spectrum.
    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        let weights = vec![w; values.len()];
        Self::discrete(values, weights)
    }

    /// Law of `shift + scale·X`.
    pub fn shifted_scaled(base: SpectralLaw, shift: f64, scale: f64) -> Result<Self> {
        let law = SpectralLaw::ShiftedScaled { base: Box::new(base), shift, scale };
        law.validate()?;
        Ok(law)
    }

    /// Law of `βX`, the rescaled law `μ_D̄`.
    pub fn scaled(&self, beta: f64) -> SpectralLaw {
        match self {
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                SpectralLaw::ShiftedScaled { base: base.clone(), shift: beta * shift, scale: beta * scale }
            }
            other => SpectralLaw::ShiftedScaled { base: Box::new(other.clone()), shift: 0.0, scale: beta },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralLaw::Semicircle | SpectralLaw::Rademacher => Ok(()),
            SpectralLaw::Discrete { values, weights } => {
                if values.is_empty() {
                    return Err(Error::InvalidLaw("discrete law needs at least one atom".into()));
                }
                if values.len() != weights.len() {
                    return Err(Error::InvalidLaw(format!("{} values but {} weights", values.len(), weights.len())));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidLaw("atoms must be finite".into()));
                }
                if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                    return Err(Error::InvalidLaw("weights must be positive".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLaw(format!("weights sum to {total}, not 1")));
                }
                Ok(())
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                if !(*scale > 0.0) || !scale.is_finite() || !shift.is_finite() {
                    return Err(Error::InvalidLaw("scale must be positive and shift finite".into()));
                }
                base.validate()
            }
        }
    }

    /// `d₊`, the right end of the support.
    pub fn support_max(&self) -> f64 {
        match self {
            SpectralLaw::Semicircle => 2.0,
            SpectralLaw::Rademacher => 1.0,
            SpectralLaw::Discrete { values, .. } => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            SpectralLaw::ShiftedScaled { base, shift, scale } => shift + scale * base.support_max(),
        }
    }

    pub fn support_min(&self) -> f64 {
        match self {
            SpectralLaw::Semicircle => -2.0,
            SpectralLaw::Rademacher => -1.0,
            SpectralLaw::Discrete { values, .. } => values.iter().cloned().fold(f64::INFINITY, f64::min),
            SpectralLaw::ShiftedScaled { base, shift, scale } => shift + scale * base.support_min(),
        }
    }

    /// `‖μ‖_∞ = max |x|` over the support.
    pub fn norm_inf(&self) -> f64 {
        self.support_max().abs().max(self.support_min().abs())
    }

    /// Exact moment `∫ x^k dμ`.
    pub fn moment(&self, k: usize) -> f64 {
        match self {
            SpectralLaw::Semicircle => {
                if k % 2 == 1 {
                    0.0
                } else {
                    catalan(k / 2)
                }
            }
            SpectralLaw::Rademacher => {
                if k % 2 == 1 {
                    0.0
                } else {
                    1.0
                }
            }
            SpectralLaw::Discrete { values, weights } => {
                values.iter().zip(weights).map(|(&x, &w)| w * x.powi(k as i32)).sum()
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                let mut total = 0.0;
                let mut binom = 1.0;
                for j in 0..=k {
                    total += binom * shift.powi((k - j) as i32) * scale.powi(j as i32) * base.moment(j);
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
                total
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        match self {
            SpectralLaw::Semicircle | SpectralLaw::Rademacher => 1.0,
            SpectralLaw::Discrete { values, weights } => {
                let m = self.mean();
                values.iter().zip(weights).map(|(&x, &w)| w * (x - m) * (x - m)).sum()
            }
            SpectralLaw::ShiftedScaled { base, scale, .. } => scale * scale * base.variance(),
        }
    }

    /// Affine normalization to mean 0 and variance 1.
    pub fn standardize(&self) -> Result<Standardized> {
        self.validate()?;
        let var = self.variance();
        if var < 1e-14 {
            return Err(Error::ZeroVariance(var));
        }
        match self {
            SpectralLaw::Semicircle | SpectralLaw::Rademacher => {
                Ok(Standardized { law: self.clone(), shift: 0.0, scale: 1.0 })
            }
            SpectralLaw::Discrete { values, weights } => {
                let m = self.mean();
                let sd = var.sqrt();
                let atoms = values.iter().map(|&x| (x - m) / sd).collect();
                Ok(Standardized {
                    law: SpectralLaw::Discrete { values: atoms, weights: weights.clone() },
                    shift: m,
                    scale: sd,
                })
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                let inner = base.standardize()?;
                Ok(Standardized { law: inner.law, shift: shift + scale * inner.shift, scale: scale * inner.scale })
            }
        }
    }

    /// True when mean is 0 and variance is 1 to 1e-10.
    pub fn is_standardized(&self) -> bool {
        self.mean().abs() <= 1e-10 && (self.variance() - 1.0).abs() <= 1e-10
    }

    fn check_above_support(&self, gamma: f64) -> Result<()> {
        let dp = self.support_max();
        if !(gamma > dp) || !gamma.is_finite() {
            return domain(format!("argument {gamma} must exceed d+ = {dp}"));
        }
        Ok(())
    }

    /// Cauchy transform `G(γ) = ∫ (γ−x)⁻¹ dμ` for `γ > d₊`.
    pub fn cauchy(&self, gamma: f64) -> Result<f64> {
        self.check_above_support(gamma)?;
        Ok(self.g_raw(gamma).0)
    }

    /// `G′(γ)`.
    pub fn cauchy_d1(&self, gamma: f64) -> Result<f64> {
        self.check_above_support(gamma)?;
        Ok(self.g_raw(gamma).1)
    }

    /// `G″(γ)`.
    pub fn cauchy_d2(&self, gamma: f64) -> Result<f64> {
        self.check_above_support(gamma)?;
        Ok(self.g_raw(gamma).2)
    }

    /// `(G, G′, G″)` at `γ`, which must exceed `d₊`.
    pub(crate) fn g_raw(&self, gamma: f64) -> (f64, f64, f64) {
        match self {
            SpectralLaw::Semicircle => {
                let s = ((gamma - 2.0) * (gamma + 2.0)).sqrt();
                let g = 2.0 / (gamma + s);
                (g, -g / s, 2.0 / (s * s * s))
            }
            SpectralLaw::Rademacher => {
                let (a, b) = (1.0 / (gamma - 1.0), 1.0 / (gamma + 1.0));
                (0.5 * (a + b), -0.5 * (a * a + b * b), a * a * a + b * b * b)
            }
            SpectralLaw::Discrete { values, weights } => {
                let mut out = (0.0, 0.0, 0.0);
                for (&x, &w) in values.iter().zip(weights) {
                    let r = 1.0 / (gamma - x);
                    out.0 += w * r;
                    out.1 -= w * r * r;
                    out.2 += 2.0 * w * r * r * r;
                }
                out
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                let (g, g1, g2) = base.g_raw((gamma - shift) / scale);
                (g / scale, g1 / (scale * scale), g2 / (scale * scale * scale))
            }
        }
    }

    /// `G(d₊) = lim_{z↓d₊} G(z)`; `+∞` when an atom sits at `d₊`.
    pub fn cauchy_at_dplus(&self) -> f64 {
        match self {
            SpectralLaw::Semicircle => 1.0,
            SpectralLaw::Rademacher | SpectralLaw::Discrete { .. } => f64::INFINITY,
            SpectralLaw::ShiftedScaled { base, scale, .. } => base.cauchy_at_dplus() / scale,
        }
    }

    fn check_transform_domain(&self, alpha: f64) -> Result<()> {
        let top = self.cauchy_at_dplus();
        if !(alpha > 0.0 && alpha < top) || !alpha.is_finite() {
            return domain(format!("argument {alpha} outside (0, G(d+) = {top})"));
        }
        Ok(())
    }

    /// Functional inverse of `G` on `(d₊, ∞)`.
    pub fn cauchy_inverse(&self, alpha: f64) -> Result<f64> {
        self.check_transform_domain(alpha)?;
        Ok(self.g_inv_raw(alpha))
    }

    pub(crate) fn g_inv_raw(&self, alpha: f64) -> f64 {
        match self {
            SpectralLaw::Semicircle => alpha + 1.0 / alpha,
            SpectralLaw::Rademacher => (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt()) / (2.0 * alpha),
            SpectralLaw::Discrete { .. } => self.g_inv_numeric(alpha),
            SpectralLaw::ShiftedScaled { base, shift, scale } => shift + scale * base.g_inv_raw(scale * alpha),
        }
    }

    /// Bracketed bisection then Newton polish; used for atomic laws and as a
    /// cross-check of the closed forms.
    pub fn g_inv_numeric(&self, alpha: f64) -> f64 {
        let dp = self.support_max();
        let hi = dp + 1.0 / alpha + self.norm_inf() + 1.0;
        let mut eps = 1.0;
        while self.g_raw(dp + eps).0 <= alpha && eps > 1e-300 {
            eps *= 0.5;
        }
        let lo = dp + eps;
        bisect_newton(|g| self.g_raw(g).0 - alpha, |g| self.g_raw(g).1, lo, hi, 1e-8, 5)
    }

    /// R-transform `R(z) = G⁻¹(z) − 1/z`.
    pub fn r_transform(&self, z: f64) -> Result<f64> {
        self.check_transform_domain(z)?;
        Ok(self.r_raw(z).0)
    }

    /// `R′(z)`, from `R′(z) = 1/G′(G⁻¹(z)) + 1/z²` or a closed form.
    pub fn r_prime(&self, z: f64) -> Result<f64> {
        self.check_transform_domain(z)?;
        Ok(self.r_raw(z).1)
    }

    /// `R″(z)`, from `R″(z) = −G″(γ)/G′(γ)³ − 2/z³` with `γ = G⁻¹(z)` or a
    /// closed form.
    pub fn r_second(&self, z: f64) -> Result<f64> {
        self.check_transform_domain(z)?;
        Ok(self.r_raw(z).2)
    }

    /// `(R, R′, R″)` at `z` inside the transform domain.
    pub(crate) fn r_raw(&self, z: f64) -> (f64, f64, f64) {
        match self {
            SpectralLaw::Semicircle => (z, 1.0, 0.0),
            SpectralLaw::Rademacher => {
                let s = (1.0 + 4.0 * z * z).sqrt();
                let r = 2.0 * z / (1.0 + s);
                let r1 = 2.0 / (s * (1.0 + s));
                let denom = s + s * s;
                let r2 = -8.0 * z * (1.0 + 2.0 * s) / (s * denom * denom);
                (r, r1, r2)
            }
            SpectralLaw::Discrete { .. } => self.r_via_identities(z),
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                let (r, r1, r2) = base.r_raw(scale * z);
                (shift + scale * r, scale * scale * r1, scale * scale * scale * r2)
            }
        }
    }

    /// `(R, R′, R″)` computed from the inverse Cauchy transform and the
    /// derivative identities, for any variant.
    pub fn r_via_identities(&self, z: f64) -> (f64, f64, f64) {
        let gamma = match self {
            SpectralLaw::Discrete { .. } => self.g_inv_numeric(z),
            _ => self.g_inv_raw(z),
        };
        let (_, g1, g2) = self.g_raw(gamma);
        let r = gamma - 1.0 / z;
        let r1 = 1.0 / g1 + 1.0 / (z * z);
        let r2 = -g2 / (g1 * g1 * g1) - 2.0 / (z * z * z);
        (r, r1, r2)
    }

    /// `∫ log(γ−x) dμ` for `γ > d₊`.
    pub fn log_potential(&self, gamma: f64) -> Result<f64> {
        self.check_above_support(gamma)?;
        Ok(self.log_potential_raw(gamma))
    }

    pub(crate) fn log_potential_raw(&self, gamma: f64) -> f64 {
        match self {
            SpectralLaw::Semicircle => {
                let g = self.g_raw(gamma).0;
                -g.ln() + 0.5 * g * g
            }
            SpectralLaw::Rademacher => 0.5 * ((gamma - 1.0).ln() + (gamma + 1.0).ln()),
            SpectralLaw::Discrete { values, weights } => {
                values.iter().zip(weights).map(|(&x, &w)| w * (gamma - x).ln()).sum()
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                scale.ln() + base.log_potential_raw((gamma - shift) / scale)
            }
        }
    }

    /// `∫ f dμ`: exact for atoms, Chebyshev quadrature for the semicircle.
    pub fn integrate(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            SpectralLaw::Semicircle => {
                let n = SEMICIRCLE_NODES;
                let h = std::f64::consts::PI / (n as f64 + 1.0);
                (1..=n)
                    .map(|k| {
                        let th = k as f64 * h;
                        let s = th.sin();
                        2.0 / (n as f64 + 1.0) * s * s * f(2.0 * th.cos())
                    })
                    .sum()
            }
            SpectralLaw::Rademacher => 0.5 * (f(1.0) + f(-1.0)),
            SpectralLaw::Discrete { values, weights } => values.iter().zip(weights).map(|(&x, &w)| w * f(x)).sum(),
            SpectralLaw::ShiftedScaled { base, shift, scale } => {
                let (s, c) = (*shift, *scale);
                base.integrate(&|y| f(s + c * y))
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            SpectralLaw::Semicircle => {
                if x <= -2.0 {
                    0.0
                } else if x >= 2.0 {
                    1.0
                } else {
                    0.5 + x * (4.0 - x * x).sqrt() / (4.0 * std::f64::consts::PI)
                        + (0.5 * x).asin() / std::f64::consts::PI
                }
            }
            SpectralLaw::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            SpectralLaw::Discrete { values, weights } => {
                values.iter().zip(weights).filter(|(&v, _)| v <= x).map(|(_, &w)| w).sum()
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => base.cdf((x - shift) / scale),
        }
    }

    /// Generalized inverse CDF, `inf {x : F(x) ≥ p}`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            SpectralLaw::Semicircle => {
                if p <= 0.0 {
                    return -2.0;
                }
                if p >= 1.0 {
                    return 2.0;
                }
                bisect_newton(
                    |x| self.cdf(x) - p,
                    |x| (4.0 - x * x).max(0.0).sqrt() / (2.0 * std::f64::consts::PI),
                    -2.0,
                    2.0,
                    1e-12,
                    8,
                )
            }
            SpectralLaw::Rademacher => {
                if p <= 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            SpectralLaw::Discrete { values, weights } => {
                let mut atoms: Vec<(f64, f64)> = values.iter().cloned().zip(weights.iter().cloned()).collect();
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut acc = 0.0;
                for &(x, w) in &atoms {
                    acc += w;
                    if acc >= p - 1e-14 {
                        return x;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => shift + scale * base.quantile(p),
        }
    }

    /// One iid draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SpectralLaw::Semicircle => {
                // First coordinate of a uniform point in the disk of radius 2.
                let r = 2.0 * rng.gen::<f64>().sqrt();
                let th = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                r * th.cos()
            }
            SpectralLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SpectralLaw::Discrete { values, weights } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (&x, &w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return x;
                    }
                }
                *values.last().unwrap()
            }
            SpectralLaw::ShiftedScaled { base, shift, scale } => shift + scale * base.sample(rng),
        }
    }

    /// Free cumulants `κ₁..κ_{k_max}` from exact moments through the free
    /// moment-cumulant recursion.
    pub fn free_cumulants(&self, k_max: usize) -> Result<Vec<f64>> {
        if k_max > 16 {
            return domain(format!("k_max = {k_max} exceeds 16"));
        }
        let moments: Vec<f64> = (0..=k_max).map(|k| self.moment(k)).collect();
        Ok(free_cumulants_from_moments(&moments))
    }
}

/// Inverts `m_n = Σ_{s=1}^n κ_s Σ_{i₁+…+i_s=n−s} m_{i₁}…m_{i_s}`. `moments[0]`
/// must be 1; returns `κ₁..κ_K` for `K = moments.len() − 1`.
pub fn free_cumulants_from_moments(moments: &[f64]) -> Vec<f64> {
    let k = moments.len().saturating_sub(1);
    // powers[s][r] = [z^r] M(z)^s.
    let mut powers = vec![vec![0.0; k + 1]; k + 1];
    powers[0][0] = 1.0;
    for s in 1..=k {
        for r in 0..=k {
            powers[s][r] = (0..=r).map(|i| moments[i] * powers[s - 1][r - i]).sum();
        }
    }
    let mut kappa = vec![0.0; k + 1];
    for n in 1..=k {
        let lower: f64 = (1..n).map(|s| kappa[s] * powers[s][n - s]).sum();
        kappa[n] = moments[n] - lower;
    }
    kappa.remove(0);
    kappa
}

fn catalan(k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * 2.0 * (2 * i + 1) as f64 / (i + 2) as f64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalan_numbers() {
        let got: Vec<f64> = (0..6).map(catalan).collect();
        assert_eq!(got, vec![1.0, 1.0, 2.0, 5.0, 14.0, 42.0]);
    }

    #[test]
    fn log_potential_matches_integral_of_cauchy() {
        // d/dγ ∫log(γ−x) = G(γ).
        for law in [SpectralLaw::Semicircle, SpectralLaw::Rademacher] {
            let h = 1e-5;
            let g = 3.1;
            let fd = (law.log_potential_raw(g + h) - law.log_potential_raw(g - h)) / (2.0 * h);
            assert!((fd - law.g_raw(g).0).abs() < 1e-9);
        }
        let lp = SpectralLaw::Semicircle.integrate(&|x| (5.0 - x).ln());
        assert!((lp - SpectralLaw::Semicircle.log_potential_raw(5.0)).abs() < 1e-12);
    }

    #[test]
    fn scaled_law_composes() {
        let law = SpectralLaw::Semicircle.scaled(0.5).scaled(2.0);
        assert!((law.variance() - 1.0).abs() < 1e-15);
        assert_eq!(law.support_max(), 2.0);
    }
}
