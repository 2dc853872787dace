//! Finite-n HCIZ exponents and a Monte Carlo estimate of the rank-one
//! integral.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::sym2::{newton3, Sym2};
use crate::error::{domain, Error, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::{stream_rng, Stream};
use crate::solve::minimize_convex;

/// Barrier offset `ε = 1e-6·(1 + |d₊|)`.
pub fn default_epsilon(dplus: f64) -> f64 {
    1e-6 * (1.0 + dplus.abs())
}

/// Minimizer of the rank-one exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Exponent {
    pub n: usize,
    /// `‖a‖²/n`.
    pub alpha: f64,
    pub epsilon: f64,
    pub dplus: f64,
    pub gamma_opt: f64,
    pub value: f64,
    /// `α − F_n(γ)` at the optimizer.
    pub derivative: f64,
    pub second_derivative: f64,
    /// Set when `F_n(d₊+ε) ≤ α`, so the infimum sits at `γ = d₊+ε`.
    pub at_boundary: bool,
}

fn check_vectors(n: usize, vs: &[&[f64]]) -> Result<()> {
    if n == 0 {
        return domain("vectors must be nonempty");
    }
    if vs.iter().any(|v| v.len() != n) {
        return domain("vector lengths disagree");
    }
    if vs.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return domain("vector entries must be finite");
    }
    Ok(())
}

/// `inf_{γ ≥ d₊+ε} { γ‖a‖²/n + bᵀ(γ−D)⁻¹b/n − n⁻¹log det(γ−D) − 1 − log(‖a‖²/n) }`
/// for diagonal `D = diag(d)`. The derivative is `α − F_n(γ)` with
/// `F_n(γ) = n⁻¹Σ[(γ−dᵢ)⁻¹ + bᵢ²(γ−dᵢ)⁻²]`, which decreases in `γ`.
pub fn hciz_rank1(a: &[f64], b: &[f64], d: &[f64], epsilon: f64) -> Result<Rank1Exponent> {
    let n = d.len();
    check_vectors(n, &[a, b, d])?;
    let nf = n as f64;
    let alpha = a.iter().map(|x| x * x).sum::<f64>() / nf;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InfeasibleAlpha(alpha));
    }
    if !(epsilon > 0.0) {
        return domain("epsilon must be positive");
    }
    let dplus = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = dplus + epsilon;
    let phi = |g: f64| {
        let (mut quad, mut logdet, mut f1, mut f2) = (0.0, 0.0, 0.0, 0.0);
        for (&di, &bi) in d.iter().zip(b) {
            let r = 1.0 / (g - di);
            let b2 = bi * bi;
            quad += b2 * r;
            logdet += (g - di).ln();
            f1 += r + b2 * r * r;
            f2 += r * r + 2.0 * b2 * r * r * r;
        }
        (g * alpha + quad / nf - logdet / nf - 1.0 - alpha.ln(), alpha - f1 / nf, f2 / nf)
    };
    let m = minimize_convex(phi, lo, 1.0 / alpha);
    Ok(Rank1Exponent {
        n,
        alpha,
        epsilon,
        dplus,
        gamma_opt: m.x,
        value: m.value,
        derivative: m.derivative,
        second_derivative: m.second_derivative,
        at_boundary: m.at_boundary,
    })
}

/// Minimizer of the rank-two exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank2Exponent {
    pub n: usize,
    /// `n⁻¹` Gram matrix of `(a, c)`.
    pub gram: Sym2,
    pub epsilon: f64,
    pub dplus: f64,
    pub optimum: Sym2,
    pub value: f64,
    pub gradient: [f64; 3],
    pub grad_norm: f64,
    pub iterations: usize,
    pub boundary_active: bool,
}

/// Rank-two exponent over `Γ ⪰ (d₊+ε)I` by damped Newton in `(γ, ν, ρ)`.
/// The vector `bd` is the second linear coefficient (`d` in the block form).
pub fn hciz_rank2(a: &[f64], b: &[f64], c: &[f64], bd: &[f64], eigs: &[f64], epsilon: f64) -> Result<Rank2Exponent> {
    let n = eigs.len();
    check_vectors(n, &[a, b, c, bd, eigs])?;
    let nf = n as f64;
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / nf;
    let gram = Sym2::new(dot(a, a), dot(a, c), dot(c, c));
    let gdet = gram.det();
    if !(gram.a > 0.0 && gdet > 1e-14 * gram.a * gram.c) {
        return Err(Error::SingularGram(gdet));
    }
    if !(epsilon > 0.0) {
        return domain("epsilon must be positive");
    }
    let logdet_gram = gdet.ln();
    let dplus = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = dplus + epsilon;

    let objective = |g: &Sym2| -> Option<f64> {
        if !(g.eigen().values[1] >= floor) {
            return None;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let m = g.shifted(-eigs[i]);
            let s = [b[i], bd[i]];
            acc += m.inverse().bilinear(s, s) - m.det().ln();
        }
        Some(g.trace_product(&gram) + acc / nf - 2.0 - logdet_gram)
    };
    let gradient = |g: &Sym2| -> [f64; 3] {
        let mut out = [g_part(&gram, 0), g_part(&gram, 1), g_part(&gram, 2)];
        for i in 0..n {
            let k = g.shifted(-eigs[i]).inverse();
            let t = k.apply([b[i], bd[i]]);
            let quad = [t[0] * t[0], 2.0 * t[0] * t[1], t[1] * t[1]];
            let logd = [k.a, 2.0 * k.b, k.c];
            for p in 0..3 {
                out[p] -= (quad[p] + logd[p]) / nf;
            }
        }
        out
    };
    let hessian = |g: &Sym2| -> [[f64; 3]; 3] {
        let dirs = [Sym2::E_GAMMA, Sym2::E_NU, Sym2::E_RHO];
        let mut h = [[0.0; 3]; 3];
        for i in 0..n {
            let k = g.shifted(-eigs[i]).inverse();
            let t = k.apply([b[i], bd[i]]);
            let et: Vec<[f64; 2]> = dirs.iter().map(|e| e.apply(t)).collect();
            let ke: Vec<Sym2> = dirs.iter().map(|e| k.sandwich(e)).collect();
            for p in 0..3 {
                for q in 0..3 {
                    // 2 tᵀE_p K E_q t + Tr(K E_p K E_q)
                    let quad = 2.0 * k.bilinear(et[p], et[q]);
                    let tr = ke[p].trace_product(&dirs[q]);
                    h[p][q] += (quad + tr) / nf;
                }
            }
        }
        h
    };
    let g0 = gram.eigen();
    let start = Sym2::new(1.0, 0.0, 1.0).scaled(floor + 1.0 / g0.values[0].max(1e-300) + 1.0);
    let res = newton3(start, objective, gradient, hessian, 1e-11, 300)?;
    Ok(Rank2Exponent {
        n,
        gram,
        epsilon,
        dplus,
        optimum: res.point,
        value: res.value,
        gradient: res.gradient,
        grad_norm: res.grad_norm,
        iterations: res.iterations,
        boundary_active: res.boundary_active,
    })
}

fn g_part(gram: &Sym2, p: usize) -> f64 {
    match p {
        0 => gram.a,
        1 => 2.0 * gram.b,
        _ => gram.c,
    }
}

/// Monte Carlo estimate of `(2/n) log E_O exp(bᵀOa + ½aᵀOᵀDOa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcizMonteCarlo {
    pub n: usize,
    pub draws: usize,
    pub shards: usize,
    /// `(2/n) log` of the sample mean.
    pub exponent: f64,
    /// Effective sample size of the exponential weights.
    pub ess: f64,
}

/// Uses `Oa =ᵈ ‖a‖·g/‖g‖` for Gaussian `g`, so each draw costs `O(n)`.
/// Shards use derived streams and are merged in shard order.
pub fn hciz_monte_carlo(
    a: &[f64],
    b: &[f64],
    d: &[f64],
    draws: usize,
    shards: usize,
    seed: u64,
    exec: Execution,
) -> Result<HcizMonteCarlo> {
    let n = d.len();
    check_vectors(n, &[a, b, d])?;
    if draws == 0 || shards == 0 || draws % shards != 0 {
        return domain("draws must be a positive multiple of shards");
    }
    let anorm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let per = draws / shards;
    let parts = map_indexed(exec, shards, |s| {
        let mut rng = stream_rng(seed, Stream::MonteCarlo, s as u64);
        let mut g = vec![0.0; n];
        // (max, Σexp(e−max), Σexp(2e−2max))
        let (mut mx, mut s1, mut s2) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
        for _ in 0..per {
            let mut norm2 = 0.0;
            for gi in g.iter_mut() {
                *gi = rng.sample(StandardNormal);
                norm2 += *gi * *gi;
            }
            let (mut lin, mut quad) = (0.0, 0.0);
            for i in 0..n {
                lin += b[i] * g[i];
                quad += d[i] * g[i] * g[i];
            }
            let e = anorm * lin / norm2.sqrt() + 0.5 * anorm * anorm * quad / norm2;
            if e > mx {
                let r = (mx - e).exp();
                s1 = s1 * r + 1.0;
                s2 = s2 * r * r + 1.0;
                mx = e;
            } else {
                let r = (e - mx).exp();
                s1 += r;
                s2 += r * r;
            }
        }
        (mx, s1, s2)
    });
    let mx = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for &(m, a1, a2) in &parts {
        let r = (m - mx).exp();
        s1 += a1 * r;
        s2 += a2 * r * r;
    }
    let log_mean = mx + s1.ln() - (draws as f64).ln();
    Ok(HcizMonteCarlo { n, draws, shards, exponent: 2.0 / n as f64 * log_mean, ess: s1 * s1 / s2 })
}
