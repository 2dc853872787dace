//! The first- and second-moment variational functions `Φ₁,t` and `Φ₂,t`.
//!
//! Vector arguments are expressed in the coordinates of a factor `C` with
//! `CCᵀ = Δ_t`, so `Δ_t^{−1/2}` is replaced by `C⁻¹` and `Δ_t^{1/2}e_t` by
//! `Cᵀe_t`. For `C = Δ_t^{1/2}` this is the literal definition; any other
//! factor is `Δ_t^{1/2}Qᵀ` for an orthogonal `Q`, and both functions are
//! invariant under rotating every vector argument by `Q`. The triangular
//! factor built from the state-evolution increments stays accurate when
//! `Δ_t` is numerically singular, which the symmetric root does not.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::sym2::Sym2;
use super::{h_func, FWeight};
use crate::error::{domain, Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::rs_core::{expect_hg, log2cosh, ModelSpec, RSConstants, GAUSS_ORDER};
use crate::spectral_law::{FieldLaw, SpectralLaw};
use crate::state_evolution::SEState;

/// Which square root of `Δ_t` fixes the coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Triangular factor from the increments of `Δ_t`.
    #[default]
    Factor,
    /// `Δ_t^{1/2}` by symmetric eigendecomposition.
    SymmetricRoot,
}

/// Model constants shared by both functions.
#[derive(Debug, Clone)]
struct Common {
    t: usize,
    q: f64,
    sigma: f64,
    kappa: f64,
    lambda: f64,
    a_star: f64,
    dbar: SpectralLaw,
    field: FieldLaw,
    field_nodes: Vec<(f64, f64)>,
    weight: FWeight,
    c: DMatrix<f64>,
    basis: Basis,
    /// `Cᵀe_t`.
    top_row: Vec<f64>,
}

impl Common {
    fn new(model: &ModelSpec, constants: &RSConstants, se: &SEState, t: usize, basis: Basis) -> Result<Self> {
        if t == 0 || se.t < t {
            return domain(format!("need 1 <= t <= {} for this state", se.t));
        }
        let sub = se.truncated(t);
        let c = match basis {
            Basis::Factor => sub.factor()?,
            Basis::SymmetricRoot => {
                let eig = sub.matrix().symmetric_eigen();
                let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
            }
        };
        let top_row = (0..t).map(|j| c[(t - 1, j)]).collect();
        Ok(Common {
            t,
            q: constants.q_star,
            sigma: constants.sigma_star_sq.sqrt(),
            kappa: constants.kappa_star,
            lambda: constants.lambda_star,
            a_star: constants.a_star,
            dbar: model.dbar(),
            field: model.field.clone(),
            field_nodes: model.field.nodes()?,
            weight: FWeight::new(model, constants),
            c,
            basis,
            top_row,
        })
    }

    /// `C⁻¹x`.
    fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = DVector::from_column_slice(x);
        let y = match self.basis {
            Basis::Factor => self.c.solve_lower_triangular(&v),
            Basis::SymmetricRoot => self.c.clone().lu().solve(&v),
        };
        y.map(|y| y.iter().cloned().collect())
            .ok_or_else(|| Error::Domain("square root of the Gram matrix is singular".into()))
    }

    fn f(&self, h: f64, y: f64) -> f64 {
        (h + y).tanh() / (1.0 - self.q) - y
    }

    fn expect(&self, phi: impl Fn(f64, f64) -> f64) -> Result<f64> {
        expect_hg(&self.field_nodes, GAUSS_ORDER, phi)
    }

    /// `E log 2cosh(𝖧+σ*𝖦)`, `E[𝖧 tanh]`, `E tanh²` and `E[𝖦 tanh]/σ*`.
    fn starred_expectations(&self) -> Result<(f64, f64, f64, f64)> {
        let s = self.sigma;
        let lc = self.expect(|h, g| log2cosh(h + s * g))?;
        let ht = self.expect(|h, g| h * (h + s * g).tanh())?;
        let t2 = self.expect(|h, g| (h + s * g).tanh().powi(2))?;
        let gt = if s > 1e-8 {
            self.expect(|h, g| g * (h + s * g).tanh())? / s
        } else {
            self.expect(|h, _| 1.0 - h.tanh().powi(2))?
        };
        Ok((lc, ht, t2, gt))
    }

    /// `(1−q*)C⁻¹r` with `r_s = δ_{s,t+1} − δ_{s,t}` from the deviations.
    fn d_big_v(&self, se: &SEState) -> Result<Vec<f64>> {
        let t = self.t;
        if se.t < t + 1 {
            return domain(format!("the V partial needs state evolution up to t = {}", t + 1));
        }
        let r: Vec<f64> = (0..t).map(|s| se.dev[s][t - 1] - se.dev[s][t]).collect();
        Ok(self.whiten(&r)?.into_iter().map(|x| (1.0 - self.q) * x).collect())
    }

    /// Same norm through a dense Cholesky of `Δ_t` and direct differences.
    fn d_big_v_norm_dense(&self, se: &SEState) -> Option<f64> {
        let t = self.t;
        if se.t < t + 1 {
            return None;
        }
        let r: Vec<f64> = (0..t).map(|s| se.delta[s][t] - se.delta[s][t - 1]).collect();
        se.truncated(t).inverse_quadratic_form_dense(&r).map(|v| (1.0 - self.q) * v.max(0.0).sqrt())
    }

    fn sample(&self, draws: usize, seed: u64) -> McSamples {
        let t = self.t;
        let mut rng = stream_rng(seed, Stream::MonteCarlo, 0);
        let sk = self.kappa.sqrt();
        let mut out =
            McSamples { t, h: Vec::with_capacity(draws), bx: Vec::with_capacity(draws), z: Vec::with_capacity(draws) };
        for _ in 0..draws {
            let h = self.field.sample(&mut rng);
            let y0 = self.sigma * rng.sample::<f64, _>(StandardNormal);
            let z: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
            let zv = DVector::from_column_slice(&z);
            let y = (&self.c * zv).map(|v| sk * v);
            let x: Vec<f64> = (0..t).map(|s| self.f(h, if s == 0 { y0 } else { y[s - 1] })).collect();
            let bx = self.whiten(&x).expect("factor checked at construction");
            out.h.push(h);
            out.bx.push(bx);
            out.z.push(z);
        }
        out
    }
}

/// Draws of `(𝖧, C⁻¹𝖷, κ*^{−1/2}C⁻¹𝖸)` shared across evaluations.
#[derive(Debug, Clone)]
pub struct McSamples {
    pub t: usize,
    pub h: Vec<f64>,
    pub bx: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl McSamples {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `U·h + V·(C⁻¹x) + W·z` for draw `i`.
    fn argument(&self, i: usize, u: f64, v: &[f64], w: &[f64]) -> f64 {
        u * self.h[i] + dot(v, &self.bx[i]) + dot(w, &self.z[i])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn axpy(out: &mut [f64], k: f64, x: &[f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o += k * xi;
    }
}

/// Arguments of `Φ₁,t`: `(u, v, w; γ, U, V, W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phi1Point {
    pub u: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub gamma: f64,
    pub big_u: f64,
    pub big_v: Vec<f64>,
    pub big_w: Vec<f64>,
}

impl Phi1Point {
    pub fn zeros(t: usize) -> Self {
        Phi1Point {
            u: 0.0,
            v: vec![0.0; t],
            w: vec![0.0; t],
            gamma: 0.0,
            big_u: 0.0,
            big_v: vec![0.0; t],
            big_w: vec![0.0; t],
        }
    }

    pub fn t(&self) -> usize {
        self.v.len()
    }

    /// `(u, v, w, γ, U, V, W)` flattened.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![self.u];
        out.extend(&self.v);
        out.extend(&self.w);
        out.push(self.gamma);
        out.push(self.big_u);
        out.extend(&self.big_v);
        out.extend(&self.big_w);
        out
    }

    pub fn from_slice(t: usize, x: &[f64]) -> Self {
        assert_eq!(x.len(), 3 + 4 * t, "flattened length");
        let mut it = x.iter().cloned();
        let mut take = |k: usize| -> Vec<f64> { (0..k).map(|_| it.next().unwrap()).collect() };
        let u = take(1)[0];
        let v = take(t);
        let w = take(t);
        let gamma = take(1)[0];
        let big_u = take(1)[0];
        let big_v = take(t);
        let big_w = take(t);
        Phi1Point { u, v, w, gamma, big_u, big_v, big_w }
    }
}

/// `Φ₁,t` for a model, its constants and a state-evolution Gram matrix.
#[derive(Debug, Clone)]
pub struct Phi1 {
    common: Common,
}

/// Value and partials of `Φ₁,t` at the starred point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary1Report {
    pub t: usize,
    pub value: f64,
    pub psi_rs: f64,
    pub d_u: f64,
    pub d_v: f64,
    pub d_w: f64,
    pub d_gamma: f64,
    pub d_big_u: f64,
    pub d_big_w: f64,
    /// `‖∂_VΦ₁‖` from `Δ_{t+1}`.
    pub d_big_v_norm: f64,
    /// The same norm by dense Cholesky; unreliable once `Δ_t` is nearly
    /// singular.
    pub d_big_v_norm_dense: Option<f64>,
    /// `E[∂_y f(𝖧, σ*𝖦)]`; zero at the exact fixed point.
    pub divergence: f64,
}

impl Stationary1Report {
    /// Largest of the partials that vanish exactly at the starred point.
    pub fn max_exact_partial(&self) -> f64 {
        [self.d_u, self.d_v, self.d_w, self.d_gamma, self.d_big_u, self.d_big_w]
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

impl Phi1 {
    pub fn new(model: &ModelSpec, constants: &RSConstants, se: &SEState, t: usize, basis: Basis) -> Result<Self> {
        Ok(Phi1 { common: Common::new(model, constants, se, t, basis)? })
    }

    pub fn t(&self) -> usize {
        self.common.t
    }

    pub fn starred(&self) -> Result<Phi1Point> {
        let c = &self.common;
        let (_, ht, _, _) = c.starred_expectations()?;
        let sk = c.kappa.sqrt();
        let row = &c.top_row;
        Ok(Phi1Point {
            u: ht,
            v: row.iter().map(|x| (1.0 - c.q) * x).collect(),
            w: row.iter().map(|x| sk * (1.0 - c.q) * x).collect(),
            gamma: c.dbar.cauchy_inverse(1.0 - c.q)?,
            big_u: 1.0,
            big_v: vec![0.0; c.t],
            big_w: row.iter().map(|x| sk * x).collect(),
        })
    }

    /// Every term except the expectation, and its gradient.
    pub fn algebraic(&self, p: &Phi1Point) -> Result<(f64, Phi1Point)> {
        let c = &self.common;
        let t = c.t;
        if p.t() != t {
            return domain("point has the wrong dimension");
        }
        let ik = 1.0 / c.kappa.sqrt();
        let alpha = 1.0 - norm2(&p.v) - norm2(&p.w);
        if !(alpha > 0.0) {
            return domain("requires |v|^2 + |w|^2 < 1");
        }
        let x: Vec<f64> = (0..t).map(|i| p.v[i] - ik * p.w[i]).collect();
        let fg = c.weight.f(p.gamma)?;
        let fgp = c.weight.f_prime(p.gamma)?;
        let lw = c.lambda - c.a_star / c.kappa;
        let value = -p.u * p.big_u - dot(&p.v, &p.big_v) - dot(&p.w, &p.big_w)
            + p.u
            + c.a_star * ik * dot(&p.v, &p.w)
            + 0.5 * lw * norm2(&p.w)
            + 0.5 * fg * norm2(&x)
            + 0.5 * h_func(p.gamma, alpha, &c.dbar)?;
        let hg = p.gamma - 1.0 / alpha;
        let mut g = Phi1Point::zeros(t);
        g.u = 1.0 - p.big_u;
        g.big_u = -p.u;
        for i in 0..t {
            g.v[i] = -p.big_v[i] + c.a_star * ik * p.w[i] + fg * x[i] - p.v[i] * hg;
            g.w[i] = -p.big_w[i] + c.a_star * ik * p.v[i] + lw * p.w[i] - ik * fg * x[i] - p.w[i] * hg;
            g.big_v[i] = -p.v[i];
            g.big_w[i] = -p.w[i];
        }
        g.gamma = 0.5 * fgp * norm2(&x) + 0.5 * (alpha - c.dbar.cauchy(p.gamma)?);
        Ok((value, g))
    }

    /// Value and partials at the starred point, with the expectation reduced
    /// to `E log 2cosh(𝖧+σ*𝖦)`. `se` must extend to `t + 1`.
    pub fn stationary(&self, constants: &RSConstants, se: &SEState) -> Result<Stationary1Report> {
        let c = &self.common;
        let p = self.starred()?;
        let (lc, ht, _, gt) = c.starred_expectations()?;
        let (alg, g) = self.algebraic(&p)?;
        let sk = c.kappa.sqrt();
        let d_big_w: Vec<f64> = (0..c.t).map(|i| g.big_w[i] + sk * gt * c.top_row[i]).collect();
        let divergence = c.expect(|h, gg| {
            let th = (h + c.sigma * gg).tanh();
            (1.0 - th * th) / (1.0 - c.q) - 1.0
        })?;
        Ok(Stationary1Report {
            t: c.t,
            value: lc + alg,
            psi_rs: constants.psi_rs,
            d_u: g.u,
            d_v: max_abs(&g.v),
            d_w: max_abs(&g.w),
            d_gamma: g.gamma,
            d_big_u: g.big_u + ht,
            d_big_w: max_abs(&d_big_w),
            d_big_v_norm: norm2(&c.d_big_v(se)?).sqrt(),
            d_big_v_norm_dense: c.d_big_v_norm_dense(se),
            divergence,
        })
    }

    pub fn samples(&self, draws: usize, seed: u64) -> McSamples {
        self.common.sample(draws, seed)
    }

    /// Monte Carlo value with the given draws.
    pub fn value_mc(&self, p: &Phi1Point, s: &McSamples) -> Result<f64> {
        let (alg, _) = self.algebraic(p)?;
        let e: f64 =
            (0..s.len()).map(|i| log2cosh(s.argument(i, p.big_u, &p.big_v, &p.big_w))).sum::<f64>() / s.len() as f64;
        Ok(alg + e)
    }

    /// Gradient of [`value_mc`](Self::value_mc).
    pub fn grad_mc(&self, p: &Phi1Point, s: &McSamples) -> Result<Phi1Point> {
        let (_, mut g) = self.algebraic(p)?;
        let k = 1.0 / s.len() as f64;
        for i in 0..s.len() {
            let th = s.argument(i, p.big_u, &p.big_v, &p.big_w).tanh();
            g.big_u += k * th * s.h[i];
            axpy(&mut g.big_v, k * th, &s.bx[i]);
            axpy(&mut g.big_w, k * th, &s.z[i]);
        }
        Ok(g)
    }
}

/// `Φ₁,t` at its starred point.
pub fn phi1_stationary(
    model: &ModelSpec,
    constants: &RSConstants,
    se: &SEState,
    t: usize,
) -> Result<Stationary1Report> {
    Phi1::new(model, constants, se, t, Basis::Factor)?.stationary(constants, se)
}

/// Arguments of `Φ₂,t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phi2Point {
    pub u: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub k: f64,
    pub l: Vec<f64>,
    pub m: Vec<f64>,
    pub p: f64,
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    pub big_u: f64,
    pub big_v: Vec<f64>,
    pub big_w: Vec<f64>,
    pub big_k: f64,
    pub big_l: Vec<f64>,
    pub big_m: Vec<f64>,
    pub big_p: f64,
}

impl Phi2Point {
    pub fn zeros(t: usize) -> Self {
        let z = vec![0.0; t];
        Phi2Point {
            u: 0.0,
            v: z.clone(),
            w: z.clone(),
            k: 0.0,
            l: z.clone(),
            m: z.clone(),
            p: 0.0,
            gamma: 0.0,
            nu: 0.0,
            rho: 0.0,
            big_u: 0.0,
            big_v: z.clone(),
            big_w: z.clone(),
            big_k: 0.0,
            big_l: z.clone(),
            big_m: z,
            big_p: 0.0,
        }
    }

    pub fn t(&self) -> usize {
        self.v.len()
    }

    /// Flattened in declaration order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut o = vec![self.u];
        o.extend(&self.v);
        o.extend(&self.w);
        o.push(self.k);
        o.extend(&self.l);
        o.extend(&self.m);
        o.extend([self.p, self.gamma, self.nu, self.rho, self.big_u]);
        o.extend(&self.big_v);
        o.extend(&self.big_w);
        o.push(self.big_k);
        o.extend(&self.big_l);
        o.extend(&self.big_m);
        o.push(self.big_p);
        o
    }

    pub fn from_slice(t: usize, x: &[f64]) -> Self {
        assert_eq!(x.len(), 9 + 8 * t, "flattened length");
        let mut it = x.iter().cloned();
        let mut vec_of = |k: usize| -> Vec<f64> { (0..k).map(|_| it.next().unwrap()).collect() };
        let u = vec_of(1)[0];
        let v = vec_of(t);
        let w = vec_of(t);
        let k = vec_of(1)[0];
        let l = vec_of(t);
        let m = vec_of(t);
        let s = vec_of(5);
        let big_v = vec_of(t);
        let big_w = vec_of(t);
        let big_k = vec_of(1)[0];
        let big_l = vec_of(t);
        let big_m = vec_of(t);
        let big_p = vec_of(1)[0];
        Phi2Point {
            u,
            v,
            w,
            k,
            l,
            m,
            p: s[0],
            gamma: s[1],
            nu: s[2],
            rho: s[3],
            big_u: s[4],
            big_v,
            big_w,
            big_k,
            big_l,
            big_m,
            big_p,
        }
    }
}

/// `log[e^{x+y+z} + e^{x−y−z} + e^{−x+y−z} + e^{−x−y+z}]` and its three
/// partials.
pub fn l2(x: f64, y: f64, z: f64) -> (f64, [f64; 3]) {
    let e = [x + y + z, x - y - z, -x + y - z, -x - y + z];
    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = w.iter().sum();
    (m + s.ln(), [(w[0] + w[1] - w[2] - w[3]) / s, (w[0] - w[1] + w[2] - w[3]) / s, (w[0] - w[1] - w[2] + w[3]) / s])
}

/// `Φ₂,t` for a model, its constants and a state-evolution Gram matrix.
#[derive(Debug, Clone)]
pub struct Phi2 {
    common: Common,
}

/// Value and partials of `Φ₂,t` at the starred point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary2Report {
    pub t: usize,
    pub value: f64,
    pub two_psi_rs: f64,
    /// Largest partial over `u, v, w, k, ℓ, m, p, γ, ν, ρ, U, W, K, M, P`.
    pub max_exact_partial: f64,
    pub d_p: f64,
    pub d_nu: f64,
    pub d_big_p: f64,
    pub d_big_v_norm: f64,
    pub d_big_l_norm: f64,
}

impl Phi2 {
    pub fn new(model: &ModelSpec, constants: &RSConstants, se: &SEState, t: usize, basis: Basis) -> Result<Self> {
        Ok(Phi2 { common: Common::new(model, constants, se, t, basis)? })
    }

    pub fn starred(&self) -> Result<Phi2Point> {
        let c = &self.common;
        let one = Phi1 { common: c.clone() }.starred()?;
        Ok(Phi2Point {
            u: one.u,
            v: one.v.clone(),
            w: one.w.clone(),
            k: one.u,
            l: one.v,
            m: one.w,
            p: c.q,
            gamma: one.gamma,
            nu: 0.0,
            rho: one.gamma,
            big_u: 1.0,
            big_v: vec![0.0; c.t],
            big_w: one.big_w.clone(),
            big_k: 1.0,
            big_l: vec![0.0; c.t],
            big_m: one.big_w,
            big_p: 0.0,
        })
    }

    /// Every term except the expectation, and its gradient.
    pub fn algebraic(&self, p: &Phi2Point) -> Result<(f64, Phi2Point)> {
        let c = &self.common;
        let t = c.t;
        if p.t() != t {
            return domain("point has the wrong dimension");
        }
        let ik = 1.0 / c.kappa.sqrt();
        let a = Sym2::new(
            1.0 - norm2(&p.v) - norm2(&p.w),
            p.p - dot(&p.v, &p.l) - dot(&p.w, &p.m),
            1.0 - norm2(&p.l) - norm2(&p.m),
        );
        let adet = a.det();
        if !(a.a > 0.0 && adet > 0.0) {
            return domain("requires A(p, v, w, l, m) to be positive definite");
        }
        let gm = Sym2::new(p.gamma, p.nu, p.rho);
        let ge = gm.eigen();
        let dp = c.dbar.support_max();
        if !(ge.values[1] > dp) {
            return domain("requires the (gamma, nu, rho) matrix above d+");
        }
        let x: Vec<f64> = (0..t).map(|i| p.v[i] - ik * p.w[i]).collect();
        let y: Vec<f64> = (0..t).map(|i| p.l[i] - ik * p.m[i]).collect();
        let b = Sym2::new(norm2(&x), dot(&x, &y), norm2(&y));
        let f = c.weight.f2(&gm)?;
        let df = c.weight.f2_partials(&gm)?;
        let lw = c.lambda - c.a_star / c.kappa;
        let h2 = gm.trace_product(&a)
            - c.dbar.log_potential_raw(ge.values[0])
            - c.dbar.log_potential_raw(ge.values[1])
            - 2.0
            - adet.ln();
        let value = -p.u * p.big_u
            - p.k * p.big_k
            - dot(&p.v, &p.big_v)
            - dot(&p.w, &p.big_w)
            - dot(&p.l, &p.big_l)
            - dot(&p.m, &p.big_m)
            - p.p * p.big_p
            + p.u
            + p.k
            + c.a_star * ik * (dot(&p.v, &p.w) + dot(&p.l, &p.m))
            + 0.5 * lw * (norm2(&p.w) + norm2(&p.m))
            + 0.5 * f.trace_product(&b)
            + 0.5 * h2;

        let ha = p.gamma - a.c / adet;
        let hb = 2.0 * p.nu + 2.0 * a.b / adet;
        let hc = p.rho - a.a / adet;
        let ghat = ge.map(|z| c.dbar.g_raw(z).0);
        let mut g = Phi2Point::zeros(t);
        g.u = 1.0 - p.big_u;
        g.k = 1.0 - p.big_k;
        g.big_u = -p.u;
        g.big_k = -p.k;
        g.big_p = -p.p;
        g.p = -p.big_p + 0.5 * hb;
        for i in 0..t {
            let fx = f.a * x[i] + f.b * y[i];
            let fy = f.b * x[i] + f.c * y[i];
            g.v[i] = -p.big_v[i] + c.a_star * ik * p.w[i] + fx - ha * p.v[i] - 0.5 * hb * p.l[i];
            g.w[i] = -p.big_w[i] + c.a_star * ik * p.v[i] + lw * p.w[i] - ik * fx - ha * p.w[i] - 0.5 * hb * p.m[i];
            g.l[i] = -p.big_l[i] + c.a_star * ik * p.m[i] + fy - hc * p.l[i] - 0.5 * hb * p.v[i];
            g.m[i] = -p.big_m[i] + c.a_star * ik * p.l[i] + lw * p.m[i] - ik * fy - hc * p.m[i] - 0.5 * hb * p.w[i];
            g.big_v[i] = -p.v[i];
            g.big_w[i] = -p.w[i];
            g.big_l[i] = -p.l[i];
            g.big_m[i] = -p.m[i];
        }
        g.gamma = 0.5 * df[0].trace_product(&b) + 0.5 * (a.a - ghat.a);
        g.nu = 0.5 * df[1].trace_product(&b) + (a.b - ghat.b);
        g.rho = 0.5 * df[2].trace_product(&b) + 0.5 * (a.c - ghat.c);
        Ok((value, g))
    }

    /// Value and partials at the starred point, using
    /// `ℒ(0, y, z) = log 2cosh y + log 2cosh z`.
    pub fn stationary(&self, constants: &RSConstants, se: &SEState) -> Result<Stationary2Report> {
        let c = &self.common;
        let p = self.starred()?;
        let (lc, ht, t2, gt) = c.starred_expectations()?;
        let (alg, g) = self.algebraic(&p)?;
        let sk = c.kappa.sqrt();
        let d_big_w: Vec<f64> = (0..c.t).map(|i| g.big_w[i] + sk * gt * c.top_row[i]).collect();
        let d_big_m: Vec<f64> = (0..c.t).map(|i| g.big_m[i] + sk * gt * c.top_row[i]).collect();
        let d_big_p = g.big_p + t2;
        let scalars = [
            g.u,
            g.k,
            g.p,
            g.gamma,
            g.nu,
            g.rho,
            g.big_u + ht,
            g.big_k + ht,
            d_big_p,
            max_abs(&g.v),
            max_abs(&g.w),
            max_abs(&g.l),
            max_abs(&g.m),
            max_abs(&d_big_w),
            max_abs(&d_big_m),
        ];
        let dv = norm2(&c.d_big_v(se)?).sqrt();
        Ok(Stationary2Report {
            t: c.t,
            value: 2.0 * lc + alg,
            two_psi_rs: 2.0 * constants.psi_rs,
            max_exact_partial: scalars.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            d_p: g.p,
            d_nu: g.nu,
            d_big_p,
            d_big_v_norm: dv,
            d_big_l_norm: dv,
        })
    }

    pub fn samples(&self, draws: usize, seed: u64) -> McSamples {
        self.common.sample(draws, seed)
    }

    pub fn value_mc(&self, p: &Phi2Point, s: &McSamples) -> Result<f64> {
        let (alg, _) = self.algebraic(p)?;
        let e: f64 = (0..s.len())
            .map(|i| {
                let y1 = s.argument(i, p.big_u, &p.big_v, &p.big_w);
                let y2 = s.argument(i, p.big_k, &p.big_l, &p.big_m);
                l2(p.big_p, y1, y2).0
            })
            .sum::<f64>()
            / s.len() as f64;
        Ok(alg + e)
    }

    pub fn grad_mc(&self, p: &Phi2Point, s: &McSamples) -> Result<Phi2Point> {
        let (_, mut g) = self.algebraic(p)?;
        let k = 1.0 / s.len() as f64;
        for i in 0..s.len() {
            let y1 = s.argument(i, p.big_u, &p.big_v, &p.big_w);
            let y2 = s.argument(i, p.big_k, &p.big_l, &p.big_m);
            let (_, d) = l2(p.big_p, y1, y2);
            g.big_p += k * d[0];
            g.big_u += k * d[1] * s.h[i];
            g.big_k += k * d[2] * s.h[i];
            axpy(&mut g.big_v, k * d[1], &s.bx[i]);
            axpy(&mut g.big_w, k * d[1], &s.z[i]);
            axpy(&mut g.big_l, k * d[2], &s.bx[i]);
            axpy(&mut g.big_m, k * d[2], &s.z[i]);
        }
        Ok(g)
    }
}

/// `Φ₂,t` at its starred point.
pub fn phi2_stationary(
    model: &ModelSpec,
    constants: &RSConstants,
    se: &SEState,
    t: usize,
) -> Result<Stationary2Report> {
    Phi2::new(model, constants, se, t, Basis::Factor)?.stationary(constants, se)
}

/// Second differences of the outer function
/// `ψ(u,v,w) = inf_γ inf_{U,V,W} Φ̂₁` along random directions, where `Φ̂₁`
/// uses fixed Monte Carlo draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub step: f64,
    pub second_differences: Vec<f64>,
    pub all_negative: bool,
}

/// `inf_{U,V,W} Ê log 2cosh(U𝖧 + V·C⁻¹𝖷 + W·𝖹) − uU − v·V − w·W` by damped
/// Newton from `start`.
fn conjugate(s: &McSamples, u: f64, v: &[f64], w: &[f64], start: &[f64]) -> Result<(f64, Vec<f64>)> {
    let t = s.t;
    let dim = 1 + 2 * t;
    let target: Vec<f64> = std::iter::once(u).chain(v.iter().cloned()).chain(w.iter().cloned()).collect();
    let feat = |i: usize| -> Vec<f64> {
        std::iter::once(s.h[i]).chain(s.bx[i].iter().cloned()).chain(s.z[i].iter().cloned()).collect()
    };
    let feats: Vec<Vec<f64>> = (0..s.len()).map(feat).collect();
    let nf = s.len() as f64;
    let eval = |th: &[f64]| -> f64 { feats.iter().map(|f| log2cosh(dot(th, f))).sum::<f64>() / nf - dot(th, &target) };
    let mut th = start.to_vec();
    let mut val = eval(&th);
    for _ in 0..100 {
        let mut grad = DVector::from_iterator(dim, target.iter().map(|x| -x));
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for f in &feats {
            let tn = dot(&th, f).tanh();
            let sech2 = 1.0 - tn * tn;
            for a in 0..dim {
                grad[a] += tn * f[a] / nf;
                for b in 0..dim {
                    hess[(a, b)] += sech2 * f[a] * f[b] / nf;
                }
            }
        }
        if grad.norm() <= 1e-12 {
            break;
        }
        // Nearly collinear features (a point-mass field) leave the Hessian
        // numerically singular; a small ridge keeps the step defined.
        let ridge = 1e-12 * (0..dim).map(|a| hess[(a, a)]).fold(0.0, f64::max);
        let step = hess
            .clone()
            .cholesky()
            .or_else(|| (hess + DMatrix::identity(dim, dim) * ridge).cholesky())
            .map(|ch| -ch.solve(&grad))
            .ok_or_else(|| Error::Domain("conjugate Hessian is singular".into()))?;
        let mut size = 1.0;
        loop {
            let trial: Vec<f64> = th.iter().zip(step.iter()).map(|(a, b)| a + size * b).collect();
            let tv = eval(&trial);
            if tv <= val + 1e-4 * size * grad.dot(&step) || size < 1e-12 {
                th = trial;
                val = tv;
                break;
            }
            size *= 0.5;
        }
    }
    Ok((val, th))
}

pub fn concavity_probe(
    phi: &Phi1,
    samples: &McSamples,
    directions: usize,
    step: f64,
    seed: u64,
) -> Result<ConcavityReport> {
    let c = &phi.common;
    let t = c.t;
    let star = phi.starred()?;
    let start = star.to_vec();
    let theta0: Vec<f64> =
        std::iter::once(star.big_u).chain(star.big_v.iter().cloned()).chain(star.big_w.iter().cloned()).collect();
    let psi = |x: &[f64]| -> Result<f64> {
        let p = Phi1Point::from_slice(t, x);
        // Inner infimum over γ of the γ-dependent part.
        let ik = 1.0 / c.kappa.sqrt();
        let alpha = 1.0 - norm2(&p.v) - norm2(&p.w);
        let xs: Vec<f64> = (0..t).map(|i| p.v[i] - ik * p.w[i]).collect();
        let bx = norm2(&xs);
        let dp = c.dbar.support_max();
        let phi_g = |g: f64| {
            let (gv, g1, _) = c.dbar.g_raw(g);
            let f = c.weight.f(g).unwrap_or(f64::NAN);
            let f1 = c.weight.f_prime(g).unwrap_or(f64::NAN);
            let f2 = 2.0 * c.dbar.integrate(&|x| c.weight.omega(x).powi(2) / (g - x).powi(3));
            (
                0.5 * f * bx + 0.5 * (g * alpha - c.dbar.log_potential_raw(g) - 1.0 - alpha.ln()),
                0.5 * f1 * bx + 0.5 * (alpha - gv),
                0.5 * f2 * bx - 0.5 * g1,
            )
        };
        let m = crate::solve::minimize_convex(phi_g, dp + 1e-9 * (1.0 + dp.abs()), 1.0);
        let lw = c.lambda - c.a_star / c.kappa;
        let rest = p.u + c.a_star * ik * dot(&p.v, &p.w) + 0.5 * lw * norm2(&p.w);
        let (conj, _) = conjugate(samples, p.u, &p.v, &p.w, &theta0)?;
        Ok(m.value + rest + conj)
    };
    let mut rng = stream_rng(seed, Stream::Misc, 0);
    let centre = psi(&start)?;
    let mut out = Vec::with_capacity(directions);
    for _ in 0..directions {
        let mut d = vec![0.0; start.len()];
        // Perturb only the outer variables (u, v, w).
        for x in d.iter_mut().take(1 + 2 * t) {
            *x = rng.sample(StandardNormal);
        }
        let nd = norm2(&d).sqrt();
        let plus: Vec<f64> = start.iter().zip(&d).map(|(a, b)| a + step * b / nd).collect();
        let minus: Vec<f64> = start.iter().zip(&d).map(|(a, b)| a - step * b / nd).collect();
        out.push(psi(&plus)? + psi(&minus)? - 2.0 * centre);
    }
    Ok(ConcavityReport { step, all_negative: out.iter().all(|v| *v < 0.0), second_differences: out })
}
