//! Finite-n orthogonally invariant couplings and the memory-free AMP
//! iteration run on them.
//!
//! The coupling is `J̄ = β OᵀDO`. Nothing here forms `J̄`; every product goes
//! through `O`, `Oᵀ` and a diagonal.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::{stream_rng, Stream};
use crate::rs_core::{ModelSpec, RSConstants};
use crate::state_evolution::SEState;

/// Haar orthogonal matrix stored as a product of Householder reflections
/// `O = H₀H₁⋯H_{n−2} S`, where `H_k` acts on coordinates `k..n` and `S` is a
/// diagonal of signs. Storage is `n²/2` and each product costs `2n²` flops.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarOrthogonal {
    n: usize,
    /// Unit reflector for each `k`, of length `n − k`.
    reflectors: Vec<Vec<f64>>,
    signs: Vec<f64>,
}

impl HaarOrthogonal {
    /// Draws from Haar measure on `O(n)` by the reflector form of Gaussian QR
    /// with positive diagonal.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
        let mut signs = Vec::with_capacity(n);
        for k in 0..n {
            let len = n - k;
            let mut x: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let s0 = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            if len == 1 {
                signs.push(s0);
                break;
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x[0] += s0 * norm;
            let vnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in x.iter_mut() {
                *v /= vnorm;
            }
            reflectors.push(x);
            // H x has first entry −s0‖x‖; the sign restores a positive R diagonal.
            signs.push(-s0);
        }
        HaarOrthogonal { n, reflectors, signs }
    }

    pub fn identity(n: usize) -> Self {
        HaarOrthogonal { n, reflectors: Vec::new(), signs: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn reflect(v: &[f64], y: &mut [f64]) {
        let dot: f64 = v.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let c = 2.0 * dot;
        for (yi, vi) in y.iter_mut().zip(v) {
            *yi -= c * vi;
        }
    }

    /// `O x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length");
        let mut y: Vec<f64> = x.iter().zip(&self.signs).map(|(a, s)| a * s).collect();
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            Self::reflect(v, &mut y[k..]);
        }
        y
    }

    /// `Oᵀ y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n, "vector length");
        let mut x = y.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            Self::reflect(v, &mut x[k..]);
        }
        for (xi, s) in x.iter_mut().zip(&self.signs) {
            *xi *= s;
        }
        x
    }

    /// Dense `n × n` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            m.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        m
    }
}

/// Haar draw as a product of reflectors.
pub fn sample_haar<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HaarOrthogonal {
    HaarOrthogonal::sample(n, rng)
}

/// Haar draw by dense QR of a Gaussian matrix with the diagonal of `R` made
/// positive. Used as a reference for the reflector form.
pub fn sample_haar_dense_qr<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// How eigenvalues and field entries are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Iid,
    /// Law quantiles at `(i − ½)/n`.
    #[default]
    Quantile,
}

/// One finite-n realization.
#[derive(Debug, Clone)]
pub struct CouplingSample {
    pub n: usize,
    /// Eigenvalues of `D` before the `β` scaling.
    pub d: Vec<f64>,
    pub o: HaarOrthogonal,
    pub h: Vec<f64>,
    pub seed: u64,
    pub placement: Placement,
}

impl CouplingSample {
    /// `J̄x = Oᵀ(βd ∘ Ox)`.
    pub fn coupling_apply(&self, beta: f64, x: &[f64]) -> Vec<f64> {
        let mut s = self.o.apply(x);
        for (si, di) in s.iter_mut().zip(&self.d) {
            *si *= beta * di;
        }
        self.o.apply_transpose(&s)
    }

    /// Dense `J̄ = β OᵀDO`.
    pub fn coupling_dense(&self, beta: f64) -> DMatrix<f64> {
        let o = self.o.to_dense();
        let mut od = o.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                od[(i, j)] *= beta * self.d[i];
            }
        }
        o.transpose() * od
    }
}

/// Samples `(d, O, h)` for a model.
pub fn sample_model(model: &ModelSpec, n: usize, seed: u64, placement: Placement) -> Result<CouplingSample> {
    if n < 2 {
        return domain(format!("n = {n} must be at least 2"));
    }
    let mut eig_rng = stream_rng(seed, Stream::Eigenvalues, 0);
    let mut field_rng = stream_rng(seed, Stream::Field, 0);
    let (d, h) = match placement {
        Placement::Quantile => {
            let p = |i: usize| (i as f64 + 0.5) / n as f64;
            (
                (0..n).map(|i| model.spectral.quantile(p(i))).collect(),
                (0..n).map(|i| model.field.quantile(p(i))).collect(),
            )
        }
        Placement::Iid => (
            (0..n).map(|_| model.spectral.sample(&mut eig_rng)).collect(),
            (0..n).map(|_| model.field.sample(&mut field_rng)).collect(),
        ),
    };
    let o = HaarOrthogonal::sample(n, &mut stream_rng(seed, Stream::Haar, 0));
    Ok(CouplingSample { n, d, o, h, seed, placement })
}

/// Iterates and their Gram matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct AMPTrace {
    pub t_max: usize,
    /// `x¹..x^T`.
    pub x: Vec<Vec<f64>>,
    /// `y⁰..y^T`.
    pub y: Vec<Vec<f64>>,
    /// `s¹..s^T`.
    pub s: Vec<Vec<f64>>,
    /// Diagonal of `Λ`.
    pub lambda: Vec<f64>,
    pub gram_xx: Vec<Vec<f64>>,
    pub gram_yy: Vec<Vec<f64>>,
    /// Entries `n⁻¹⟨x^s, y^r⟩` for `s, r = 1..T`.
    pub gram_xy: Vec<Vec<f64>>,
    /// Set when `σ*² = 0` and the field is zero, so every iterate vanishes.
    pub degenerate_init: bool,
}

fn gram(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.first().map_or(1, |v| v.len()) as f64;
    a.iter().map(|u| b.iter().map(|v| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() / n).collect()).collect()
}

/// Runs `T` iterations of `x^t = (1−q*)⁻¹tanh(h+y^{t−1}) − y^{t−1}`,
/// `s^t = Ox^t`, `y^t = OᵀΛs^t` from `y⁰ ~ N(0, σ*²)`.
pub fn run_amp(
    sample: &CouplingSample,
    model: &ModelSpec,
    constants: &RSConstants,
    t_max: usize,
    seed: u64,
) -> Result<AMPTrace> {
    if t_max == 0 {
        return domain("T must be at least 1");
    }
    let n = sample.n;
    let q = constants.q_star;
    let lam = constants.lambda_star;
    let lambda: Vec<f64> = sample.d.iter().map(|&d| 1.0 / ((1.0 - q) * (lam - model.beta * d)) - 1.0).collect();
    if lambda.iter().any(|v| !v.is_finite()) || sample.d.iter().any(|&d| model.beta * d >= lam) {
        return domain("lambda* does not exceed the sampled spectrum");
    }
    let sigma = constants.sigma_star_sq.sqrt();
    let mut rng = stream_rng(seed, Stream::AmpInit, 0);
    let y0: Vec<f64> = (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();

    let mut xs = Vec::with_capacity(t_max);
    let mut ys = vec![y0];
    let mut ss = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        let prev = ys.last().expect("y0 present");
        let x: Vec<f64> = sample.h.iter().zip(prev).map(|(&h, &y)| (h + y).tanh() / (1.0 - q) - y).collect();
        let s = sample.o.apply(&x);
        let ls: Vec<f64> = s.iter().zip(&lambda).map(|(a, b)| a * b).collect();
        ys.push(sample.o.apply_transpose(&ls));
        xs.push(x);
        ss.push(s);
    }
    let gram_xx = gram(&xs, &xs);
    let gram_yy = gram(&ys[1..], &ys[1..]);
    let gram_xy = gram(&xs, &ys[1..]);
    Ok(AMPTrace {
        t_max,
        x: xs,
        y: ys,
        s: ss,
        lambda,
        gram_xx,
        gram_yy,
        gram_xy,
        degenerate_init: constants.sigma_star_sq == 0.0 && model.field.is_zero(),
    })
}

/// `n^{−1/2}‖m − tanh(h + J̄m − R̄(1−q*)m)‖` with `m = tanh(h + y^{T−1})`.
pub fn tap_residual(
    trace: &AMPTrace,
    sample: &CouplingSample,
    model: &ModelSpec,
    constants: &RSConstants,
) -> Result<f64> {
    if trace.t_max < 2 {
        return domain("TAP residual needs T >= 2");
    }
    let y = &trace.y[trace.t_max - 1];
    let m: Vec<f64> = sample.h.iter().zip(y).map(|(h, y)| (h + y).tanh()).collect();
    let jm = sample.coupling_apply(model.beta, &m);
    let a = constants.a_star;
    let ss: f64 = (0..sample.n)
        .map(|i| {
            let r = m[i] - (sample.h[i] + jm[i] - a * m[i]).tanh();
            r * r
        })
        .sum();
    Ok((ss / sample.n as f64).sqrt())
}

/// Deviation of `n⁻¹SᵀF(D̄)S` from `Δ_T·∫f dμ_D̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreenessReport {
    pub integral: f64,
    pub deviation: Vec<Vec<f64>>,
    pub max_abs: f64,
}

pub fn freeness_check(
    trace: &AMPTrace,
    sample: &CouplingSample,
    model: &ModelSpec,
    se: &SEState,
    f: &dyn Fn(f64) -> f64,
) -> Result<FreenessReport> {
    let t = trace.t_max;
    if se.t < t {
        return domain(format!("state evolution has t = {} < T = {t}", se.t));
    }
    let n = sample.n as f64;
    let fd: Vec<f64> = sample.d.iter().map(|&d| f(model.beta * d)).collect();
    let integral = model.dbar().integrate(f);
    let mut dev = vec![vec![0.0; t]; t];
    let mut max_abs = 0.0f64;
    for a in 0..t {
        for b in 0..t {
            let emp: f64 = (0..sample.n).map(|i| trace.s[a][i] * fd[i] * trace.s[b][i]).sum::<f64>() / n;
            let d = emp - se.delta[a][b] * integral;
            dev[a][b] = d;
            max_abs = max_abs.max(d.abs());
        }
    }
    Ok(FreenessReport { integral, deviation: dev, max_abs })
}

/// One mixed moment `E[𝖧^a 𝖸_t^b]` against its empirical row average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMoment {
    pub h_power: u32,
    pub y_power: u32,
    pub empirical: f64,
    pub expected: f64,
    /// Monte Carlo standard error of the row average.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMomentReport {
    pub t: usize,
    pub moments: Vec<RowMoment>,
    /// Every moment within five standard errors (plus `1e-9` for exact
    /// placements).
    pub within_five_sigma: bool,
}

fn gaussian_moment(b: u32) -> f64 {
    if b % 2 == 1 {
        0.0
    } else {
        (1..b).step_by(2).map(f64::from).product()
    }
}

/// Mixed moments of the row cloud `(h_i, y_i^t)` of total degree 1..4 against
/// `𝖧 ⊥ 𝖸_t ~ N(0, σ*²)`.
pub fn row_moment_check(
    trace: &AMPTrace,
    sample: &CouplingSample,
    model: &ModelSpec,
    constants: &RSConstants,
    t: usize,
) -> Result<RowMomentReport> {
    if t == 0 || t > trace.t_max {
        return domain(format!("t = {t} outside 1..={}", trace.t_max));
    }
    let n = sample.n as f64;
    let sigma = constants.sigma_star_sq.sqrt();
    let y = &trace.y[t];
    let mut moments = Vec::new();
    let mut ok = true;
    for deg in 1..=4u32 {
        for a in 0..=deg {
            let b = deg - a;
            let vals: Vec<f64> = (0..sample.n).map(|i| sample.h[i].powi(a as i32) * y[i].powi(b as i32)).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let expected = model.field.moment(a as usize) * sigma.powi(b as i32) * gaussian_moment(b);
            let std_error = (var / n).sqrt();
            ok &= (mean - expected).abs() <= 5.0 * std_error + 1e-9;
            moments.push(RowMoment { h_power: a, y_power: b, empirical: mean, expected, std_error });
        }
    }
    Ok(RowMomentReport { t, moments, within_five_sigma: ok })
}

/// Gram deviations from state evolution for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramDeviation {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

pub fn gram_deviation(trace: &AMPTrace, se: &SEState, kappa: f64) -> GramDeviation {
    let t = trace.t_max.min(se.t);
    let mut dev = GramDeviation { xx: 0.0, yy: 0.0, xy: 0.0 };
    for a in 0..t {
        for b in 0..t {
            dev.xx = dev.xx.max((trace.gram_xx[a][b] - se.delta[a][b]).abs());
            dev.yy = dev.yy.max((trace.gram_yy[a][b] - kappa * se.delta[a][b]).abs());
            dev.xy = dev.xy.max(trace.gram_xy[a][b].abs());
        }
    }
    dev
}

/// A sample and its AMP trace.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub sample: CouplingSample,
    pub trace: AMPTrace,
}

/// Independent replicates with seeds `seeds[r]`, in order.
pub fn amp_replicates(
    model: &ModelSpec,
    constants: &RSConstants,
    n: usize,
    t_max: usize,
    seeds: &[u64],
    placement: Placement,
    exec: Execution,
) -> Result<Vec<Replicate>> {
    map_indexed(exec, seeds.len(), |r| -> Result<Replicate> {
        let sample = sample_model(model, n, seeds[r], placement)?;
        let trace = run_amp(&sample, model, constants, t_max, seeds[r])?;
        Ok(Replicate { sample, trace })
    })
    .into_iter()
    .collect()
}
