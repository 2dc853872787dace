//! State evolution of the memory-free AMP iteration.
//!
//! Entries of `Δ_t` are expectations `E[f(𝖧,𝖸′)f(𝖧,𝖸″)]` over a pair with
//! common variance `σ*²` and covariance `κ*δ`. The pair is written as
//! `𝖸′ = √(κ*δ)𝖦 + √(σ*²−κ*δ)𝖦′`, `𝖸″ = √(κ*δ)𝖦 + √(σ*²−κ*δ)𝖦″` and the
//! tensor rule over `(𝖦,𝖦′,𝖦″)` is contracted through its product structure.
//!
//! Alongside each entry the state keeps its deviation `δ* − δ` computed
//! directly as `E_{𝖧,𝖦} Var_{𝖦′} f`, which keeps full relative precision once
//! entries agree with `δ*` to more digits than a double holds.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::par::{map_indexed, Execution};
use crate::quad::{normal_rule, NormalRule};
use crate::rs_core::{ModelSpec, RSConstants};

/// Default Gauss–Hermite order per Gaussian direction.
pub const SE_ORDER: usize = 60;

/// Everything needed to evaluate state-evolution expectations.
#[derive(Debug, Clone)]
pub struct SeKernel {
    pub q_star: f64,
    pub sigma_sq: f64,
    pub kappa: f64,
    pub delta_star: f64,
    field: Vec<(f64, f64)>,
    rule: Arc<NormalRule>,
}

/// `g(δ)` and `δ* − g(δ)` from one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValue {
    pub value: f64,
    pub deviation: f64,
}

impl SeKernel {
    pub fn new(model: &ModelSpec, constants: &RSConstants, order: usize) -> Result<Self> {
        Ok(SeKernel {
            q_star: constants.q_star,
            sigma_sq: constants.sigma_star_sq,
            kappa: constants.kappa_star,
            delta_star: constants.delta_star,
            field: model.field.nodes()?,
            rule: normal_rule(order)?,
        })
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    /// `f(h, y) = (1−q*)⁻¹ tanh(h+y) − y`.
    #[inline]
    pub fn f(&self, h: f64, y: f64) -> f64 {
        (h + y).tanh() / (1.0 - self.q_star) - y
    }

    /// `∂_y f(h, y)`.
    #[inline]
    pub fn df(&self, h: f64, y: f64) -> f64 {
        let t = (h + y).tanh();
        (1.0 - t * t) / (1.0 - self.q_star) - 1.0
    }

    /// `f(h, y+δ) − f(h, y)` without cancellation for small `δ`.
    #[inline]
    pub fn f_increment(&self, h: f64, y: f64, delta: f64) -> f64 {
        let a = h + y;
        delta.sinh() / ((a + delta).cosh() * a.cosh()) / (1.0 - self.q_star) - delta
    }

    /// `E[φ(𝖧,𝖸′)·φ(𝖧,𝖸″)]` and `½E[(φ(𝖧,𝖸′)−φ(𝖧,𝖸″))²]` for the pair whose
    /// covariance is `κ*(δ* − dev)`. `inc(h, y, δ)` must return
    /// `φ(h, y+δ) − φ(h, y)`; the conditional variance is built from these
    /// increments so that it keeps relative accuracy as `dev → 0`.
    pub fn pair_with(&self, dev: f64, phi: impl Fn(f64, f64) -> f64, inc: impl Fn(f64, f64, f64) -> f64) -> PairValue {
        let dev = dev.clamp(0.0, self.delta_star);
        let shared = (self.kappa * (self.delta_star - dev)).max(0.0).sqrt();
        let own = (self.kappa * dev).max(0.0).sqrt();
        let (nodes, weights) = (&self.rule.nodes, &self.rule.weights);
        let mut inner = vec![0.0; nodes.len()];
        let (mut value, mut deviation) = (0.0, 0.0);
        for &(h, wh) in &self.field {
            let (mut v_h, mut d_h) = (0.0, 0.0);
            for (&gi, &wi) in nodes.iter().zip(weights) {
                let base = shared * gi;
                for (slot, &gj) in inner.iter_mut().zip(nodes) {
                    *slot = inc(h, base, own * gj);
                }
                let shift: f64 = inner.iter().zip(weights).map(|(&d, &w)| w * d).sum();
                let var: f64 = inner.iter().zip(weights).map(|(&d, &w)| w * (d - shift) * (d - shift)).sum();
                let mean = phi(h, base) + shift;
                v_h += wi * mean * mean;
                d_h += wi * var;
            }
            value += wh * v_h;
            deviation += wh * d_h;
        }
        PairValue { value, deviation }
    }

    /// [`pair_with`](Self::pair_with) for a generic `φ`, with increments by
    /// subtraction.
    pub fn pair(&self, dev: f64, phi: impl Fn(f64, f64) -> f64) -> PairValue {
        self.pair_with(dev, &phi, |h, y, d| phi(h, y + d) - phi(h, y))
    }

    /// The pair expectation for `f` itself.
    pub fn pair_f(&self, dev: f64) -> PairValue {
        self.pair_with(dev, |h, y| self.f(h, y), |h, y, d| self.f_increment(h, y, d))
    }

    /// The contraction map `g(δ)` for `δ ∈ [0, δ*]`.
    pub fn g_map(&self, delta: f64) -> Result<f64> {
        if !(delta >= -1e-12 && delta <= self.delta_star + 1e-12) {
            return domain(format!("delta = {delta} outside [0, {}]", self.delta_star));
        }
        let dev = self.delta_star - delta.clamp(0.0, self.delta_star);
        Ok(self.pair_f(dev).value)
    }

    /// `δ* − g(δ*−dev)`, evaluated without cancellation.
    pub fn g_deviation(&self, dev: f64) -> f64 {
        self.pair_f(dev).deviation
    }

    /// `g′(δ) = κ* E[∂_y f(𝖧,𝖸′) ∂_y f(𝖧,𝖸″)]`.
    pub fn g_prime(&self, delta: f64) -> Result<f64> {
        if !(0.0..=self.delta_star).contains(&delta) {
            return domain(format!("delta = {delta} outside [0, {}]", self.delta_star));
        }
        Ok(self.kappa * self.pair(self.delta_star - delta, |h, y| self.df(h, y)).value)
    }

    /// `E[∂_y f(𝖧, σ*𝖦)]`, zero at the fixed point.
    pub fn divergence(&self) -> f64 {
        let s = self.sigma_sq.sqrt();
        self.field.iter().map(|&(h, wh)| wh * self.rule.expect(|g| self.df(h, s * g))).sum()
    }

    /// Quadrature points of the field law.
    pub fn field_nodes(&self) -> &[(f64, f64)] {
        &self.field
    }

    pub fn rule(&self) -> &NormalRule {
        &self.rule
    }
}

/// Gram matrix `Δ_t` with its deviations `δ* − δ_{ss′}`.
#[derive(Debug, Clone)]
pub struct SEState {
    pub t: usize,
    /// Row-major `t × t` entries `δ_{ss′}`.
    pub delta: Vec<Vec<f64>>,
    /// Row-major `t × t` deviations `δ* − δ_{ss′}`; zero on the diagonal.
    pub dev: Vec<Vec<f64>>,
    pub kernel: SeKernel,
}

impl SEState {
    pub fn new(kernel: SeKernel) -> Self {
        SEState { t: 0, delta: Vec::new(), dev: Vec::new(), kernel }
    }

    pub fn delta_star(&self) -> f64 {
        self.kernel.delta_star
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.t, self.t, |i, j| self.delta[i][j])
    }

    /// Leading `k × k` block.
    pub fn truncated(&self, k: usize) -> SEState {
        let k = k.min(self.t);
        SEState {
            t: k,
            delta: self.delta[..k].iter().map(|r| r[..k].to_vec()).collect(),
            dev: self.dev[..k].iter().map(|r| r[..k].to_vec()).collect(),
            kernel: self.kernel.clone(),
        }
    }

    /// CSV rows of `Δ_t`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.delta {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Deviation between `Δ_t` and the all-`δ*` matrix, with `δ_{ss} = δ*`.
    fn deviation_entry(&self, s: usize, r: usize) -> f64 {
        self.dev[s][r]
    }

    /// Increments `T = WΔWᵀ` with `(Wx)_k = x_k − x_{k−1}`, built from the
    /// deviations. `T` is tridiagonal up to rounding for this recursion and
    /// well conditioned after diagonal scaling.
    fn increment_matrix(&self) -> DMatrix<f64> {
        let t = self.t;
        let e = |s: usize, r: usize| -> f64 {
            if s == 0 || r == 0 {
                f64::NAN
            } else {
                self.deviation_entry(s - 1, r - 1)
            }
        };
        DMatrix::from_fn(t, t, |i, j| {
            let (k, l) = (i + 1, j + 1);
            match (k, l) {
                (1, 1) => self.delta_star(),
                (1, _) => -(e(1, l) - e(1, l - 1)),
                (_, 1) => -(e(k, 1) - e(k - 1, 1)),
                _ => -((e(k, l) - e(k - 1, l)) - (e(k, l - 1) - e(k - 1, l - 1))),
            }
        })
    }

    /// A factor `C` with `CCᵀ = Δ_t`, accurate entrywise even when `Δ_t` is
    /// numerically singular. `C = W⁻¹ S⁻¹ L̃` where `L̃` is the Cholesky factor
    /// of the diagonally scaled increment matrix.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        let t = self.t;
        let tm = self.increment_matrix();
        let scale: Vec<f64> = (0..t).map(|i| tm[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
        let scaled = DMatrix::from_fn(t, t, |i, j| tm[(i, j)] / (scale[i] * scale[j]));
        let chol = scaled.cholesky().ok_or_else(|| {
            crate::error::Error::Domain("state-evolution Gram matrix is not positive definite".into())
        })?;
        let l = chol.l();
        let mut c = DMatrix::from_fn(t, t, |i, j| scale[i] * l[(i, j)]);
        for i in 1..t {
            for j in 0..t {
                c[(i, j)] += c[(i - 1, j)];
            }
        }
        Ok(c)
    }

    /// `xᵀ Δ_t⁻¹ x` through the increment matrix.
    pub fn inverse_quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let c = self.factor()?;
        let y = c
            .solve_lower_triangular(&DVector::from_column_slice(x))
            .ok_or_else(|| crate::error::Error::Domain("singular factor".into()))?;
        Ok(y.norm_squared())
    }

    /// Same quadratic form by a dense Cholesky of `Δ_t`; loses accuracy once
    /// `Δ_t` is close to singular.
    pub fn inverse_quadratic_form_dense(&self, x: &[f64]) -> Option<f64> {
        let chol = self.matrix().cholesky()?;
        let v = DVector::from_column_slice(x);
        Some(v.dot(&chol.solve(&v)))
    }

    /// Smallest eigenvalue of `Δ_t`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        self.matrix().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// State at `t = 0` for a model.
pub fn se_init(model: &ModelSpec, constants: &RSConstants, order: usize) -> Result<SEState> {
    Ok(SEState::new(SeKernel::new(model, constants, order)?))
}

/// Appends column `t+1`: `δ_{s,t+1} = E[f(𝖧,𝖸_{s−1}) f(𝖧,𝖸_t)]` where the
/// covariance argument is `δ_{s−1,t}`, taken as `0` for `s = 1` (and as `δ*`
/// for the very first entry, where both arguments are `𝖸₀`).
pub fn se_advance(state: &SEState, exec: Execution) -> SEState {
    let t = state.t;
    let ds = state.delta_star();
    let kernel = &state.kernel;
    let column: Vec<PairValue> = map_indexed(exec, t + 1, |i| {
        let s = i + 1;
        let arg_dev = if s == 1 {
            if t == 0 {
                0.0
            } else {
                ds
            }
        } else if s == t + 1 {
            0.0
        } else {
            state.dev[s - 2][t - 1]
        };
        kernel.pair_f(arg_dev)
    });

    let mut delta = state.delta.clone();
    let mut dev = state.dev.clone();
    for row in delta.iter_mut() {
        row.push(0.0);
    }
    for row in dev.iter_mut() {
        row.push(0.0);
    }
    delta.push(vec![0.0; t + 1]);
    dev.push(vec![0.0; t + 1]);
    for (i, pv) in column.iter().enumerate() {
        let (v, d) = if i == t {
            (pv.value.clamp(0.0, ds.max(pv.value)), 0.0)
        } else {
            (pv.value.clamp(0.0, ds), pv.deviation.clamp(0.0, ds))
        };
        delta[i][t] = v;
        delta[t][i] = v;
        dev[i][t] = d;
        dev[t][i] = d;
    }
    SEState { t: t + 1, delta, dev, kernel: state.kernel.clone() }
}

/// Runs the recursion to `t_max`.
pub fn se_run(
    model: &ModelSpec,
    constants: &RSConstants,
    t_max: usize,
    order: usize,
    exec: Execution,
) -> Result<SEState> {
    let mut state = se_init(model, constants, order)?;
    for _ in 0..t_max {
        state = se_advance(&state, exec);
    }
    Ok(state)
}

/// Convergence summary of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeLimitReport {
    pub t: usize,
    pub degenerate: bool,
    /// `max_{s,s′ ≥ t−2} |δ_{ss′} − δ*|`.
    pub tail_max_deviation: f64,
    /// `δ* − δ_{k−1,k}` for `k = 2..t`.
    pub superdiagonal_deviation: Vec<f64>,
    /// Successive ratios of the superdiagonal deviations.
    pub decay_ratios: Vec<f64>,
    /// Geometric rate from a log-linear least-squares fit.
    pub fitted_rate: Option<f64>,
    /// `|δ_{k−1,k} − δ*| ≤ (1/2)^{k−1}δ* + 1e-9` for every `k ≤ t`.
    pub half_power_bound_holds: bool,
}

pub fn se_limit_check(state: &SEState) -> SeLimitReport {
    let t = state.t;
    let ds = state.delta_star();
    if t < 3 {
        return SeLimitReport {
            t,
            degenerate: true,
            tail_max_deviation: f64::NAN,
            superdiagonal_deviation: Vec::new(),
            decay_ratios: Vec::new(),
            fitted_rate: None,
            half_power_bound_holds: true,
        };
    }
    let lo = t - 3;
    let mut tail = 0.0f64;
    for s in lo..t {
        for r in lo..t {
            tail = tail.max(state.dev[s][r].abs());
        }
    }
    let sup: Vec<f64> = (1..t).map(|k| state.dev[k - 1][k]).collect();
    let ratios: Vec<f64> = sup.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
    let bound = sup.iter().enumerate().all(|(i, &d)| d.abs() <= 0.5f64.powi(i as i32 + 1) * ds + 1e-9);
    let pts: Vec<(f64, f64)> =
        sup.iter().enumerate().filter(|(_, &d)| d > 0.0).map(|(i, &d)| (i as f64, d.ln())).collect();
    let fitted_rate = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        (sxy / sxx).exp()
    });
    SeLimitReport {
        t,
        degenerate: ds == 0.0,
        tail_max_deviation: tail,
        superdiagonal_deviation: sup,
        decay_ratios: ratios,
        fitted_rate,
        half_power_bound_holds: bound,
    }
}
