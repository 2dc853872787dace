//! Ground-truth free energies at small n: exact enumeration of the Ising
//! partition function, the deterministic finite-n spherical value and the
//! annealed zero-field limit.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble_sim::{sample_model, CouplingSample, Placement};
use crate::error::{domain, Error, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::derive_seed;
use crate::rs_core::{integral_r, ModelSpec};
use crate::variational::{default_epsilon, hciz_rank1, Rank1Exponent};

/// Largest `n` accepted by exact enumeration.
pub const MAX_ENUMERATION_N: usize = 24;
/// Spins fixed per parallel chunk once `n` exceeds [`SPLIT_MIN_N`].
const SPLIT_BITS: usize = 6;
const SPLIT_MIN_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub n: usize,
    pub log_z: f64,
    pub beta: f64,
    pub seed: u64,
    /// Largest exponent `½σᵀJ̄σ + hᵀσ` over all configurations.
    pub max_energy: f64,
    pub wall_time_s: f64,
}

/// Running `log Σ exp(e)`.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    #[inline]
    fn push(&mut self, e: f64) {
        if e <= self.max {
            self.sum += (e - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - e).exp() + 1.0;
            self.max = e;
        }
    }

    fn merge(&mut self, other: LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Sweeps the low `free` spins by Gray code with the remaining spins fixed
/// by `prefix`. Flipping spin `i` by `δ = −2σᵢ` changes the energy by
/// `δ(vᵢ + hᵢ) + 2J_ii` where `v = Jσ`.
fn gray_sweep(j: &DMatrix<f64>, h: &[f64], free: usize, prefix: usize) -> LogSumExp {
    let n = h.len();
    let mut sigma = vec![1.0f64; n];
    for b in free..n {
        if (prefix >> (b - free)) & 1 == 1 {
            sigma[b] = -1.0;
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| (0..n).map(|k| j[(i, k)] * sigma[k]).sum()).collect();
    let mut energy: f64 = (0..n).map(|i| 0.5 * sigma[i] * v[i] + h[i] * sigma[i]).sum();
    let mut acc = LogSumExp::new();
    acc.push(energy);
    for g in 1u64..(1u64 << free) {
        let i = g.trailing_zeros() as usize;
        let delta = -2.0 * sigma[i];
        energy += delta * (v[i] + h[i]) + 2.0 * j[(i, i)];
        let col = j.column(i);
        for (vk, jk) in v.iter_mut().zip(col.iter()) {
            *vk += delta * jk;
        }
        sigma[i] = -sigma[i];
        acc.push(energy);
    }
    acc
}

/// `log Σ_σ exp(½σᵀJσ + hᵀσ)` for a dense symmetric `J`, with the running
/// maximum exponent.
pub fn log_z_dense(j: &DMatrix<f64>, h: &[f64], exec: Execution) -> Result<(f64, f64)> {
    let n = h.len();
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(n));
    }
    if n == 0 || j.nrows() != n || j.ncols() != n {
        return domain("coupling and field dimensions disagree");
    }
    let split = if n > SPLIT_MIN_N { SPLIT_BITS } else { 0 };
    let free = n - split;
    let parts = map_indexed(exec, 1usize << split, |p| gray_sweep(j, h, free, p));
    let mut acc = LogSumExp::new();
    for part in parts {
        acc.merge(part);
    }
    Ok((acc.value(), acc.max))
}

/// Exact `log Z` for the sample's coupling `J̄ = βOᵀDO` and field.
pub fn exact_log_z(sample: &CouplingSample, model: &ModelSpec, exec: Execution) -> Result<EnumerationResult> {
    if sample.n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(sample.n));
    }
    let start = Instant::now();
    let j = sample.coupling_dense(model.beta);
    let (log_z, max_energy) = log_z_dense(&j, &sample.h, exec)?;
    Ok(EnumerationResult {
        n: sample.n,
        log_z,
        beta: model.beta,
        seed: sample.seed,
        max_energy,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Direct `O(2ⁿn²)` evaluation of `log Z`, kept as a reference for the Gray
/// sweep.
pub fn naive_log_z(j: &DMatrix<f64>, h: &[f64]) -> Result<f64> {
    let n = h.len();
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(n));
    }
    let energies: Vec<f64> = (0u64..(1u64 << n))
        .map(|mask| {
            let s: Vec<f64> = (0..n).map(|i| if (mask >> i) & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let mut e = 0.0;
            for a in 0..n {
                e += h[a] * s[a];
                for b in 0..n {
                    e += 0.5 * s[a] * j[(a, b)] * s[b];
                }
            }
            e
        })
        .collect();
    let m = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(m + energies.iter().map(|e| (e - m).exp()).sum::<f64>().ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedEstimate {
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean; absent for a single replicate.
    pub std_error: Option<f64>,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Average of `n⁻¹ log Z` over replicates with seeds `derive_seed(seed, r)`.
pub fn quenched_free_energy(
    model: &ModelSpec,
    n: usize,
    replicates: usize,
    seed: u64,
    placement: Placement,
    exec: Execution,
) -> Result<QuenchedEstimate> {
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge(n));
    }
    if replicates == 0 {
        return domain("replicates must be positive");
    }
    let seeds: Vec<u64> = (0..replicates as u64).map(|r| derive_seed(seed, r)).collect();
    let values = map_indexed(exec, replicates, |r| -> Result<f64> {
        let sample = sample_model(model, n, seeds[r], placement)?;
        Ok(exact_log_z(&sample, model, exec)?.log_z / n as f64)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std_error = (replicates > 1).then(|| {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    });
    Ok(QuenchedEstimate { n, mean, std_error, values, seeds })
}

/// `log 2 + ½∫₀¹ R̄(z)dz`, the zero-field annealed free energy.
pub fn annealed_h0(model: &ModelSpec) -> Result<f64> {
    if !model.field.is_zero() {
        return domain("annealed value requires a zero field");
    }
    let dbar = model.dbar();
    if !(1.0 < dbar.cauchy_at_dplus()) {
        return domain("annealed value requires 1 < G(d+)/beta");
    }
    Ok(std::f64::consts::LN_2 + 0.5 * integral_r(&dbar, 1.0)?)
}

/// Finite-n spherical free energy and its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereFinite {
    pub value: f64,
    pub exponent: Rank1Exponent,
}

/// `½ min_γ { γ + n⁻¹(Oh)ᵀ(γ−D̄)⁻¹(Oh) − n⁻¹log det(γ−D̄) − 1 }`.
pub fn spherical_finite_n(sample: &CouplingSample, model: &ModelSpec) -> Result<SphereFinite> {
    if !(model.beta < model.spectral.cauchy_at_dplus()) {
        return domain("beta must be below G(d+)");
    }
    let n = sample.n;
    let a = vec![1.0; n];
    let b = sample.o.apply(&sample.h);
    let d: Vec<f64> = sample.d.iter().map(|&x| model.beta * x).collect();
    let dplus = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exponent = hciz_rank1(&a, &b, &d, default_epsilon(dplus))?;
    Ok(SphereFinite { value: 0.5 * exponent.value, exponent })
}
