//! Quadrature rules: Gauss–Hermite for standard normal expectations and
//! adaptive Gauss–Legendre on finite intervals.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{GaussHermite, GaussLegendre};

use crate::error::{Error, Result};

/// Largest Gauss–Hermite order accepted anywhere in the crate.
pub const MAX_ORDER: usize = 200;

/// Gauss rule for `E f(G)`, `G ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    /// Builds an `order`-point rule. Nodes are seeded from the Golub–Welsch
    /// solve, polished by Newton on the orthonormal Hermite recurrence, and
    /// weighted by Christoffel numbers so that small tail weights keep full
    /// relative accuracy.
    pub fn new(order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::QuadratureOverflow(order));
        }
        let deg = NonZeroUsize::new(order).ok_or_else(|| Error::Domain("quadrature order must be positive".into()))?;
        let seed = GaussHermite::new(deg);
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for &(x, _) in seed.as_node_weight_pairs() {
            let mut z = x * std::f64::consts::SQRT_2;
            for _ in 0..4 {
                let (p, pm1) = hermite_pair(order, z);
                let dp = (order as f64).sqrt() * pm1;
                if dp == 0.0 {
                    break;
                }
                let step = p / dp;
                z -= step;
                if step.abs() <= 1e-15 * (1.0 + z.abs()) {
                    break;
                }
            }
            nodes.push(z);
            weights.push(1.0 / christoffel_sum(order, z));
        }
        let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut nodes, mut weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        // Symmetrize: the rule for a symmetric weight is symmetric.
        let n = nodes.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(NormalRule { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(p_n(x), p_{n-1}(x))` for the orthonormal probabilists' Hermite family.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut pm1 = 0.0;
    let mut p = 1.0;
    for k in 0..n {
        let next = (x * p - (k as f64).sqrt() * pm1) / ((k + 1) as f64).sqrt();
        pm1 = p;
        p = next;
    }
    (p, pm1)
}

fn christoffel_sum(n: usize, x: f64) -> f64 {
    let mut pm1 = 0.0;
    let mut p = 1.0;
    let mut sum = 1.0;
    for k in 0..n - 1 {
        let next = (x * p - (k as f64).sqrt() * pm1) / ((k + 1) as f64).sqrt();
        pm1 = p;
        p = next;
        sum += p * p;
    }
    sum
}

/// Shared, lazily built normal rule of the given order.
pub fn normal_rule(order: usize) -> Result<Arc<NormalRule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<NormalRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&order) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(NormalRule::new(order)?);
    cache.lock().expect("rule cache poisoned").insert(order, rule.clone());
    Ok(rule)
}

fn legendre15() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(15).unwrap()).as_node_weight_pairs().to_vec())
}

fn legendre_panel(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    half * legendre15().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Adaptive Gauss–Legendre integral of `f` over `[a, b]` to absolute
/// tolerance `tol`. Panels are bisected until the 15-point value and the sum
/// over its halves agree.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = legendre_panel(&f, a, b);
    refine(&f, a, b, whole, tol, 0)
}

fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = legendre_panel(f, a, mid);
    let right = legendre_panel(f, mid, b);
    let both = left + right;
    if (both - whole).abs() <= tol || depth >= 40 {
        return both;
    }
    refine(f, a, mid, left, 0.5 * tol, depth + 1) + refine(f, mid, b, right, 0.5 * tol, depth + 1)
}
