//! Symmetric 2×2 matrices `[[γ, ν], [ν, ρ]]` and a damped Newton solver over
//! their three free entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_law::SpectralLaw;

/// The matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Eigenvalues (descending) and the rotation whose columns are eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub values: [f64; 2],
    /// `(cos θ, sin θ)`: the first eigenvector; the second is `(−sin θ, cos θ)`.
    pub rotation: (f64, f64),
}

impl Sym2 {
    pub const E_GAMMA: Sym2 = Sym2 { a: 1.0, b: 0.0, c: 0.0 };
    pub const E_NU: Sym2 = Sym2 { a: 0.0, b: 1.0, c: 0.0 };
    pub const E_RHO: Sym2 = Sym2 { a: 0.0, b: 0.0, c: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Sym2 { a, b, c }
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Sym2::new(x[0], x[1], x[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    /// `Tr(self · other)`.
    pub fn trace_product(&self, other: &Sym2) -> f64 {
        self.a * other.a + 2.0 * self.b * other.b + self.c * other.c
    }

    /// `self + s·I`.
    pub fn shifted(&self, s: f64) -> Sym2 {
        Sym2::new(self.a + s, self.b, self.c + s)
    }

    pub fn scaled(&self, k: f64) -> Sym2 {
        Sym2::new(k * self.a, k * self.b, k * self.c)
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }

    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2::new(self.c / d, -self.b / d, self.a / d)
    }

    /// `self · x`.
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [self.a * x[0] + self.b * x[1], self.b * x[0] + self.c * x[1]]
    }

    /// `xᵀ self y`.
    pub fn bilinear(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let sy = self.apply(y);
        x[0] * sy[0] + x[1] * sy[1]
    }

    /// `self · e · self`.
    pub fn sandwich(&self, e: &Sym2) -> Sym2 {
        let m = |p: &Sym2, q: &Sym2| -> [[f64; 2]; 2] {
            [[p.a * q.a + p.b * q.b, p.a * q.b + p.b * q.c], [p.b * q.a + p.c * q.b, p.b * q.b + p.c * q.c]]
        };
        let ke = m(self, e);
        Sym2::new(
            ke[0][0] * self.a + ke[0][1] * self.b,
            ke[0][0] * self.b + ke[0][1] * self.c,
            ke[1][0] * self.b + ke[1][1] * self.c,
        )
    }

    pub fn eigen(&self) -> Eigen2 {
        let m = 0.5 * (self.a + self.c);
        let h = 0.5 * (self.a - self.c);
        let r = h.hypot(self.b);
        let top = m + r;
        let bottom = if m > 0.0 && top > 0.0 { self.det() / top } else { m - r };
        let theta = 0.5 * self.b.atan2(h);
        Eigen2 { values: [top, bottom], rotation: (theta.cos(), theta.sin()) }
    }

    /// `∫ f(x) dμ` entrywise.
    pub fn integrate(law: &SpectralLaw, f: impl Fn(f64) -> Sym2) -> Sym2 {
        Sym2::new(law.integrate(&|x| f(x).a), law.integrate(&|x| f(x).b), law.integrate(&|x| f(x).c))
    }
}

impl Eigen2 {
    /// `Σ f(λ_k) v_k v_kᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Sym2 {
        let (c, s) = self.rotation;
        let (f0, f1) = (f(self.values[0]), f(self.values[1]));
        Sym2::new(f0 * c * c + f1 * s * s, (f0 - f1) * c * s, f0 * s * s + f1 * c * c)
    }

    /// `QᵀEQ` in the eigenbasis.
    fn rotate(&self, e: &Sym2) -> [[f64; 2]; 2] {
        let (c, s) = self.rotation;
        let v = [[c, s], [-s, c]];
        let mut out = [[0.0; 2]; 2];
        for (i, vi) in v.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                out[i][j] = e.bilinear(*vi, *vj);
            }
        }
        out
    }

    /// Hessian in `(γ, ν, ρ)` of `sign · Σ φ(λ_k)` where `φ′ = g`, by the
    /// Daleckii–Krein formula.
    pub fn trace_hessian(&self, g: impl Fn(f64) -> f64, g_prime: impl Fn(f64) -> f64, sign: f64) -> [[f64; 3]; 3] {
        let l = self.values;
        let mut dd = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let gap = l[i] - l[j];
                dd[i][j] = if gap.abs() <= 1e-7 * (1.0 + l[i].abs()) {
                    g_prime(0.5 * (l[i] + l[j]))
                } else {
                    (g(l[i]) - g(l[j])) / gap
                };
            }
        }
        let dirs = [Sym2::E_GAMMA, Sym2::E_NU, Sym2::E_RHO].map(|e| self.rotate(&e));
        let mut h = [[0.0; 3]; 3];
        for p in 0..3 {
            for q in 0..3 {
                let mut acc = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        acc += dd[i][j] * dirs[p][i][j] * dirs[q][j][i];
                    }
                }
                h[p][q] = sign * acc;
            }
        }
        h
    }
}

/// Result of [`newton3`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Newton3 {
    pub point: Sym2,
    pub value: f64,
    pub gradient: [f64; 3],
    pub grad_norm: f64,
    pub iterations: usize,
    /// The line search was blocked by the feasibility boundary.
    pub boundary_active: bool,
}

fn norm3(g: &[f64; 3]) -> f64 {
    (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
}

/// Damped Newton for a smooth convex function of `(γ, ν, ρ)`. `objective`
/// returns `None` outside the feasible set; steps are halved until the trial
/// point is feasible and satisfies the Armijo condition.
pub fn newton3(
    start: Sym2,
    objective: impl Fn(&Sym2) -> Option<f64>,
    gradient: impl Fn(&Sym2) -> [f64; 3],
    hessian: impl Fn(&Sym2) -> [[f64; 3]; 3],
    tol: f64,
    max_iter: usize,
) -> Result<Newton3> {
    let mut x = start;
    let mut fx = objective(&x).ok_or_else(|| Error::Domain(format!("start {start:?} is infeasible")))?;
    let mut boundary_active = false;
    for it in 0..max_iter {
        let g = gradient(&x);
        let gn = norm3(&g);
        if gn <= tol {
            return Ok(Newton3 { point: x, value: fx, gradient: g, grad_norm: gn, iterations: it, boundary_active });
        }
        let h = nalgebra::Matrix3::from_fn(|i, j| hessian(&x)[i][j]);
        let gv = nalgebra::Vector3::new(g[0], g[1], g[2]);
        let step = match h.cholesky() {
            Some(ch) => -ch.solve(&gv),
            None => -gv,
        };
        let slope = gv.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        let mut blocked = false;
        for _ in 0..80 {
            let trial = x.add(&Sym2::new(t * step[0], t * step[1], t * step[2]));
            match objective(&trial) {
                Some(ft) if ft <= fx + 1e-4 * t * slope => {
                    accepted = Some((trial, ft));
                    break;
                }
                // Rounding can flatten the last few digits near the optimum.
                Some(ft) if ft <= fx + 1e-15 * fx.abs().max(1.0) && gn < 1e-6 => {
                    accepted = Some((trial, ft));
                    break;
                }
                None => blocked = true,
                _ => {}
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                if t < 1.0 && blocked {
                    boundary_active = true;
                }
                let moved = (trial.a - x.a).abs() + (trial.b - x.b).abs() + (trial.c - x.c).abs();
                x = trial;
                fx = ft;
                if moved <= 1e-16 * (1.0 + x.a.abs() + x.c.abs()) {
                    let g = gradient(&x);
                    return Ok(Newton3 {
                        point: x,
                        value: fx,
                        gradient: g,
                        grad_norm: norm3(&g),
                        iterations: it + 1,
                        boundary_active,
                    });
                }
            }
            None => {
                let g = gradient(&x);
                let gn = norm3(&g);
                if gn <= 1e-8 || blocked {
                    return Ok(Newton3 {
                        point: x,
                        value: fx,
                        gradient: g,
                        grad_norm: gn,
                        iterations: it + 1,
                        boundary_active: blocked,
                    });
                }
                return Err(Error::BarrierStall { iterations: it + 1, last: x.to_array(), grad_norm: gn });
            }
        }
    }
    let g = gradient(&x);
    Err(Error::BarrierStall { iterations: max_iter, last: x.to_array(), grad_norm: norm3(&g) })
}
