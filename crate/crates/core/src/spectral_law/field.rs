use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quad::normal_rule;

fn default_order() -> usize {
    40
}

/// Law `μ_H` of the external field entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldLaw {
    PointMass {
        h: f64,
    },
    Discrete {
        values: Vec<f64>,
        weights: Vec<f64>,
    },
    GaussianField {
        mean: f64,
        sd: f64,
        #[serde(default = "default_order")]
        quadrature_order: usize,
    },
}

impl FieldLaw {
    pub fn point_mass(h: f64) -> Self {
        FieldLaw::PointMass { h }
    }

    pub fn gaussian(mean: f64, sd: f64) -> Self {
        FieldLaw::GaussianField { mean, sd, quadrature_order: default_order() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FieldLaw::PointMass { h } if h.is_finite() => Ok(()),
            FieldLaw::PointMass { .. } => Err(Error::InvalidLaw("field value must be finite".into())),
            FieldLaw::Discrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::InvalidLaw("field atoms and weights must be non-empty and equal length".into()));
                }
                if weights.iter().any(|&w| !(w > 0.0)) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidLaw("field weights must be positive, atoms finite".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLaw(format!("field weights sum to {total}, not 1")));
                }
                Ok(())
            }
            FieldLaw::GaussianField { mean, sd, quadrature_order } => {
                if !mean.is_finite() || !(*sd >= 0.0) || !sd.is_finite() {
                    return Err(Error::InvalidLaw("gaussian field needs finite mean and sd ≥ 0".into()));
                }
                if *quadrature_order == 0 {
                    return Err(Error::InvalidLaw("quadrature order must be positive".into()));
                }
                if *quadrature_order > crate::quad::MAX_ORDER {
                    return Err(Error::QuadratureOverflow(*quadrature_order));
                }
                Ok(())
            }
        }
    }

    /// Quadrature points `(h, weight)` for expectations over `𝖧`: the atoms
    /// themselves, or an `quadrature_order`-point Gauss–Hermite rule.
    pub fn nodes(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        Ok(match self {
            FieldLaw::PointMass { h } => vec![(*h, 1.0)],
            FieldLaw::Discrete { values, weights } => values.iter().cloned().zip(weights.iter().cloned()).collect(),
            FieldLaw::GaussianField { mean, sd, quadrature_order } => {
                if *sd == 0.0 {
                    vec![(*mean, 1.0)]
                } else {
                    let rule = normal_rule(*quadrature_order)?;
                    rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| (mean + sd * x, w)).collect()
                }
            }
        })
    }

    /// Exact moment `E[𝖧^p]`.
    pub fn moment(&self, p: usize) -> f64 {
        match self {
            FieldLaw::PointMass { h } => h.powi(p as i32),
            FieldLaw::Discrete { values, weights } => {
                values.iter().zip(weights).map(|(&x, &w)| w * x.powi(p as i32)).sum()
            }
            FieldLaw::GaussianField { mean, sd, .. } => {
                let mut total = 0.0;
                let mut binom = 1.0;
                for j in 0..=p {
                    let gm = if j % 2 == 1 { 0.0 } else { (1..j).step_by(2).map(|i| i as f64).product::<f64>() };
                    total += binom * mean.powi((p - j) as i32) * sd.powi(j as i32) * gm;
                    binom = binom * (p - j) as f64 / (j + 1) as f64;
                }
                total
            }
        }
    }

    /// True when the field is almost surely zero.
    pub fn is_zero(&self) -> bool {
        match self {
            FieldLaw::PointMass { h } => *h == 0.0,
            FieldLaw::Discrete { values, .. } => values.iter().all(|&v| v == 0.0),
            FieldLaw::GaussianField { mean, sd, .. } => *mean == 0.0 && *sd == 0.0,
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            FieldLaw::PointMass { h } => *h,
            FieldLaw::Discrete { values, weights } => {
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
            FieldLaw::GaussianField { mean, sd, .. } => {
                if *sd == 0.0 {
                    return *mean;
                }
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                mean + sd * normal.inverse_cdf(p)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            FieldLaw::PointMass { h } => *h,
            FieldLaw::Discrete { values, weights } => {
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
            FieldLaw::GaussianField { mean, sd, .. } => {
                let g: f64 = StandardNormal.sample(rng);
                mean + sd * g
            }
        }
    }
}
