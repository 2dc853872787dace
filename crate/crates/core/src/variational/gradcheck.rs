//! Central finite differences against analytic gradients.

use serde::{Deserialize, Serialize};

/// Per-coordinate comparison at three step sizes `h, h/2, h/4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub base_step: f64,
    /// Richardson-extrapolated differences from the two smallest steps.
    pub numeric: Vec<f64>,
    pub analytic: Vec<f64>,
    /// `|numeric − analytic| / max(|analytic|, floor)`.
    pub max_rel_error: f64,
    /// Largest gap between the two Richardson estimates, relative as above.
    pub richardson_gap: f64,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol && self.richardson_gap <= tol
    }
}

/// Relative errors use `max(|g_i|, floor)` in the denominator so that
/// vanishing partials are compared on an absolute scale.
pub fn gradcheck(
    f: &dyn Fn(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    base_step: f64,
    floor: f64,
) -> GradcheckReport {
    assert_eq!(analytic.len(), x.len(), "gradient length");
    let central = |i: usize, h: f64| {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    };
    let mut numeric = Vec::with_capacity(x.len());
    let (mut max_rel_error, mut richardson_gap) = (0.0f64, 0.0f64);
    for (i, &g) in analytic.iter().enumerate() {
        let h = base_step * (1.0 + x[i].abs());
        let d = [central(i, h), central(i, h / 2.0), central(i, h / 4.0)];
        let r1 = (4.0 * d[1] - d[0]) / 3.0;
        let r2 = (4.0 * d[2] - d[1]) / 3.0;
        let scale = g.abs().max(floor);
        max_rel_error = max_rel_error.max((r2 - g).abs() / scale);
        richardson_gap = richardson_gap.max((r2 - r1).abs() / scale);
        numeric.push(r2);
    }
    GradcheckReport { base_step, numeric, analytic: analytic.to_vec(), max_rel_error, richardson_gap }
}
