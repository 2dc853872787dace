//! One-dimensional root finding and convex minimization.

/// Root of a continuous `f` on `[lo, hi]` with `f(lo)` and `f(hi)` of
/// opposite sign. Bisection down to `bisect_tol` relative width, then
/// Newton steps that are kept only while they stay inside the bracket.
pub fn bisect_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    bisect_tol: f64,
    newton_steps: usize,
) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        if (hi - lo) <= bisect_tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..newton_steps {
        let fx = f(x);
        let d = df(x);
        if fx == 0.0 || d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            break;
        }
        if (next - x).abs() <= 1e-16 * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Minimizer of a smooth strictly convex function on `[lo, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexMin {
    pub x: f64,
    pub value: f64,
    pub derivative: f64,
    pub second_derivative: f64,
    /// The minimum sits at `lo` with nonnegative derivative there.
    pub at_boundary: bool,
}

/// `phi` returns `(value, first derivative, second derivative)`. The upper
/// end starts at `lo + initial_width` and doubles until the derivative turns
/// positive. A short golden-section pass narrows the bracket before the
/// derivative root is polished.
pub fn minimize_convex(phi: impl Fn(f64) -> (f64, f64, f64), lo: f64, initial_width: f64) -> ConvexMin {
    let d_lo = phi(lo).1;
    if d_lo >= 0.0 {
        let (v, d, d2) = phi(lo);
        return ConvexMin { x: lo, value: v, derivative: d, second_derivative: d2, at_boundary: true };
    }
    let mut width = initial_width.max(1e-8);
    let mut hi = lo + width;
    for _ in 0..200 {
        if phi(hi).1 > 0.0 {
            break;
        }
        width *= 2.0;
        hi = lo + width;
    }

    // Golden-section narrowing on values.
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (phi(c).0, phi(d).0);
    for _ in 0..12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = phi(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = phi(d).0;
        }
    }
    let (mut blo, mut bhi) = (lo, hi);
    if phi(a).1 < 0.0 && phi(b).1 > 0.0 {
        blo = a;
        bhi = b;
    }
    let x = bisect_newton(|x| phi(x).1, |x| phi(x).2, blo, bhi, 1e-9, 30);
    let (value, derivative, second_derivative) = phi(x);
    ConvexMin { x, value, derivative, second_derivative, at_boundary: false }
}
