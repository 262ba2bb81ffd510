//! Numerical integration over the half line and monotone root bracketing.

use std::f64::consts::FRAC_PI_2;

const MAX_LEVELS: usize = 12;
const TAU_LIMIT: f64 = 5.0;

/// Integrates `f` over `(0, ∞)` with the exp-sinh double-exponential rule.
///
/// `center` sets the geometric midpoint of the node cloud and should be
/// of the order of the bulk of the integrand. `f` may return 0 for
/// arguments where it is negligible; it must be finite elsewhere.
pub(crate) fn exp_sinh<F: Fn(f64) -> f64>(f: F, center: f64, rel_tol: f64) -> f64 {
    let node = |tau: f64| -> f64 {
        let e = (FRAC_PI_2 * tau.sinh()).exp();
        let u = center * e;
        if !u.is_finite() || u <= 0.0 {
            return 0.0;
        }
        let v = f(u);
        if v == 0.0 {
            0.0
        } else {
            v * center * FRAC_PI_2 * tau.cosh() * e
        }
    };

    let mut h = 0.5;
    let mut raw = node(0.0) + walk(&node, h, 1);
    let mut estimate = raw * h;
    for level in 1..MAX_LEVELS {
        h *= 0.5;
        raw += walk(&node, h, 2);
        let next = raw * h;
        let converged = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if converged && level >= 3 {
            break;
        }
    }
    estimate
}

/// Sums `node(±k·h)` for k = 1, 1 + stride, 1 + 2·stride, … walking outward
/// until the terms become negligible or the tau window ends.
fn walk<N: Fn(f64) -> f64>(node: &N, h: f64, stride: usize) -> f64 {
    let mut sum = 0.0;
    for dir in [1.0, -1.0] {
        let mut k = 1usize;
        loop {
            let tau = dir * k as f64 * h;
            if tau.abs() > TAU_LIMIT {
                break;
            }
            let v = node(tau);
            sum += v;
            if v.abs() <= 1e-20 * sum.abs() && tau.abs() > 1.0 {
                break;
            }
            k += stride;
        }
    }
    sum
}

/// Finds `x` with `g(x) = target` for nondecreasing `g` on `[lo, ∞)`,
/// doubling the upper bracket from `hi` then bisecting to full precision.
pub(crate) fn invert_monotone<G: Fn(f64) -> f64>(g: G, target: f64, lo: f64, hi: f64) -> f64 {
    let mut lo = lo;
    let mut hi = hi.max(lo + 1.0);
    let mut guard = 0;
    while g(hi) < target && guard < 2000 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
