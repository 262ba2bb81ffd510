//! Special functions: log-gamma, regularized incomplete gamma and beta.
//!
//! The incomplete functions use the classic power-series / Lentz continued
//! fraction split, switching representation where each converges fastest.

use std::f64::consts::PI;

const MAX_ITER: usize = 10_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Lanczos coefficients for g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x), `a > 0`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).0
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x), `a > 0`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).1
}

/// Both P(a, x) and Q(a, x), each computed from its well-conditioned side.
pub fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series: P = e^{-x} x^a / Γ(a+1) · Σ x^n / ((a+1)…(a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (log_prefix.exp() * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // continued fraction for Q (modified Lentz)
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (log_prefix.exp() * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Regularized incomplete beta I_x(a, b), `a, b > 0`, `x` clamped to [0, 1].
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let log_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = log_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Log of the Poisson probability mass at `k` with mean `m > 0`.
pub(crate) fn ln_poisson(k: usize, m: f64) -> f64 {
    let k = k as f64;
    k * m.ln() - m - ln_gamma(k + 1.0)
}

/// Sum of `weight(j) * value(j)` over Poisson(m) weights, walking outward from
/// the mode and stopping once the unvisited Poisson mass drops below `tail`.
/// `value` must be bounded by 1 in magnitude for the stopping rule to bound
/// the truncation error.
pub(crate) fn poisson_mixture<F: Fn(usize) -> f64>(m: f64, tail: f64, value: F) -> f64 {
    if m <= 0.0 {
        return value(0);
    }
    let mode = m.floor() as usize;
    let mut total = 0.0;
    let mut mass = 0.0;
    let w_mode = ln_poisson(mode, m).exp();
    total += w_mode * value(mode);
    mass += w_mode;

    // upward and downward weights via the recurrences w_{j+1} = w_j m/(j+1)
    let mut up_w = w_mode;
    let mut up_j = mode;
    let mut down_w = w_mode;
    let mut down_j = mode;
    let mut steps = 0usize;
    while 1.0 - mass > tail && steps < 1_000_000 {
        steps += 1;
        let mut advanced = false;
        if down_j > 0 {
            down_w *= down_j as f64 / m;
            down_j -= 1;
            total += down_w * value(down_j);
            mass += down_w;
            advanced = true;
        }
        up_w *= m / (up_j + 1) as f64;
        up_j += 1;
        total += up_w * value(up_j);
        mass += up_w;
        if !advanced && up_w < tail * 1e-3 {
            break;
        }
    }
    total
}
