//! One-sample Kolmogorov–Smirnov test against a fully specified cdf.

use std::f64::consts::PI;

/// KS distance between the empirical cdf of `sorted` and `cdf_values`,
/// where `cdf_values[i]` is the model cdf at `sorted[i]`.
pub fn ks_statistic(cdf_values: &[f64]) -> f64 {
    let n = cdf_values.len() as f64;
    cdf_values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // P(K ≤ x) = √(2π)/x Σ exp(−(2k−1)²π²/(8x²))
        let mut acc = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            let t = (-(m * m) * PI * PI / (8.0 * x * x)).exp();
            acc += t;
            if t < 1e-17 * acc {
                break;
            }
        }
        (1.0 - (2.0 * PI).sqrt() / x * acc).clamp(0.0, 1.0)
    } else {
        let mut acc = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let t = (-2.0 * kf * kf * x * x).exp();
            acc += if k % 2 == 1 { t } else { -t };
            if t < 1e-17 {
                break;
            }
        }
        (2.0 * acc).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for a KS distance `d` from `n` observations.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    kolmogorov_sf((n as f64).sqrt() * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_quantiles() {
        // classical critical values of the limiting distribution
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.2238) - 0.10).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(5.0) < 1e-20);
    }

    #[test]
    fn branches_agree_at_switch() {
        let a = kolmogorov_sf(1.18 - 1e-9);
        let b = kolmogorov_sf(1.18 + 1e-9);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn statistic_of_perfect_grid() {
        // uniform cdf at midpoints of n bins gives D = 1/(2n)
        let n = 10;
        let vals: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!((ks_statistic(&vals) - 0.05).abs() < 1e-15);
    }
}
