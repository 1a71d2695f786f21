use rand::Rng;

use crate::classical::nmse_db;
use crate::rng::{rng_for, stream};

pub const BOOTSTRAP_REPS: usize = 1000;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn percentile_interval(mut stats: Vec<f64>) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let n = stats.len();
    let at = |q: f64| stats[((q * n as f64).floor() as usize).min(n - 1)];
    (at(0.025), at(0.975))
}

/// Percentile bootstrap 95% interval for `nmse_db(mean(values))`.
pub fn bootstrap_db_ci(values: &[f64], reps: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = rng_for(seed, stream::BOOTSTRAP, 0);
    let n = values.len();
    let stats = (0..reps.max(1))
        .map(|_| {
            let s: f64 = (0..n).map(|_| values[rng.gen_range(0..n)]).sum();
            nmse_db(s / n as f64)
        })
        .collect();
    percentile_interval(stats)
}

/// Bootstrap 95% interval of `dB(mean a) - dB(mean b)`. Equal-length inputs
/// are treated as paired (same test samples) and resampled jointly.
pub fn bootstrap_diff_db(a: &[f64], b: &[f64], reps: usize, seed: u64) -> (f64, f64, f64) {
    let point = nmse_db(mean(a)) - nmse_db(mean(b));
    if a.is_empty() || b.is_empty() {
        return (point, f64::NAN, f64::NAN);
    }
    let mut rng = rng_for(seed, stream::BOOTSTRAP, 1);
    let paired = a.len() == b.len();
    let stats = (0..reps.max(1))
        .map(|_| {
            let (mut sa, mut sb) = (0.0, 0.0);
            if paired {
                for _ in 0..a.len() {
                    let i = rng.gen_range(0..a.len());
                    sa += a[i];
                    sb += b[i];
                }
            } else {
                for _ in 0..a.len() {
                    sa += a[rng.gen_range(0..a.len())];
                }
                for _ in 0..b.len() {
                    sb += b[rng.gen_range(0..b.len())];
                }
            }
            nmse_db(sa / a.len() as f64) - nmse_db(sb / b.len() as f64)
        })
        .collect();
    let (lo, hi) = percentile_interval(stats);
    (point, lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution tail `P(K > lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against `Uniform[lo, hi]`.
pub fn ks_uniform(values: &[f64], lo: f64, hi: f64) -> KsResult {
    let mut v: Vec<f64> = values.iter().map(|x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &f)| ((i + 1) as f64 / n - f).max(f - i as f64 / n))
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_accepts_grid_and_rejects_skew() {
        let even: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform(&even, 0.0, 1.0).p_value > 0.99);
        let skewed: Vec<f64> = even.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed, 0.0, 1.0).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_point() {
        // P(K > 1.36) is the classic 5% critical value.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let v: Vec<f64> = (0..500).map(|i| 0.1 + 0.001 * (i % 17) as f64).collect();
        let (lo, hi) = bootstrap_db_ci(&v, 500, 1);
        let m = nmse_db(mean(&v));
        assert!(lo <= m && m <= hi && hi - lo < 0.5);
        let (d, lo, hi) = bootstrap_diff_db(&v, &v, 200, 2);
        assert_eq!((d, lo, hi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn std_of_constant_is_zero() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
