//! Small numeric helpers: grids, moments, bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` evenly spaced points covering `[lo, hi]` inclusive.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| lo + step * i as f64).collect()
        }
    }
}

/// `n` logarithmically spaced points covering `[lo, hi]` inclusive;
/// `lo` and `hi` must be positive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0, "log grid bounds must be positive");
    lin_space(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (denominator `N − 1`); zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Standard error of the mean.
pub fn sem(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Percentile bootstrap confidence interval for the mean.
pub fn bootstrap_mean_ci(xs: &[f64], n_resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    assert!(!xs.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let s: f64 = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).sum();
            s / xs.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lo = ((n_resamples as f64 * alpha) as usize).min(n_resamples - 1);
    let hi = ((n_resamples as f64 * (1.0 - alpha)) as usize).min(n_resamples - 1);
    (means[lo], means[hi])
}


/// SplitMix64 finalizer: a well-mixed 64-bit hash used to derive independent
/// seeds from structured indices.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
