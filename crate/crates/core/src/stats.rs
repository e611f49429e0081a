//! Small summary statistics shared by the oracle, trainer and harness.

use serde::{Deserialize, Serialize};

/// Sample mean with its standard error (`sd / sqrt(n)`, `n - 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }
}

/// Running mean over the last `window` values (fewer at the start).
pub fn trailing_means(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Means over complete windows only: entry `k` covers `xs[k..k + window]`.
pub fn full_window_means(xs: &[f64], window: usize) -> Vec<f64> {
    if xs.len() < window || window == 0 {
        return Vec::new();
    }
    let mut sum: f64 = xs[..window].iter().sum();
    let mut out = vec![sum / window as f64];
    for i in window..xs.len() {
        sum += xs[i] - xs[i - window];
        out.push(sum / window as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basics() {
        let m = MeanSe::from_samples(&[0.4, 0.6]);
        assert!((m.mean - 0.5).abs() < 1e-15);
        assert!((m.se - 0.1).abs() < 1e-15);
        assert_eq!(MeanSe::from_samples(&[3.0]).se, 0.0);
    }

    #[test]
    fn trailing() {
        let t = trailing_means(&[1.0, 0.0, 1.0, 1.0], 2);
        assert_eq!(t, vec![1.0, 0.5, 0.5, 1.0]);
        assert_eq!(full_window_means(&[1.0, 0.0, 1.0, 1.0], 2), vec![0.5, 0.5, 1.0]);
        assert!(full_window_means(&[1.0], 2).is_empty());
    }
}
