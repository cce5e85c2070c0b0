//! Small numeric helpers shared across the crate.

use num_traits::Float;

/// Numerically stable log(sum(exp(w))).
pub fn log_sum_exp<T: Float>(w: &[T]) -> T {
    let max = w.iter().cloned().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum = w
        .iter()
        .fold(T::zero(), |acc, &wi| acc + (wi - max).exp());
    max + sum.ln()
}

/// Sample mean and standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total variation distance between two PMF vectors on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// KL(p || q) for PMF vectors; q must be strictly positive wherever p is.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` against the CDF `f`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &mut [f64], f: F) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let fx = f(x);
        d = d.max((fx - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - fx).abs());
    }
    d
}

/// Asymptotic KS critical value at significance `alpha` for sample size `n`.
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    ((-0.5 * (alpha / 2.0).ln()) / n as f64).sqrt()
}

/// Unit-scale Laplace base distribution used for the momentum refresh.
pub mod laplace {
    pub fn log_pdf(m: f64) -> f64 {
        -m.abs() - std::f64::consts::LN_2
    }

    pub fn cdf(m: f64) -> f64 {
        if m < 0.0 {
            0.5 * m.exp()
        } else {
            1.0 - 0.5 * (-m).exp()
        }
    }

    pub fn quantile(p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "laplace quantile needs p in (0,1)");
        if p < 0.5 {
            (2.0 * p).ln()
        } else {
            -(2.0 * (1.0 - p)).ln()
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
        // Inverse CDF; keep p strictly inside (0,1).
        let p = rng.gen::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        quantile(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_basics() {
        let v = [0.0f64, 0.0];
        assert!((log_sum_exp(&v) - 2.0f64.ln()).abs() < 1e-14);
        let big = [1000.0f64, 1000.0];
        assert!((log_sum_exp(&big) - (1000.0 + 2.0f64.ln())).abs() < 1e-10);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_eq!(log_sum_exp::<f64>(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn tv_and_kl() {
        let p = [0.5, 0.5];
        let q = [0.9, 0.1];
        assert!((total_variation(&p, &q) - 0.4).abs() < 1e-14);
        assert_eq!(kl_divergence(&p, &p), 0.0);
        assert!(kl_divergence(&p, &q) > 0.0);
    }

    #[test]
    fn laplace_cdf_quantile_roundtrip() {
        for p in [1e-6, 0.2, 0.5, 0.77, 1.0 - 1e-6] {
            assert!((laplace::cdf(laplace::quantile(p)) - p).abs() < 1e-12);
        }
        assert!((laplace::cdf(0.0) - 0.5).abs() < 1e-15);
        // density integrates to the cdf slope
        let h = 1e-6;
        let m = 0.7;
        let fd = (laplace::cdf(m + h) - laplace::cdf(m - h)) / (2.0 * h);
        assert!((fd - laplace::log_pdf(m).exp()).abs() < 1e-8);
    }

    #[test]
    fn ks_statistic_on_exact_uniform_grid() {
        let mut grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&mut grid, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5e-3 + 1e-12);
        assert!((ks_critical_value(0.01, 10_000) - 1.63 / 100.0).abs() < 2e-4);
    }
}
