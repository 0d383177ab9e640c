//! Sampler validation statistics: Kolmogorov-Smirnov tests against known
//! marginals and batch-means Monte Carlo standard errors.

/// Two-sided KS statistic of `samples` against a reference CDF. Sorts a
/// copy; ties are handled by comparing both one-sided gaps per point.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    assert!(!samples.is_empty(), "ks on empty sample");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic KS p-value with the Stephens small-sample correction:
/// `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Keep every `thin`-th element, starting at index `thin - 1`.
pub fn thin(samples: &[f64], thin: usize) -> Vec<f64> {
    assert!(thin > 0);
    samples.iter().skip(thin - 1).step_by(thin).copied().collect()
}

/// Batch-means standard error of the mean for correlated MCMC output:
/// split into `batches` equal runs (remainder dropped), take the standard
/// deviation of batch means over sqrt(batches).
pub fn batch_means_se(samples: &[f64], batches: usize) -> f64 {
    assert!(batches >= 2, "need at least two batches");
    let size = samples.len() / batches;
    assert!(size >= 1, "not enough samples for {batches} batches");
    let means: Vec<f64> = (0..batches)
        .map(|b| samples[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}
