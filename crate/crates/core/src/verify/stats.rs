//! Small statistics toolkit for the verification reports.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residuals (0 for two points).
    pub slope_stderr: f64,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit { slope, intercept, slope_stderr }
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn iqr(xs: &[f64]) -> f64 {
    quantile(xs, 0.75) - quantile(xs, 0.25)
}

/// `1/2 sum |p_i - q_i|` over the common cells.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Chi-square test that two count histograms come from the same law. Cells are merged from the
/// right until every expected count is at least 5. Returns `(statistic, degrees of freedom, p)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for i in 0..len {
        acc.0 += get(a, i);
        acc.1 += get(b, i);
        let col = acc.0 + acc.1;
        if col * na.min(nb) / total >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    if cells.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let mut stat = 0.0;
    for (ca, cb) in &cells {
        let col = ca + cb;
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
    }
    let df = cells.len() - 1;
    let p = 1.0 - ChiSquared::new(df as f64).expect("positive degrees of freedom").cdf(stat);
    (stat, df, p)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Number of consecutive steps along which `xs` does not increase.
pub fn nonincreasing_steps(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] <= w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 10 of 100 at 95%: (0.05523, 0.17437)
        let (lo, hi) = wilson(10, 100, 1.959963984540054);
        assert!((lo - 0.055229).abs() < 1e-5 && (hi - 0.174366).abs() < 1e-5, "{lo} {hi}");
        assert_eq!(wilson(0, 0, 2.0), (0.0, 1.0));
        let (lo, _) = wilson(0, 50, 2.0);
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn regression_recovers_a_line() {
        let x = [6.0, 10.0, 14.0, 18.0];
        let y: Vec<f64> = x.iter().map(|t| 0.5 * t - 1.0).collect();
        let fit = linear_regression(&x, &y);
        assert!((fit.slope - 0.5).abs() < 1e-14 && (fit.intercept + 1.0).abs() < 1e-13);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn quantiles() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&xs), 3.0);
        assert_eq!(iqr(&xs), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn tv_and_chi_square() {
        assert_eq!(total_variation(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        let a = [500, 300, 150, 50];
        let (_, df, p) = chi_square_homogeneity(&a, &a);
        assert_eq!(df, 3);
        assert!((p - 1.0).abs() < 1e-12);
        let b = [300, 300, 250, 150];
        assert!(chi_square_homogeneity(&a, &b).2 < 1e-10);
        // scipy.stats.chi2_contingency([[20, 30], [30, 20]], correction=False): stat 4.0, p 0.0455
        let (stat, df, p) = chi_square_homogeneity(&[20, 30], &[30, 20]);
        assert!((stat - 4.0).abs() < 1e-12 && df == 1 && (p - 0.04550026389635842).abs() < 1e-9);
    }

    #[test]
    fn ks_reference() {
        let sample: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&sample, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
        assert!(ks_pvalue(d, 100) > 0.99);
        // Kolmogorov distribution: P(K > 1.3581) = 0.05
        assert!((ks_pvalue(1.3581 / (10.0 + 0.12 + 0.011), 100) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn steps() {
        assert_eq!(nonincreasing_steps(&[3.0, 2.0, 2.5, 1.0]), 2);
    }
}
