//! First and second moments of window counts.
//!
//! Two independent routes are provided. The Feynman-Kac estimators ([`many_to_one`],
//! [`many_to_two`]) sample single weighted paths and never simulate a branching system, so
//! they serve as oracles for the engine. The predictors ([`predict_first_moment`] and friends)
//! evaluate the large-time asymptotics in closed form.

mod first;
mod predict;
mod second;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DirectionSet, Region};
use crate::paths::StepScheme;

pub use first::{many_to_one, many_to_one_fn, many_to_one_ladder};
pub use predict::{
    is_pre_asymptotic, predict_first_moment, predict_second_moment, predict_survival_probability,
};
pub use second::{many_to_two, SecondMomentOptions};

/// The weights of a single sample exceeded this share of the total.
pub const FLAG_DEGENERATE_WEIGHTS: &str = "degenerate_weights";
/// Predictor evaluated before the asymptotic regime (`t < 5 / sqrt(-lambda)`).
pub const FLAG_PRE_ASYMPTOTIC: &str = "pre_asymptotic";
/// Probability predictor clamped to 1.
pub const FLAG_CLAMPED: &str = "clamped";
/// The value is an upper bound, not an asymptotic equivalent.
pub const FLAG_BOUND: &str = "bound";
/// Adjacent memo grid values differ by more than a factor 2 where the integrand matters.
pub const FLAG_MEMO_RESOLUTION: &str = "memo_resolution";

/// Share of the total weight above which [`FLAG_DEGENERATE_WEIGHTS`] is raised.
pub const DEGENERACY_SHARE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Branching,
    FeynmanKac,
    Quadrature,
    Predictor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub method: Method,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl MomentEstimate {
    /// A value without sampling error.
    pub fn exact(value: f64, method: Method) -> Self {
        MomentEstimate { value, stderr: 0.0, n_samples: 0, method, flags: Vec::new() }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub(crate) fn flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.flags.push(flag.to_string());
        }
    }

    /// Mean and standard error of a plain sample.
    pub fn from_sample(xs: &[f64], method: Method) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        MomentEstimate { value: mean, stderr: (var / n as f64).sqrt(), n_samples: n, method, flags: Vec::new() }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_score(&self, other: &MomentEstimate) -> f64 {
        let se = self.stderr.hypot(other.stderr);
        let d = (self.value - other.value).abs();
        if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// How [`many_to_one`] samples paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Importance sampling where available, plain weighting otherwise.
    #[default]
    Auto,
    Plain,
    /// Importance sampling on the exact law of `(l_t, B_t)`; single atom on the line only.
    Importance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkOptions {
    pub sampler: Sampler,
    pub scheme: StepScheme,
    pub seed: u64,
}

impl FkOptions {
    pub fn new(scheme: StepScheme, seed: u64) -> Self {
        FkOptions { sampler: Sampler::Auto, scheme, seed }
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }
}

/// Sum of nonnegative weights given by their logarithms, kept relative to the running
/// maximum so that nothing overflows.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LogSum {
    max: f64,
    s1: f64,
    s2: f64,
    n: usize,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum { max: f64::NEG_INFINITY, s1: 0.0, s2: 0.0, n: 0 }
    }
}

impl LogSum {
    #[inline]
    pub(crate) fn push(&mut self, log_w: f64) {
        self.n += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.max {
            let r = (self.max - log_w).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.max = log_w;
        }
        let e = (log_w - self.max).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    pub(crate) fn merge(mut self, other: LogSum) -> LogSum {
        if other.max > self.max {
            return other.merge(self);
        }
        self.n += other.n;
        if other.max > f64::NEG_INFINITY {
            let r = (other.max - self.max).exp();
            self.s1 += other.s1 * r;
            self.s2 += other.s2 * r * r;
        }
        self
    }

    pub(crate) fn finish(&self, method: Method) -> MomentEstimate {
        let n = self.n;
        if n == 0 || self.s1 == 0.0 {
            return MomentEstimate { value: 0.0, stderr: 0.0, n_samples: n, method, flags: Vec::new() };
        }
        let nf = n as f64;
        let scale = self.max.exp();
        let mean = self.s1 / nf;
        let var = if n > 1 { ((self.s2 - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        let mut est =
            MomentEstimate { value: scale * mean, stderr: scale * (var / nf).sqrt(), n_samples: n, method, flags: Vec::new() };
        if 1.0 / self.s1 > DEGENERACY_SHARE {
            est.flag(FLAG_DEGENERATE_WEIGHTS);
        }
        est
    }
}

/// The region `f g` for indicators `f`, `g`.
pub(crate) fn product_region(f: &Region, g: &Region) -> Result<Region> {
    match (f, g) {
        (Region::Everywhere, other) | (other, Region::Everywhere) => Ok(other.clone()),
        (a, b) if a == b => Ok(a.clone()),
        (
            Region::Shell { inner: i1, outer: o1, dirs: d1 },
            Region::Shell { inner: i2, outer: o2, dirs: d2 },
        ) => {
            let dirs = match (d1, d2) {
                (DirectionSet::Signs { plus: p1, minus: m1 }, DirectionSet::Signs { plus: p2, minus: m2 }) => {
                    DirectionSet::Signs { plus: *p1 && *p2, minus: *m1 && *m2 }
                }
                (a, b) if a == b => a.clone(),
                _ => return Err(Error::Config("product of windows with different arcs is not supported".into())),
            };
            Ok(Region::Shell { inner: i1.max(*i2), outer: o1.min(*o2), dirs })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_matches_direct_sum() {
        let ws = [0.5f64, 2.0, 0.0, 7.0, 1.25];
        let mut acc = LogSum::default();
        for w in ws {
            acc.push(w.ln());
        }
        let est = acc.finish(Method::FeynmanKac);
        let direct = MomentEstimate::from_sample(&ws, Method::FeynmanKac);
        assert!((est.value - direct.value).abs() < 1e-14);
        assert!((est.stderr - direct.stderr).abs() < 1e-14);
        assert!(est.has_flag(FLAG_DEGENERATE_WEIGHTS));
    }

    #[test]
    fn log_sum_survives_huge_weights() {
        let mut a = LogSum::default();
        let mut b = LogSum::default();
        for _ in 0..1000 {
            a.push(700.0);
            b.push(699.0);
        }
        let est = a.merge(b).finish(Method::FeynmanKac);
        let expected = (1.0 + (-1.0f64).exp()) / 2.0;
        assert!((est.value / 700f64.exp() - expected).abs() < 1e-12);
        let mut c = LogSum::default();
        c.push(1.0);
        c.push(f64::NEG_INFINITY);
        let est = c.finish(Method::FeynmanKac);
        assert!((est.value - std::f64::consts::E / 2.0).abs() < 1e-15);
        assert_eq!(est.n_samples, 2);
    }

    #[test]
    fn products_of_windows() {
        let w = Region::Shell { inner: 1.0, outer: 3.0, dirs: DirectionSet::both_signs() };
        let v = Region::Shell { inner: 2.0, outer: 4.0, dirs: DirectionSet::plus() };
        assert_eq!(product_region(&Region::Everywhere, &w).unwrap(), w);
        assert_eq!(
            product_region(&w, &v).unwrap(),
            Region::Shell { inner: 2.0, outer: 3.0, dirs: DirectionSet::plus() }
        );
    }
}
