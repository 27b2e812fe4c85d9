//! Exact one-dimensional Brownian samplers around a single point.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{erf, erf_inv};

/// Proposal budget for rejection samplers.
pub const REJECTION_CAP: usize = 1_000_000;

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// First passage time to a point at `distance > 0`: `distance^2 / Z^2`.
pub fn sample_hitting_time<R: Rng + ?Sized>(distance: f64, rng: &mut R) -> f64 {
    debug_assert!(distance > 0.0);
    let z = normal(rng);
    (distance / z).powi(2)
}

/// Time for Brownian motion started at the point to accumulate local time `ell`.
///
/// Local time is normalized as the occupation density, `l_t = lim (1/2e) |{s <= t: |B_s| < e}|`,
/// so that `l_t` has the law of `|B_t|`. The inverse local time then has the same law as the
/// passage time to level `ell`.
pub fn sample_inverse_local_time<R: Rng + ?Sized>(ell: f64, rng: &mut R) -> f64 {
    debug_assert!(ell > 0.0);
    let z = normal(rng);
    (ell / z).powi(2)
}

/// Joint draw of `(l_u, B_u)` for Brownian motion started at the point.
///
/// `m = l_u + |B_u|` has the Maxwell law scaled by `sqrt(u)`; given `m`, `l_u` is uniform on
/// `(0, m)` and the sign of `B_u` is fair.
pub fn sample_joint_endpoint_localtime<R: Rng + ?Sized>(u: f64, rng: &mut R) -> (f64, f64) {
    let (a, b, c) = (normal(rng), normal(rng), normal(rng));
    let m = u.sqrt() * (a * a + b * b + c * c).sqrt();
    let ell = rng.random::<f64>() * m;
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    (ell, sign * (m - ell))
}

/// Joint draw of `(l_u, B_u)` conditioned on `l_u < ell_max`.
///
/// `l_u` is half-normal, so its truncation is inverted through `erf`; given `l_u = l` the
/// density of `m = l + |B_u|` is proportional to `m exp(-m^2 / 2u)` on `m > l`, i.e.
/// `m^2 = l^2 + 2u E` with `E` standard exponential.
pub fn sample_conditional_endpoint_localtime<R: Rng + ?Sized>(u: f64, ell_max: f64, rng: &mut R) -> (f64, f64) {
    let s = (2.0 * u).sqrt();
    let cap = erf(ell_max / s);
    let ell = (s * erf_inv(rng.random::<f64>() * cap)).min(ell_max);
    let e: f64 = rng.sample(Exp1);
    let m = (ell * ell + 2.0 * u * e).sqrt();
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    (ell, sign * (m - ell))
}

/// Endpoint at time `u` of Brownian motion from `x0 != 0` conditioned not to hit 0.
///
/// Rejection from `N(x0, u)`: keep same-sign proposals with probability
/// `1 - exp(-2 x0 y / u)`, which is the reflection-principle density ratio.
pub fn sample_avoiding_endpoint<R: Rng + ?Sized>(x0: f64, u: f64, rng: &mut R) -> Result<f64> {
    debug_assert!(x0 != 0.0);
    let sd = u.sqrt();
    for _ in 0..REJECTION_CAP {
        let y = x0 + sd * normal(rng);
        if y * x0 <= 0.0 {
            continue;
        }
        let accept = -(-2.0 * x0 * y / u).exp_m1();
        if rng.random::<f64>() < accept {
            return Ok(y);
        }
    }
    Err(Error::RejectionCap { cap: REJECTION_CAP, context: "avoiding endpoint" })
}

/// `E[exp(-beta l_t)]` for Brownian motion started at the point:
/// `2 exp(beta^2 t / 2) (1 - Phi(beta sqrt t))`.
pub fn survival_at_atom(beta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let a = beta * t.sqrt();
    // 2 e^{a^2/2} Phi(-a) = erfcx(a / sqrt 2); use the scaled form to avoid overflow
    crate::special::erfcx(a / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_stream;
    use crate::special::{normal_cdf, normal_quantile};

    #[test]
    fn hitting_time_median() {
        let mut rng = task_stream(11, "hit", 0);
        let mut v: Vec<f64> = (0..200_000).map(|_| sample_hitting_time(1.0, &mut rng)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = v[v.len() / 2];
        let target = 1.0 / normal_quantile(0.75).powi(2);
        assert!((median / target - 1.0).abs() < 0.01, "{median} vs {target}");
        let frac = v.iter().filter(|&&t| t <= 1.0).count() as f64 / v.len() as f64;
        let p = 2.0 * (1.0 - normal_cdf(1.0));
        let sd = (p * (1.0 - p) / v.len() as f64).sqrt();
        assert!((frac - p).abs() < 4.0 * sd);
    }

    #[test]
    fn conditional_sampler_respects_cap() {
        let mut rng = task_stream(12, "cond", 0);
        for _ in 0..10_000 {
            let (l, _) = sample_conditional_endpoint_localtime(1.0, 0.3, &mut rng);
            assert!((0.0..=0.3).contains(&l));
        }
    }

    #[test]
    fn avoiding_endpoint_keeps_sign() {
        let mut rng = task_stream(13, "avoid", 0);
        for _ in 0..10_000 {
            assert!(sample_avoiding_endpoint(-0.5, 1.0, &mut rng).unwrap() < 0.0);
        }
    }

    #[test]
    fn survival_closed_form_values() {
        assert_eq!(survival_at_atom(1.0, 0.0), 1.0);
        assert!((survival_at_atom(0.0, 1.0) - 1.0).abs() < 1e-15);
        // 2 e^{1/2} (1 - Phi(1))
        let direct = 2.0 * 0.5f64.exp() * (1.0 - normal_cdf(1.0));
        assert!((survival_at_atom(1.0, 1.0) - direct).abs() < 1e-14);
    }
}
