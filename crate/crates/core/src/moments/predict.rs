//! Large-time predictions for window counts.

use super::{Method, MomentEstimate, FLAG_BOUND, FLAG_CLAMPED, FLAG_PRE_ASYMPTOTIC};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::spectral::{RadiusSchedule, Regime, SpectralSolution};

/// `t < 5 / sqrt(-lambda)`: the exponential corrections are not yet small.
pub fn is_pre_asymptotic(sol: &SpectralSolution, t: f64) -> bool {
    t < 5.0 / (-sol.lambda()).sqrt()
}

fn predictor(value: f64, sol: &SpectralSolution, t: f64) -> MomentEstimate {
    let mut est = MomentEstimate::exact(value, Method::Predictor);
    if is_pre_asymptotic(sol, t) {
        est.flag(FLAG_PRE_ASYMPTOTIC);
    }
    est
}

/// `log(c_* h(x0) e^{-lambda t - k R(t)} R(t)^{(d-1)/2})`.
fn log_first_moment(sol: &SpectralSolution, c_star: f64, x0: &Point, t: f64, schedule: &RadiusSchedule) -> f64 {
    let r = schedule.radius_at(sol, t);
    let d = sol.dimension() as f64;
    let power = if d > 1.0 { 0.5 * (d - 1.0) * r.max(0.0).ln() } else { 0.0 };
    c_star.ln() + sol.ln_eval(x0) - sol.lambda() * t - sol.k() * r + power
}

/// `E[N_t] ~ c_* h(x0) e^{-lambda t - sqrt(-2 lambda) R(t)} R(t)^{(d-1)/2}`.
pub fn predict_first_moment(
    sol: &SpectralSolution,
    c_star: f64,
    x0: &Point,
    t: f64,
    schedule: &RadiusSchedule,
) -> MomentEstimate {
    predictor(log_first_moment(sol, c_star, x0, t, schedule).exp(), sol, t)
}

/// `P(N_t > 0)` in the regimes where the count vanishes: supercritical speeds, and the critical
/// speed with `gamma(t) -> +inf`. The value is clamped to 1 (flagged).
pub fn predict_survival_probability(
    sol: &SpectralSolution,
    c_star: f64,
    x0: &Point,
    t: f64,
    schedule: &RadiusSchedule,
) -> Result<MomentEstimate> {
    match schedule.regime(sol)? {
        Regime::Supercritical => {}
        Regime::Critical if schedule.gamma.diverges_up() => {}
        regime => {
            return Err(Error::RegimeMismatch(format!(
                "survival asymptotics need a supercritical speed or gamma -> +inf, got {regime:?}"
            )))
        }
    }
    let mut est = predict_first_moment(sol, c_star, x0, t, schedule);
    if est.value > 1.0 {
        est.value = 1.0;
        est.flag(FLAG_CLAMPED);
        est.flag(FLAG_PRE_ASYMPTOTIC);
    }
    Ok(est)
}

/// Second moment of the window count. In the critical and supercritical regimes it is
/// asymptotically equal to the first moment. For subcritical speeds only the upper envelope
/// `h(x0) e^{-2 lambda t - 2 k R(t) + (d-1) log(t v 1)}` is available; it is flagged as a bound.
pub fn predict_second_moment(
    sol: &SpectralSolution,
    c_star: f64,
    x0: &Point,
    t: f64,
    schedule: &RadiusSchedule,
) -> Result<MomentEstimate> {
    match schedule.regime(sol)? {
        Regime::Subcritical => {
            let r = schedule.radius_at(sol, t);
            let cd = (sol.dimension() as f64 - 1.0) * t.max(1.0).ln();
            let log = sol.ln_eval(x0) - 2.0 * sol.lambda() * t - 2.0 * sol.k() * r + cd;
            let mut est = predictor(log.exp(), sol, t);
            est.flag(FLAG_BOUND);
            Ok(est)
        }
        _ => Ok(predict_first_moment(sol, c_star, x0, t, schedule)),
    }
}
