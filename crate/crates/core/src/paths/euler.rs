//! Band discretization of the catalyst.
//!
//! The simulated process is piecewise constant: the position is held over a step and moves by
//! an independent `N(0, step I)` increment at the end of it. While held at `x`, the PCAF grows
//! at the frozen rate
//!
//! * `sum_i w_i / (2 eps) 1{|x - z_i| <= eps}` for atoms `z_i` of weight `w_i`,
//! * `beta / (2 eps) 1{| |x| - R | <= eps}` for a circle of radius `R` and strength `beta`,
//!
//! and the clock rings at the exact crossing time inside the step. Step lengths are `dt` inside
//! or near the band and `(D/6)^2` at distance `D` from it, truncated at the requested horizon.
//! A particle that branches mid-step hands the unfinished step to its offspring, so that a
//! branching system built from this process satisfies the moment identities exactly.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Advance, PathState, PendingStep, StepScheme};
use crate::geometry::Point;
use crate::spectral::{BranchingRate, Geometry};

/// Frozen PCAF rate at `x` and the distance from `x` to the nearest band (0 inside).
pub fn band_rate(rate: &BranchingRate, eps: f64, x: &Point) -> (f64, f64) {
    match rate.geometry() {
        Geometry::Atoms(atoms) => {
            let mut density = 0.0;
            let mut gap = f64::INFINITY;
            for a in atoms {
                let d = (x.x() - a.position).abs();
                if d <= eps {
                    density += a.weight / (2.0 * eps);
                }
                gap = gap.min(d - eps);
            }
            (density, gap.max(0.0))
        }
        Geometry::Circle { radius, strength } => {
            let d = (x.norm() - radius).abs();
            if d <= eps {
                (strength / (2.0 * eps), 0.0)
            } else {
                (0.0, d - eps)
            }
        }
    }
}

fn next_step(rate: &BranchingRate, scheme: &StepScheme, state: &PathState, horizon: f64) -> PendingStep {
    let (density, gap) = band_rate(rate, scheme.band_epsilon, &state.position);
    let length = if density > 0.0 { scheme.dt } else { scheme.dt.max((gap / 6.0).powi(2)) };
    let end = if length.is_finite() { (state.elapsed + length).min(horizon) } else { horizon };
    PendingStep { end, variance: end - state.elapsed, rate: density }
}

/// A stretch of constant PCAF rate traversed by [`advance_euler_traced`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
    /// PCAF accumulated by the state at `start`.
    pub pcaf_at_start: f64,
    pub position: Point,
}

pub fn advance_euler<R: Rng + ?Sized>(
    state: &mut PathState,
    horizon: f64,
    rate: &BranchingRate,
    scheme: &StepScheme,
    rng: &mut R,
) -> Advance {
    advance_euler_traced(state, horizon, rate, scheme, rng, |_| {})
}

/// [`advance_euler`], reporting every stretch with positive PCAF rate to `on_segment`.
pub fn advance_euler_traced<R: Rng + ?Sized, F: FnMut(Segment)>(
    state: &mut PathState,
    horizon: f64,
    rate: &BranchingRate,
    scheme: &StepScheme,
    rng: &mut R,
    mut on_segment: F,
) -> Advance {
    let planar = rate.dimension() == 2;
    while state.elapsed < horizon {
        let step = match state.pending {
            Some(s) => s,
            None => next_step(rate, scheme, state, horizon),
        };
        state.pending = Some(step);
        let seg_end = step.end.min(horizon);
        let seg = seg_end - state.elapsed;
        if step.rate > 0.0 {
            let available = step.rate * seg;
            if state.clock_residual <= available {
                let time = state.elapsed + state.clock_residual / step.rate;
                on_segment(Segment {
                    start: state.elapsed,
                    end: time,
                    rate: step.rate,
                    pcaf_at_start: state.pcaf,
                    position: state.position,
                });
                state.elapsed = time;
                state.charge(state.clock_residual);
                state.clock_residual = 0.0;
                return Advance::Branched { time: state.elapsed, position: state.position };
            }
            on_segment(Segment {
                start: state.elapsed,
                end: seg_end,
                rate: step.rate,
                pcaf_at_start: state.pcaf,
                position: state.position,
            });
            state.charge(available);
        }
        state.elapsed = seg_end;
        if seg_end >= step.end {
            let sd = step.variance.sqrt();
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = if planar { rng.sample(StandardNormal) } else { 0.0 };
            state.position = Point::new(state.position.x() + sd * dx, state.position.y() + sd * dy);
            state.pending = None;
        }
    }
    Advance::Survived
}
