use rand::Rng;
use rand_distr::StandardNormal;

use super::samplers::{
    sample_avoiding_endpoint, sample_conditional_endpoint_localtime, sample_hitting_time,
    sample_inverse_local_time, sample_joint_endpoint_localtime,
};
use super::{Advance, PathState};
use crate::error::Result;
use crate::geometry::Point;

/// Event-driven advance for a single point catalyst `(position, weight)` on the line, or for
/// free motion when `atom` is `None`.
///
/// Off the atom the particle either reaches the horizon first (endpoint drawn conditioned on
/// avoiding the atom) or hits it. On the atom, the clock rings after the inverse local time of
/// `residual / weight`; if that exceeds the remaining time, the endpoint and local time are
/// drawn jointly conditioned on the local time staying below `residual / weight`.
pub fn advance_exact<R: Rng + ?Sized>(
    state: &mut PathState,
    horizon: f64,
    atom: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<Advance> {
    let Some((z, w)) = atom else {
        let remaining = horizon - state.elapsed;
        if remaining > 0.0 {
            let dx: f64 = rng.sample(StandardNormal);
            state.position = Point::on_line(state.position.x() + remaining.sqrt() * dx);
            state.elapsed = horizon;
        }
        return Ok(Advance::Survived);
    };
    loop {
        let remaining = horizon - state.elapsed;
        if remaining <= 0.0 {
            return Ok(Advance::Survived);
        }
        let offset = state.position.x() - z;
        if offset != 0.0 {
            let hit = sample_hitting_time(offset.abs(), rng);
            if hit >= remaining {
                let y = sample_avoiding_endpoint(offset, remaining, rng)?;
                state.position = Point::on_line(z + y);
                state.elapsed = horizon;
                return Ok(Advance::Survived);
            }
            state.elapsed += hit;
            state.position = Point::on_line(z);
            continue;
        }
        if state.clock_residual.is_infinite() {
            let (ell, y) = sample_joint_endpoint_localtime(remaining, rng);
            state.charge(w * ell);
            state.position = Point::on_line(z + y);
            state.elapsed = horizon;
            return Ok(Advance::Survived);
        }
        let ell_needed = state.clock_residual / w;
        let ring = sample_inverse_local_time(ell_needed, rng);
        if ring <= remaining {
            state.elapsed += ring;
            state.charge(state.clock_residual);
            state.clock_residual = 0.0;
            return Ok(Advance::Branched { time: state.elapsed, position: Point::on_line(z) });
        }
        let (ell, y) = sample_conditional_endpoint_localtime(remaining, ell_needed, rng);
        state.charge(w * ell);
        state.position = Point::on_line(z + y);
        state.elapsed = horizon;
        return Ok(Advance::Survived);
    }
}

/// Draws `(A_t, B_t)` for a path from `x0` over `[0, t]` with a single atom of weight `w` at
/// `z`, without killing.
pub fn sample_pcaf_endpoint_exact<R: Rng + ?Sized>(x0: f64, t: f64, z: f64, w: f64, rng: &mut R) -> Result<(f64, f64)> {
    let mut state = PathState::unkilled(Point::on_line(x0), 0.0);
    advance_exact(&mut state, t, Some((z, w)), rng)?;
    Ok((state.pcaf, state.position.x()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::samplers::survival_at_atom;
    use crate::rng::task_stream;

    #[test]
    fn zero_horizon_survives_in_place() {
        let mut rng = task_stream(1, "exact", 0);
        let mut s = PathState::new(Point::on_line(0.7), 2.0, 1.0);
        assert_eq!(advance_exact(&mut s, 2.0, Some((0.0, 1.0)), &mut rng).unwrap(), Advance::Survived);
        assert_eq!(s.position.x(), 0.7);
    }

    #[test]
    fn survival_matches_closed_form() {
        let mut rng = task_stream(2, "exact", 0);
        let n = 200_000;
        let mut alive = 0usize;
        for _ in 0..n {
            let e: f64 = rng.sample(rand_distr::Exp1);
            let mut s = PathState::new(Point::on_line(0.0), 0.0, e);
            if advance_exact(&mut s, 1.0, Some((0.0, 1.0)), &mut rng).unwrap() == Advance::Survived {
                alive += 1;
            }
        }
        let p = survival_at_atom(1.0, 1.0);
        let est = alive as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((est - p).abs() < 4.0 * sd, "{est} vs {p}");
    }

    #[test]
    fn branch_happens_on_the_atom() {
        let mut rng = task_stream(3, "exact", 0);
        for _ in 0..1000 {
            let mut s = PathState::new(Point::on_line(0.5), 0.0, 0.2);
            if let Advance::Branched { time, position } = advance_exact(&mut s, 5.0, Some((-0.25, 2.0)), &mut rng).unwrap() {
                assert_eq!(position.x(), -0.25);
                assert!(time <= 5.0);
                assert!((s.pcaf - 0.2).abs() < 1e-15);
            }
        }
    }
}
