//! Single-particle motion together with the additive functional `A_t^mu` that drives
//! branching.
//!
//! Two schemes are available. `Exact` is event driven and exact in law for the zero measure
//! and a single point catalyst on the line. `EulerBand` replaces the catalyst by a band of
//! half-width `epsilon` and works for any supported measure; see [`euler`] for the precise
//! discretized process.

pub mod euler;
pub mod exact;
pub mod samplers;
pub mod sweep;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::spectral::{BranchingRate, Geometry};

pub use euler::{advance_euler, advance_euler_traced, band_rate, Segment};
pub use exact::{advance_exact, sample_pcaf_endpoint_exact};
pub use samplers::{
    sample_avoiding_endpoint, sample_conditional_endpoint_localtime, sample_hitting_time,
    sample_inverse_local_time, sample_joint_endpoint_localtime, survival_at_atom, REJECTION_CAP,
};
pub use sweep::{survival_sweep, SweepPoint};

/// Default Euler step.
pub const DEFAULT_DT: f64 = 1e-4;
/// Default band half-width.
pub const DEFAULT_BAND: f64 = 3e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Exact,
    EulerBand,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepScheme {
    pub kind: SchemeKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_band")]
    pub band_epsilon: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_band() -> f64 {
    DEFAULT_BAND
}

impl StepScheme {
    pub fn exact() -> Self {
        StepScheme { kind: SchemeKind::Exact, dt: DEFAULT_DT, band_epsilon: DEFAULT_BAND }
    }

    pub fn euler(dt: f64, band_epsilon: f64) -> Self {
        StepScheme { kind: SchemeKind::EulerBand, dt, band_epsilon }
    }

    /// Exact where available, Euler with default parameters otherwise.
    pub fn default_for(rate: &BranchingRate) -> Self {
        if exact_supported(rate) {
            Self::exact()
        } else {
            Self::euler(DEFAULT_DT, DEFAULT_BAND)
        }
    }

    pub fn validate(&self, rate: &BranchingRate) -> Result<()> {
        match self.kind {
            SchemeKind::Exact if !exact_supported(rate) => Err(Error::InvalidScheme(
                "the exact scheme needs d=1 and at most one atom; use euler_band".into(),
            )),
            SchemeKind::Exact => Ok(()),
            SchemeKind::EulerBand => {
                if !(self.dt > 0.0 && self.band_epsilon > 0.0) {
                    return Err(Error::InvalidScheme("dt and band_epsilon must be positive".into()));
                }
                if rate.min_atom_separation() <= 2.0 * self.band_epsilon {
                    return Err(Error::InvalidScheme("atom bands of half-width epsilon overlap".into()));
                }
                if let Geometry::Circle { radius, .. } = rate.geometry() {
                    if *radius <= self.band_epsilon {
                        return Err(Error::InvalidScheme("band wider than the circle radius".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

fn exact_supported(rate: &BranchingRate) -> bool {
    rate.dimension() == 1 && rate.atoms().len() <= 1
}

/// A discretization step in progress: the position is held until `end`, where it moves by
/// a centred Gaussian of the given per-coordinate variance. The PCAF grows at `rate` meanwhile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendingStep {
    pub end: f64,
    pub variance: f64,
    pub rate: f64,
}

/// Position, remaining exponential clock and accumulated PCAF of one particle.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub position: Point,
    /// Remaining branching budget, in PCAF units. `INFINITY` disables branching.
    pub clock_residual: f64,
    pub elapsed: f64,
    /// `A^mu` accumulated since this state was created.
    pub pcaf: f64,
    pub pending: Option<PendingStep>,
}

impl PathState {
    pub fn new(position: Point, elapsed: f64, clock_residual: f64) -> Self {
        PathState { position, clock_residual, elapsed, pcaf: 0.0, pending: None }
    }

    /// A state whose clock never rings, for Feynman-Kac sampling.
    pub fn unkilled(position: Point, elapsed: f64) -> Self {
        Self::new(position, elapsed, f64::INFINITY)
    }

    /// Adds PCAF and consumes the same amount of clock.
    #[inline]
    fn charge(&mut self, amount: f64) {
        self.pcaf += amount;
        self.clock_residual -= amount;
    }
}

/// Result of advancing a particle towards a horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Advance {
    /// The clock ran out at `time <= horizon` at `position`, which lies on the support
    /// (exactly for the exact scheme, within the band for the Euler scheme).
    Branched { time: f64, position: Point },
    /// The particle reached the horizon; the state holds its position there.
    Survived,
}

/// Advances with whichever scheme is configured.
pub fn advance<R: Rng + ?Sized>(
    state: &mut PathState,
    horizon: f64,
    rate: &BranchingRate,
    scheme: &StepScheme,
    rng: &mut R,
) -> Result<Advance> {
    match scheme.kind {
        SchemeKind::Exact => {
            let atom = rate.atoms().first().map(|a| (a.position, a.weight));
            advance_exact(state, horizon, atom, rng)
        }
        SchemeKind::EulerBand => Ok(advance_euler(state, horizon, rate, scheme, rng)),
    }
}
