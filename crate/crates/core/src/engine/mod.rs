//! The branching particle system.
//!
//! Each replica is simulated depth first with an explicit stack. A particle is carried
//! through the observation times in order until its clock rings; at that moment it is
//! replaced by `n` offspring drawn from the offspring law, all starting at the branch point
//! with fresh exponential clocks. Observations are streamed to a [`Visitor`], so ensembles can
//! be reduced on the fly without storing populations.

mod ensemble;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Region};
use crate::paths::{advance, Advance, PathState, PendingStep, StepScheme};
use crate::rng::{child_lineage, stream, StreamRng, ROOT_LINEAGE};
use crate::spectral::{BranchingRate, FrontierWindow, SpectralSolution};

pub use ensemble::{run_ensemble, Ensemble, EnsembleSpec, NamedWindow, ReplicaRecord};

/// Default population cap.
pub const DEFAULT_CAP: usize = 1_000_000;

/// A particle waiting to be advanced.
#[derive(Clone, Debug)]
pub struct Particle {
    /// Lineage hash: the root hash mixed with each child index along the ancestry.
    pub id: u64,
    pub parent: Option<u64>,
    pub born_at: f64,
    pub birth_position: Point,
    pub state: PathState,
    rng: StreamRng,
    next_checkpoint: usize,
}

impl Particle {
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        replica: u64,
        id: u64,
        parent: Option<u64>,
        born_at: f64,
        position: Point,
        pending: Option<PendingStep>,
        next_checkpoint: usize,
    ) -> Self {
        let mut rng = stream(seed, replica, id);
        let budget: f64 = rng.sample(Exp1);
        let mut state = PathState::new(position, born_at, budget);
        state.pending = pending;
        Particle { id, parent, born_at, birth_position: position, state, rng, next_checkpoint }
    }
}

/// A branching event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchEvent {
    pub id: u64,
    pub born_at: f64,
    pub time: f64,
    pub position: Point,
    pub offspring: usize,
}

/// Receives observations as the simulation proceeds.
pub trait Visitor {
    /// `particle` is alive at observation time `checkpoint` at `particle.state.position`.
    fn observe(&mut self, checkpoint: usize, particle: &Particle);

    fn branch(&mut self, _event: &BranchEvent) {}
}

/// Settings of a single-replica run.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub rate: BranchingRate,
    pub scheme: StepScheme,
    pub x0: Point,
    /// Observation times, strictly increasing and nonnegative.
    pub checkpoints: Vec<f64>,
    pub cap: usize,
}

impl Simulation {
    pub fn new(rate: BranchingRate, scheme: StepScheme, x0: Point, checkpoints: Vec<f64>) -> Result<Self> {
        let sim = Simulation { rate, scheme, x0, checkpoints, cap: DEFAULT_CAP };
        sim.validate()?;
        Ok(sim)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate(&self.rate)?;
        if self.checkpoints.is_empty() {
            return Err(Error::Config("at least one observation time is required".into()));
        }
        if self.checkpoints[0] < 0.0 || self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("observation times must be nonnegative and increasing".into()));
        }
        if self.cap == 0 {
            return Err(Error::Config("population cap must be at least 1".into()));
        }
        if self.rate.dimension() == 1 && self.x0.y() != 0.0 {
            return Err(Error::Config("starting point must lie on the line for d=1".into()));
        }
        Ok(())
    }

    /// Runs replica `replica` of experiment `seed`, returning the population size at each
    /// observation time.
    pub fn run_with<V: Visitor>(&self, seed: u64, replica: u64, visitor: &mut V) -> Result<Vec<usize>> {
        let n_obs = self.checkpoints.len();
        let mut counts = vec![0usize; n_obs];
        let mut stack = vec![Particle::new(seed, replica, ROOT_LINEAGE, None, 0.0, self.x0, None, 0)];
        let offspring = self.rate.offspring();
        while let Some(mut p) = stack.pop() {
            while p.next_checkpoint < n_obs {
                let horizon = self.checkpoints[p.next_checkpoint];
                match advance(&mut p.state, horizon, &self.rate, &self.scheme, &mut p.rng)? {
                    Advance::Survived => {
                        let j = p.next_checkpoint;
                        counts[j] += 1;
                        if counts[j] > self.cap {
                            return Err(Error::ExplosionCap { cap: self.cap, t: horizon });
                        }
                        visitor.observe(j, &p);
                        p.next_checkpoint += 1;
                    }
                    Advance::Branched { time, position } => {
                        let n = offspring.sample_from_uniform(p.rng.random::<f64>());
                        visitor.branch(&BranchEvent { id: p.id, born_at: p.born_at, time, position, offspring: n });
                        for i in 0..n {
                            stack.push(Particle::new(
                                seed,
                                replica,
                                child_lineage(p.id, i as u64),
                                Some(p.id),
                                time,
                                position,
                                p.state.pending,
                                p.next_checkpoint,
                            ));
                        }
                        if stack.len() > self.cap {
                            return Err(Error::ExplosionCap { cap: self.cap, t: time });
                        }
                        break;
                    }
                }
            }
        }
        Ok(counts)
    }

    /// Full populations at every observation time.
    pub fn run_snapshots(&self, seed: u64, replica: u64) -> Result<Vec<PopulationSnapshot>> {
        let mut collector = SnapshotCollector {
            snapshots: self
                .checkpoints
                .iter()
                .map(|&t| PopulationSnapshot { t_obs: t, particles: Vec::new() })
                .collect(),
        };
        self.run_with(seed, replica, &mut collector)?;
        Ok(collector.snapshots)
    }
}

struct SnapshotCollector {
    snapshots: Vec<PopulationSnapshot>,
}

impl Visitor for SnapshotCollector {
    fn observe(&mut self, checkpoint: usize, particle: &Particle) {
        self.snapshots[checkpoint].particles.push((particle.id, particle.state.position));
    }
}

/// Simulates one replica up to `t_obs` and returns the population there.
pub fn run(
    rate: &BranchingRate,
    scheme: &StepScheme,
    x0: Point,
    t_obs: f64,
    cap: usize,
    seed: u64,
    replica: u64,
) -> Result<PopulationSnapshot> {
    let sim = Simulation { rate: rate.clone(), scheme: *scheme, x0, checkpoints: vec![t_obs], cap };
    sim.validate()?;
    Ok(sim.run_snapshots(seed, replica)?.pop().expect("one checkpoint"))
}

/// Particle configuration at one observation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub t_obs: f64,
    /// `(lineage id, position)` of every particle alive at `t_obs`.
    pub particles: Vec<(u64, Point)>,
}

impl PopulationSnapshot {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn max_displacement(&self) -> f64 {
        max_displacement(self)
    }

    pub fn count_in_region(&self, region: &Region) -> usize {
        self.particles.iter().filter(|(_, x)| region.contains(x)).count()
    }

    pub fn count_in_window(&self, window: &FrontierWindow, sol: &SpectralSolution) -> usize {
        count_in_window(self, window, sol)
    }

    pub fn martingale_value(&self, sol: &SpectralSolution) -> f64 {
        martingale_value(self, sol)
    }
}

/// `M_t = e^{lambda t} sum_u h(X_u(t))`.
pub fn martingale_value(snapshot: &PopulationSnapshot, sol: &SpectralSolution) -> f64 {
    let total: f64 = snapshot.particles.iter().map(|(_, x)| sol.eval(x)).sum();
    (sol.lambda() * snapshot.t_obs).exp() * total
}

/// Number of particles in the window placed at `R(t_obs)`.
pub fn count_in_window(snapshot: &PopulationSnapshot, window: &FrontierWindow, sol: &SpectralSolution) -> usize {
    if window.theta.is_empty() {
        return 0;
    }
    snapshot.count_in_region(&window.region_at(sol, snapshot.t_obs))
}

/// `L_t = max_u |X_u(t)|`.
pub fn max_displacement(snapshot: &PopulationSnapshot) -> f64 {
    snapshot.particles.iter().map(|(_, x)| x.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::solve;

    #[test]
    fn time_zero_is_the_initial_particle() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let sol = solve(&rate).unwrap();
        let snap = run(&rate, &StepScheme::exact(), Point::on_line(0.4), 0.0, 10, 1, 0).unwrap();
        assert_eq!(snap.len(), 1);
        assert_eq!(snap.max_displacement(), 0.4);
        assert!((snap.martingale_value(&sol) - (-0.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn cap_is_enforced() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let mut hit = false;
        for replica in 0..20 {
            if let Err(Error::ExplosionCap { cap, .. }) =
                run(&rate, &StepScheme::exact(), Point::on_line(0.0), 12.0, 5, 3, replica)
            {
                assert_eq!(cap, 5);
                hit = true;
            }
        }
        assert!(hit);
    }

    #[test]
    fn same_key_same_population() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let a = run(&rate, &StepScheme::exact(), Point::on_line(0.0), 6.0, DEFAULT_CAP, 9, 4).unwrap();
        let b = run(&rate, &StepScheme::exact(), Point::on_line(0.0), 6.0, DEFAULT_CAP, 9, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn population_never_shrinks() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let sim = Simulation::new(rate.clone(), StepScheme::exact(), Point::on_line(0.0), vec![2.0, 4.0]).unwrap();
        let snaps = sim.run_snapshots(5, 1).unwrap();
        assert!(snaps[1].len() >= snaps[0].len());
    }
}
