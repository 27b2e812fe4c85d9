use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Particle, Simulation, Visitor};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::spectral::{check_disjoint, FrontierWindow, SpectralSolution};

/// A window tracked by an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedWindow {
    pub label: String,
    pub window: FrontierWindow,
}

/// What to simulate and which statistics to keep per replica.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub simulation: Simulation,
    pub solution: SpectralSolution,
    pub windows: Vec<NamedWindow>,
}

impl EnsembleSpec {
    pub fn new(simulation: Simulation, solution: SpectralSolution, windows: Vec<NamedWindow>) -> Result<Self> {
        simulation.validate()?;
        for w in &windows {
            w.window.validate()?;
        }
        Ok(EnsembleSpec { simulation, solution, windows })
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.simulation.checkpoints
    }

    pub fn window_index(&self, label: &str) -> Option<usize> {
        self.windows.iter().position(|w| w.label == label)
    }

    /// Fails when the windows with the given labels intersect.
    pub fn check_family(&self, labels: &[&str]) -> Result<()> {
        let family: Vec<FrontierWindow> = labels
            .iter()
            .map(|l| {
                self.window_index(l)
                    .map(|i| self.windows[i].window.clone())
                    .ok_or_else(|| Error::Config(format!("unknown window {l}")))
            })
            .collect::<Result<_>>()?;
        check_disjoint(&family)
    }
}

/// Per-replica statistics at every observation time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    /// `N_t`.
    pub population: Vec<u64>,
    /// `L_t`.
    pub max_norm: Vec<f64>,
    /// `M_t`.
    pub martingale: Vec<f64>,
    /// `counts[checkpoint][window]`.
    pub counts: Vec<Vec<u32>>,
}

struct Reducer<'a> {
    regions: &'a [Vec<Region>],
    solution: &'a SpectralSolution,
    h_sum: Vec<f64>,
    record: ReplicaRecord,
}

impl Visitor for Reducer<'_> {
    fn observe(&mut self, checkpoint: usize, particle: &Particle) {
        let x = &particle.state.position;
        self.record.population[checkpoint] += 1;
        let r = x.norm();
        if r > self.record.max_norm[checkpoint] {
            self.record.max_norm[checkpoint] = r;
        }
        self.h_sum[checkpoint] += self.solution.eval(x);
        for (c, region) in self.record.counts[checkpoint].iter_mut().zip(&self.regions[checkpoint]) {
            if region.contains(x) {
                *c += 1;
            }
        }
    }
}

/// Replicated runs reduced to [`ReplicaRecord`]s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub seed: u64,
    pub checkpoints: Vec<f64>,
    pub labels: Vec<String>,
    pub records: Vec<ReplicaRecord>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn checkpoint_index(&self, t: f64) -> Option<usize> {
        self.checkpoints.iter().position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
    }

    pub fn window_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn counts(&self, checkpoint: usize, window: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.counts[checkpoint][window] as f64).collect()
    }

    pub fn population(&self, checkpoint: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.population[checkpoint] as f64).collect()
    }

    pub fn max_norm(&self, checkpoint: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.max_norm[checkpoint]).collect()
    }

    pub fn martingale(&self, checkpoint: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.martingale[checkpoint]).collect()
    }
}

/// Runs `n_replicas` independent replicas in parallel. Replica `i` uses the streams keyed by
/// `(base_seed, i)`, so the result does not depend on the thread count.
pub fn run_ensemble(spec: &EnsembleSpec, n_replicas: usize, base_seed: u64) -> Result<Ensemble> {
    if n_replicas == 0 {
        return Err(Error::Config("an ensemble needs at least one replica".into()));
    }
    let sim = &spec.simulation;
    let sol = &spec.solution;
    let regions: Vec<Vec<Region>> = sim
        .checkpoints
        .iter()
        .map(|&t| spec.windows.iter().map(|w| w.window.region_at(sol, t)).collect())
        .collect();
    let n_obs = sim.checkpoints.len();
    let n_win = spec.windows.len();
    let records = (0..n_replicas)
        .into_par_iter()
        .map(|i| {
            let mut reducer = Reducer {
                regions: &regions,
                solution: sol,
                h_sum: vec![0.0; n_obs],
                record: ReplicaRecord {
                    population: vec![0; n_obs],
                    max_norm: vec![0.0; n_obs],
                    martingale: vec![0.0; n_obs],
                    counts: vec![vec![0; n_win]; n_obs],
                },
            };
            sim.run_with(base_seed, i as u64, &mut reducer)
                .map_err(|e| Error::Replica { replica: i, source: Box::new(e) })?;
            let mut record = reducer.record;
            for (j, &t) in sim.checkpoints.iter().enumerate() {
                record.martingale[j] = (sol.lambda() * t).exp() * reducer.h_sum[j];
            }
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        seed: base_seed,
        checkpoints: sim.checkpoints.clone(),
        labels: spec.windows.iter().map(|w| w.label.clone()).collect(),
        records,
    })
}
