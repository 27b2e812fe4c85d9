use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{advance, Advance, PathState, StepScheme};
use crate::error::Result;
use crate::geometry::Point;
use crate::rng::task_stream;
use crate::spectral::BranchingRate;

/// Survival estimate `P(T > t)` at one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: StepScheme,
    pub survival: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

const CHUNK: usize = 2048;

/// Estimates the no-branch probability up to `t` from `x0` under each scheme in `schemes`.
pub fn survival_sweep(
    rate: &BranchingRate,
    x0: Point,
    t: f64,
    schemes: &[StepScheme],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    schemes
        .iter()
        .enumerate()
        .map(|(level, scheme)| {
            scheme.validate(rate)?;
            let chunks = n_paths.div_ceil(CHUNK);
            let survived: Vec<usize> = (0..chunks)
                .into_par_iter()
                .map(|c| -> Result<usize> {
                    let mut rng = task_stream(seed, "survival-sweep", ((level as u64) << 32) | c as u64);
                    let count = CHUNK.min(n_paths - c * CHUNK);
                    let mut alive = 0;
                    for _ in 0..count {
                        let budget: f64 = rng.sample(Exp1);
                        let mut state = PathState::new(x0, 0.0, budget);
                        if advance(&mut state, t, rate, scheme, &mut rng)? == Advance::Survived {
                            alive += 1;
                        }
                    }
                    Ok(alive)
                })
                .collect::<Result<_>>()?;
            let p = survived.iter().sum::<usize>() as f64 / n_paths as f64;
            Ok(SweepPoint {
                scheme: *scheme,
                survival: p,
                stderr: (p * (1.0 - p) / n_paths as f64).sqrt(),
                n_paths,
            })
        })
        .collect()
}
