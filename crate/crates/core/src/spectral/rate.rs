use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest offspring count accepted by validation.
pub const MAX_OFFSPRING: usize = 10;

/// A point catalyst on the line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Support of the branching-rate measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Finite sum of weighted Dirac masses on the line. An empty list is the zero measure.
    Atoms(Vec<Atom>),
    /// Surface (arc-length) measure on the circle of the given radius in the plane, times `strength`.
    Circle { radius: f64, strength: f64 },
}

/// Offspring distribution `p_1, ..., p_K`; index 0 holds `p_1`. There is no death.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringLaw {
    probabilities: Vec<f64>,
}

impl OffspringLaw {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.len() > MAX_OFFSPRING {
            return Err(Error::InvalidRate(format!(
                "offspring law needs between 1 and {MAX_OFFSPRING} entries, got {}",
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidRate("offspring probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRate(format!("offspring probabilities sum to {total}, not 1")));
        }
        Ok(OffspringLaw { probabilities })
    }

    /// Every particle splits into exactly two.
    pub fn binary() -> Self {
        OffspringLaw { probabilities: vec![0.0, 1.0] }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `P(n offspring)` for `n >= 1`.
    pub fn prob(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.probabilities.get(n - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn max_offspring(&self) -> usize {
        self.probabilities.len()
    }

    /// Mean offspring number `Q`.
    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// Second factorial moment `R = E[n(n-1)]`.
    pub fn factorial_moment(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let n = (i + 1) as f64;
                n * (n - 1.0) * p
            })
            .sum()
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    pub fn sample_from_uniform(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        // rounding left a sliver above the last cumulative value
        self.probabilities.iter().rposition(|&p| p > 0.0).map_or(1, |i| i + 1)
    }
}

impl TryFrom<Vec<f64>> for OffspringLaw {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        OffspringLaw::new(v)
    }
}

impl From<OffspringLaw> for Vec<f64> {
    fn from(law: OffspringLaw) -> Self {
        law.probabilities
    }
}

/// Branching-rate measure together with the offspring law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchingRate {
    dimension: u8,
    geometry: Geometry,
    offspring: OffspringLaw,
}

impl BranchingRate {
    pub fn new(dimension: u8, geometry: Geometry, offspring: OffspringLaw) -> Result<Self> {
        match (&geometry, dimension) {
            (Geometry::Atoms(atoms), 1) => {
                for a in atoms {
                    if !(a.weight > 0.0 && a.weight.is_finite()) || !a.position.is_finite() {
                        return Err(Error::InvalidRate(format!(
                            "atom at {} has weight {}; weights must be positive and finite",
                            a.position, a.weight
                        )));
                    }
                }
                let mut xs: Vec<f64> = atoms.iter().map(|a| a.position).collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if xs.windows(2).any(|w| w[1] - w[0] <= 0.0) {
                    return Err(Error::InvalidRate("atom positions must be distinct".into()));
                }
            }
            (Geometry::Atoms(atoms), 2) if atoms.is_empty() => {}
            (Geometry::Atoms(_), 2) => {
                return Err(Error::InvalidRate(
                    "point masses are not admissible in d=2: planar Brownian motion does not hit points".into(),
                ))
            }
            (Geometry::Circle { radius, strength }, 2) => {
                if !(*radius > 0.0 && radius.is_finite()) || !(*strength > 0.0 && strength.is_finite()) {
                    return Err(Error::InvalidRate("circle radius and strength must be positive".into()));
                }
            }
            (Geometry::Circle { .. }, d) => {
                return Err(Error::InvalidRate(format!("circle catalysts need d=2, got d={d}")))
            }
            (_, d) => return Err(Error::InvalidRate(format!("dimension must be 1 or 2, got {d}"))),
        }
        Ok(BranchingRate { dimension, geometry, offspring })
    }

    /// Atoms on the line with binary branching.
    pub fn atoms_1d(atoms: &[(f64, f64)]) -> Result<Self> {
        let atoms = atoms.iter().map(|&(position, weight)| Atom { position, weight }).collect();
        Self::new(1, Geometry::Atoms(atoms), OffspringLaw::binary())
    }

    /// Circle of radius `radius` and strength `strength` in the plane, binary branching.
    pub fn circle_2d(radius: f64, strength: f64) -> Result<Self> {
        Self::new(2, Geometry::Circle { radius, strength }, OffspringLaw::binary())
    }

    /// The zero measure in dimension `d`.
    pub fn zero(dimension: u8) -> Result<Self> {
        Self::new(dimension, Geometry::Atoms(Vec::new()), OffspringLaw::binary())
    }

    pub fn with_offspring(mut self, offspring: OffspringLaw) -> Self {
        self.offspring = offspring;
        self
    }

    pub fn dimension(&self) -> u8 {
        self.dimension
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn offspring(&self) -> &OffspringLaw {
        &self.offspring
    }

    /// `Q - 1`, the factor turning `mu` into the potential `(Q-1) mu`.
    pub fn excess_mean(&self) -> f64 {
        self.offspring.mean() - 1.0
    }

    pub fn q(&self) -> f64 {
        self.offspring.mean()
    }

    pub fn r(&self) -> f64 {
        self.offspring.factorial_moment()
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.geometry, Geometry::Atoms(a) if a.is_empty())
    }

    /// Total mass of `mu`.
    pub fn total_mass(&self) -> f64 {
        match &self.geometry {
            Geometry::Atoms(atoms) => atoms.iter().map(|a| a.weight).sum(),
            Geometry::Circle { radius, strength } => 2.0 * std::f64::consts::PI * radius * strength,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        match &self.geometry {
            Geometry::Atoms(a) => a,
            Geometry::Circle { .. } => &[],
        }
    }

    /// Smallest distance between two distinct atoms, infinite for fewer than two.
    pub fn min_atom_separation(&self) -> f64 {
        let mut xs: Vec<f64> = self.atoms().iter().map(|a| a.position).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}
