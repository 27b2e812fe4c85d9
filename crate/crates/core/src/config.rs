//! Experiment configuration files and the shipped presets.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! name = "point1d"
//! offspring = [0.0, 1.0]
//! x0 = [0.0, 0.0]
//! horizons = [6.0, 10.0, 14.0, 18.0]
//! replicas = 10000
//! seed = 1
//!
//! [catalyst]
//! kind = "atoms"
//! positions = [0.0]
//! weights = [1.0]
//!
//! [scheme]
//! kind = "exact"
//!
//! [[windows]]
//! label = "front"
//! r1 = 0.0
//! r2 = 1.0
//! directions = "all"
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{NamedWindow, Simulation, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::geometry::{Arc, DirectionSet, Point};
use crate::paths::StepScheme;
use crate::spectral::{solve, Atom, BranchingRate, GammaSpec, Geometry, OffspringLaw, RadiusSchedule, SpectralSolution};

/// Names of the shipped presets.
pub const PRESETS: [&str; 3] = ["point1d", "twopoint1d", "circle2d"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalystSpec {
    /// Point catalysts on the line.
    Atoms { positions: Vec<f64>, weights: Vec<f64> },
    /// Uniform catalyst on a circle in the plane.
    Circle { radius: f64, strength: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    /// Both half-lines (d=1) or the full circle (d=2).
    #[default]
    All,
    Plus,
    Minus,
}

/// Front position shared by windows that do not override it. Without `delta` the front moves
/// at the critical speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "GammaSpec::zero")]
    pub gamma: GammaSpec,
}

impl Default for FrontierSpec {
    fn default() -> Self {
        FrontierSpec { delta: None, gamma: GammaSpec::zero() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub label: String,
    pub r1: f64,
    pub r2: f64,
    #[serde(default)]
    pub directions: Directions,
    /// Angular arcs `[start, end]` in radians (d=2); replaces `directions` when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arcs: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier: Option<FrontierSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub catalyst: CatalystSpec,
    #[serde(default = "OffspringLaw::binary")]
    pub offspring: OffspringLaw,
    /// Defaults to the exact scheme where it applies and the band scheme otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<StepScheme>,
    #[serde(default)]
    pub x0: [f64; 2],
    #[serde(default)]
    pub frontier: FrontierSpec,
    #[serde(default)]
    pub windows: Vec<WindowSpec>,
    pub horizons: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Weighted paths per Feynman-Kac estimate.
    #[serde(default = "default_fk_paths")]
    pub fk_paths: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_fk_paths() -> usize {
    100_000
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn preset(name: &str) -> Option<Self> {
        let both = |label: &str, r1: f64, r2: f64| WindowSpec {
            label: label.into(),
            r1,
            r2,
            directions: Directions::All,
            arcs: Vec::new(),
            frontier: None,
        };
        let base = |name: &str, catalyst: CatalystSpec| ExperimentConfig {
            name: name.into(),
            catalyst,
            offspring: OffspringLaw::binary(),
            scheme: None,
            x0: [0.0, 0.0],
            frontier: FrontierSpec::default(),
            windows: Vec::new(),
            horizons: Vec::new(),
            replicas: 0,
            seed: 20_240_601,
            cap: DEFAULT_CAP,
            fk_paths: default_fk_paths(),
            output: OutputSpec::default(),
        };
        let cfg = match name {
            "point1d" => ExperimentConfig {
                windows: vec![both("front", 0.0, 1.0), both("behind", -2.0, -1.0)],
                horizons: vec![6.0, 10.0, 14.0, 18.0],
                replicas: 10_000,
                ..base(name, CatalystSpec::Atoms { positions: vec![0.0], weights: vec![1.0] })
            },
            "twopoint1d" => ExperimentConfig {
                windows: vec![both("front", 0.0, 1.0), both("behind", -1.0, 0.0)],
                horizons: vec![2.0, 4.0, 6.0],
                replicas: 2_000,
                fk_paths: 20_000,
                ..base(name, CatalystSpec::Atoms { positions: vec![0.0, 1.0], weights: vec![1.0, 1.0] })
            },
            "circle2d" => ExperimentConfig {
                windows: vec![both("front", 0.0, 1.0), both("behind", -1.0, 0.0)],
                horizons: vec![2.0, 4.0, 6.0],
                replicas: 2_000,
                fk_paths: 20_000,
                ..base(name, CatalystSpec::Circle { radius: 1.0, strength: 1.0 })
            },
            _ => return None,
        };
        Some(cfg)
    }

    pub fn dimension(&self) -> u8 {
        match self.catalyst {
            CatalystSpec::Atoms { .. } => 1,
            CatalystSpec::Circle { .. } => 2,
        }
    }

    pub fn rate(&self) -> Result<BranchingRate> {
        let geometry = match &self.catalyst {
            CatalystSpec::Atoms { positions, weights } => {
                if positions.len() != weights.len() {
                    return Err(Error::Config("catalyst positions and weights differ in length".into()));
                }
                Geometry::Atoms(
                    positions.iter().zip(weights).map(|(&position, &weight)| Atom { position, weight }).collect(),
                )
            }
            CatalystSpec::Circle { radius, strength } => Geometry::Circle { radius: *radius, strength: *strength },
        };
        BranchingRate::new(self.dimension(), geometry, self.offspring.clone())
    }

    pub fn scheme(&self, rate: &BranchingRate) -> StepScheme {
        self.scheme.unwrap_or_else(|| StepScheme::default_for(rate))
    }

    pub fn x0(&self) -> Point {
        Point(self.x0)
    }

    pub fn solution(&self) -> Result<SpectralSolution> {
        solve(&self.rate()?)
    }

    fn schedule_for(&self, spec: &FrontierSpec, sol: &SpectralSolution) -> RadiusSchedule {
        match spec.delta {
            Some(delta) => RadiusSchedule::with_speed(delta, spec.gamma.clone(), self.dimension()),
            None => RadiusSchedule::critical(sol, spec.gamma.clone()),
        }
    }

    pub fn schedule(&self, sol: &SpectralSolution) -> RadiusSchedule {
        self.schedule_for(&self.frontier, sol)
    }

    pub fn windows(&self, sol: &SpectralSolution) -> Result<Vec<NamedWindow>> {
        self.windows
            .iter()
            .map(|w| {
                let theta = match (self.dimension(), w.arcs.is_empty(), w.directions) {
                    (1, true, Directions::All) => DirectionSet::both_signs(),
                    (1, true, Directions::Plus) => DirectionSet::plus(),
                    (1, true, Directions::Minus) => DirectionSet::minus(),
                    (1, false, _) => return Err(Error::Config(format!("window {}: arcs need d=2", w.label))),
                    (_, true, Directions::All) => DirectionSet::full_circle(),
                    (_, true, _) => {
                        return Err(Error::Config(format!("window {}: use arcs for directions in d=2", w.label)))
                    }
                    (_, false, _) => DirectionSet::Arcs(
                        w.arcs.iter().map(|[a, b]| Arc::new(*a, *b)).collect::<Result<Vec<_>>>()?,
                    ),
                };
                let schedule = self.schedule_for(w.frontier.as_ref().unwrap_or(&self.frontier), sol);
                let window = crate::spectral::FrontierWindow::new(w.r1, w.r2, theta, schedule)?;
                Ok(NamedWindow { label: w.label.clone(), window })
            })
            .collect()
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let rate = self.rate()?;
        let scheme = self.scheme(&rate);
        Ok(Simulation::new(rate, scheme, self.x0(), self.horizons.clone())?.with_cap(self.cap))
    }

    /// Checks everything that can be checked without simulating.
    pub fn validate(&self) -> Result<()> {
        let rate = self.rate()?;
        let sim = self.simulation()?;
        sim.validate()?;
        if self.replicas == 0 || self.fk_paths < 2 {
            return Err(Error::Config("replicas must be positive and fk_paths at least 2".into()));
        }
        let mut labels: Vec<&str> = self.windows.iter().map(|w| w.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Config("window labels must be unique".into()));
        }
        self.frontier.gamma.validate()?;
        if rate.is_zero() {
            // nothing to solve; windows need a schedule only if present
            if !self.windows.is_empty() {
                return Err(Error::DegenerateConfig("windows need a catalyst with positive mass".into()));
            }
            return Ok(());
        }
        let sol = solve(&rate)?;
        for w in self.windows(&sol)? {
            w.window.schedule.regime(&sol)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            let back = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(ExperimentConfig::preset("nope").is_none());
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"
name = "point1d"
offspring = [0.0, 1.0]
x0 = [0.0, 0.0]
horizons = [6.0, 10.0, 14.0, 18.0]
replicas = 10000
seed = 1

[catalyst]
kind = "atoms"
positions = [0.0]
weights = [1.0]

[scheme]
kind = "exact"

[[windows]]
label = "front"
r1 = 0.0
r2 = 1.0
directions = "both"
"#;
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        // "both" is not a direction keyword; the accepted spelling is "all"
        assert!(matches!(err, Error::Config(_)));
        let cfg = ExperimentConfig::from_toml_str(&text.replace("\"both\"", "\"all\"")).unwrap();
        assert_eq!(cfg.rate().unwrap().atoms().len(), 1);
        assert_eq!(cfg.scheme(&cfg.rate().unwrap()), StepScheme::exact());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::preset("point1d").unwrap().to_toml_string().unwrap();
        text.push_str("\nbogus = 3\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn window_overrides_and_directions() {
        let mut cfg = ExperimentConfig::preset("circle2d").unwrap();
        cfg.windows.push(WindowSpec {
            label: "arc".into(),
            r1: 0.0,
            r2: 1.0,
            directions: Directions::All,
            arcs: vec![[0.0, 1.0]],
            frontier: Some(FrontierSpec { delta: Some(0.2), gamma: GammaSpec::zero() }),
        });
        cfg.validate().unwrap();
        let sol = cfg.solution().unwrap();
        let w = cfg.windows(&sol).unwrap();
        assert_eq!(w[2].window.schedule.delta, 0.2);
        assert!((w[2].window.theta.measure() - 1.0).abs() < 1e-12);
        cfg.windows[2].directions = Directions::Plus;
        cfg.windows[2].arcs.clear();
        assert!(cfg.validate().is_err());
    }
}
