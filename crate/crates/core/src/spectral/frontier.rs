use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use super::rate::{BranchingRate, Geometry};
use super::solve::{EigenPieces, SpectralSolution};
use crate::error::{Error, Result};
use crate::geometry::{DirectionSet, Region};
use crate::special::adaptive_simpson;

/// Relative tolerance for classifying a speed as critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-9;

/// Slowly varying function used in a diverging shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthLaw {
    /// `log(t v 1)`
    Log,
    /// `sqrt(log(t v 1))`
    SqrtLog,
    /// `log(1 + log(t v 1))`
    LogLog,
}

impl GrowthLaw {
    pub fn eval(self, t: f64) -> f64 {
        let l = t.max(1.0).ln();
        match self {
            GrowthLaw::Log => l,
            GrowthLaw::SqrtLog => l.sqrt(),
            GrowthLaw::LogLog => l.ln_1p(),
        }
    }
}

/// The shift `gamma(t)` added to the front position.
///
/// Diverging shifts are measured in units of `1/k`: `ToInfinity { law, coefficient }` is
/// `coefficient * law(t) / k`, so `coefficient = 1, law = Log` gives `exp(-k gamma) = 1/t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSpec {
    Constant { value: f64 },
    ToInfinity { law: GrowthLaw, coefficient: f64 },
    ToMinusInfinity { law: GrowthLaw, coefficient: f64 },
    /// Piecewise-linear through `(times[i], values[i])`, constant beyond the ends.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl GammaSpec {
    pub fn zero() -> Self {
        GammaSpec::Constant { value: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GammaSpec::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidWindow("gamma must be finite".into()))
            }
            GammaSpec::ToInfinity { coefficient, .. } | GammaSpec::ToMinusInfinity { coefficient, .. }
                if !(*coefficient > 0.0 && coefficient.is_finite()) =>
            {
                Err(Error::InvalidWindow("gamma coefficient must be positive".into()))
            }
            GammaSpec::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidWindow("tabulated gamma needs matching nonempty columns".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidWindow("tabulated gamma times must increase".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64, k: f64) -> f64 {
        match self {
            GammaSpec::Constant { value } => *value,
            GammaSpec::ToInfinity { law, coefficient } => coefficient * law.eval(t) / k,
            GammaSpec::ToMinusInfinity { law, coefficient } => -coefficient * law.eval(t) / k,
            GammaSpec::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    pub fn diverges_up(&self) -> bool {
        matches!(self, GammaSpec::ToInfinity { .. })
    }

    pub fn diverges_down(&self) -> bool {
        matches!(self, GammaSpec::ToMinusInfinity { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Front position `R(t) = delta t + a(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusSchedule {
    pub delta: f64,
    pub gamma: GammaSpec,
    pub dimension: u8,
}

impl RadiusSchedule {
    /// Critical schedule for `sol`: `delta = sqrt(-lambda/2)`.
    pub fn critical(sol: &SpectralSolution, gamma: GammaSpec) -> Self {
        RadiusSchedule { delta: sol.critical_speed(), gamma, dimension: sol.dimension() }
    }

    pub fn with_speed(delta: f64, gamma: GammaSpec, dimension: u8) -> Self {
        RadiusSchedule { delta, gamma, dimension }
    }

    /// Classifies `delta` against the speeds `sqrt(-lambda/2)` and `sqrt(-2 lambda)`.
    pub fn regime(&self, sol: &SpectralSolution) -> Result<Regime> {
        classify_speed(self.delta, sol.lambda())
    }

    /// `R(t)`.
    pub fn radius_at(&self, sol: &SpectralSolution, t: f64) -> f64 {
        let k = sol.k();
        let gamma = self.gamma.eval(t, k);
        let critical = matches!(self.regime(sol), Ok(Regime::Critical));
        let a = if critical {
            (self.dimension as f64 - 1.0) / (2.0 * k) * t.max(1.0).ln() + gamma
        } else {
            gamma
        };
        self.delta * t + a
    }
}

pub fn radius_at(schedule: &RadiusSchedule, sol: &SpectralSolution, t: f64) -> f64 {
    schedule.radius_at(sol, t)
}

pub fn classify_speed(delta: f64, lambda: f64) -> Result<Regime> {
    let critical = (-0.5 * lambda).sqrt();
    let upper = (-2.0 * lambda).sqrt();
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::InvalidWindow(format!("speed {delta} must be positive")));
    }
    if (delta - critical).abs() <= CRITICAL_TOLERANCE * critical {
        Ok(Regime::Critical)
    } else if delta < critical {
        Ok(Regime::Subcritical)
    } else if delta < upper {
        Ok(Regime::Supercritical)
    } else {
        Err(Error::InvalidWindow(format!("speed {delta} is not below sqrt(-2 lambda) = {upper}")))
    }
}

/// Radial window `{ s x : s in [R(t) + r1, R(t) + r2], x in theta }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierWindow {
    pub r1: f64,
    pub r2: f64,
    pub theta: DirectionSet,
    pub schedule: RadiusSchedule,
}

impl FrontierWindow {
    pub fn new(r1: f64, r2: f64, theta: DirectionSet, schedule: RadiusSchedule) -> Result<Self> {
        let w = FrontierWindow { r1, r2, theta, schedule };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r1.is_nan() || self.r2.is_nan() || self.r1 >= self.r2 {
            return Err(Error::InvalidWindow(format!("need r1 < r2, got ({}, {})", self.r1, self.r2)));
        }
        if self.theta.is_empty() {
            return Err(Error::EmptyDirections);
        }
        if self.theta.dimension() != self.schedule.dimension {
            return Err(Error::InvalidWindow("direction set does not match the dimension".into()));
        }
        self.schedule.gamma.validate()
    }

    /// The region at observation time `t`.
    pub fn region_at(&self, sol: &SpectralSolution, t: f64) -> Region {
        let r = self.schedule.radius_at(sol, t);
        Region::Shell { inner: (r + self.r1).max(0.0), outer: r + self.r2, dirs: self.theta.clone() }
    }

    /// Whether two windows can share points (same schedule assumed).
    pub fn overlaps(&self, other: &FrontierWindow) -> bool {
        let radial = self.r1.max(other.r1) < self.r2.min(other.r2);
        radial && self.theta.overlap(&other.theta) > 0.0
    }
}

/// Rejects families with overlapping members.
pub fn check_disjoint(windows: &[FrontierWindow]) -> Result<()> {
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            if a.schedule != b.schedule {
                return Err(Error::InvalidWindow("windows in a family must share a schedule".into()));
            }
            if a.overlaps(b) {
                return Err(Error::InvalidWindow(format!(
                    "windows [{}, {}] and [{}, {}] overlap",
                    a.r1, a.r2, b.r1, b.r2
                )));
            }
        }
    }
    Ok(())
}

/// `c_{d,lambda,Theta} = k^{(d-5)/2} (2 pi)^{-(d-1)/2} int (int_Theta e^{k <theta, z>} dtheta) h(z) (Q-1) mu(dz)`.
///
/// In d=1 the inner integral uses counting measure on `{-1, +1}`; on the circle both
/// integrals are done by nested adaptive Simpson.
pub fn compute_c_theta(sol: &SpectralSolution, rate: &BranchingRate, theta: &DirectionSet) -> Result<f64> {
    if theta.is_empty() {
        return Err(Error::EmptyDirections);
    }
    let k = sol.k();
    let d = rate.dimension() as f64;
    let excess = rate.excess_mean();
    let prefactor = k.powf((d - 5.0) / 2.0) / TAU.powf((d - 1.0) / 2.0);
    match (rate.geometry(), theta) {
        (Geometry::Atoms(atoms), DirectionSet::Signs { .. }) => {
            let signs = theta.signs();
            let integral: f64 = atoms
                .iter()
                .map(|a| {
                    let dir: f64 = signs.iter().map(|s| (k * s * a.position).exp()).sum();
                    dir * sol.eval(&crate::geometry::Point::on_line(a.position)) * excess * a.weight
                })
                .sum();
            Ok(prefactor * integral)
        }
        (Geometry::Circle { radius, strength }, DirectionSet::Arcs(arcs)) => {
            let EigenPieces::Bessel { .. } = sol.pieces() else {
                return Err(Error::InvalidWindow("circle catalyst needs a radial solution".into()));
            };
            let h_on_circle = sol.eval(&crate::geometry::Point::new(*radius, 0.0));
            let kr = k * radius;
            // inner integral over theta for a point at angle phi on the circle
            let inner = |phi: f64| -> f64 {
                arcs.iter()
                    .map(|arc| {
                        let f = |th: f64| (kr * (th - phi).cos() - kr).exp();
                        adaptive_simpson(&f, arc.start, arc.start + arc.length, 1e-13)
                    })
                    .sum::<f64>()
            };
            // the e^{-kr} scaling keeps the integrand O(1); restore it at the end
            let outer = adaptive_simpson(&inner, 0.0, TAU, 1e-12) * radius;
            Ok(prefactor * outer * kr.exp() * h_on_circle * excess * strength)
        }
        _ => Err(Error::InvalidWindow("direction set does not match the catalyst dimension".into())),
    }
}

/// `c_* = c_{d,lambda,Theta} (e^{-k r1} - e^{-k r2})`; `r2` may be infinite.
pub fn compute_c_star(sol: &SpectralSolution, rate: &BranchingRate, window: &FrontierWindow) -> Result<f64> {
    window.validate()?;
    let c = compute_c_theta(sol, rate, &window.theta)?;
    Ok(c * window_factor(sol.k(), window.r1, window.r2))
}

/// `e^{-k r1} - e^{-k r2}`.
pub fn window_factor(k: f64, r1: f64, r2: f64) -> f64 {
    (-k * r1).exp() - (-k * r2).exp()
}

/// Closed form of `c_{2,lambda,Theta}` for the circle: `|Theta| B k^{-3/2} sqrt(pi/2)`,
/// where `B` is the exterior coefficient. Uses `int_0^{2pi} e^{a cos} = 2 pi I0(a)` and the
/// matching condition.
pub fn c_theta_circle_closed_form(sol: &SpectralSolution, theta: &DirectionSet) -> Option<f64> {
    match sol.pieces() {
        EigenPieces::Bessel { exterior, .. } => Some(theta.measure() * exterior * sol.k().powf(-1.5) * (PI / 2.0).sqrt()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::solve;

    fn point1d() -> (BranchingRate, SpectralSolution) {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let sol = solve(&rate).unwrap();
        (rate, sol)
    }

    #[test]
    fn c_theta_single_atom() {
        let (rate, sol) = point1d();
        let c = compute_c_theta(&sol, &rate, &DirectionSet::both_signs()).unwrap();
        assert!((c - 2.0).abs() < 1e-14);
        let half = compute_c_theta(&sol, &rate, &DirectionSet::plus()).unwrap();
        assert!((half - 1.0).abs() < 1e-14);
        assert!(compute_c_theta(&sol, &rate, &DirectionSet::Signs { plus: false, minus: false }).is_err());
    }

    #[test]
    fn c_star_unit_window() {
        let (rate, sol) = point1d();
        let sched = RadiusSchedule::critical(&sol, GammaSpec::zero());
        let w = FrontierWindow::new(0.0, 1.0, DirectionSet::both_signs(), sched.clone()).unwrap();
        let c = compute_c_star(&sol, &rate, &w).unwrap();
        assert!((c - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        assert!((c - 1.264_241).abs() < 1e-6);
        let whole = FrontierWindow::new(0.0, f64::INFINITY, DirectionSet::both_signs(), sched).unwrap();
        assert!((compute_c_star(&sol, &rate, &whole).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn radius_examples() {
        let (_, sol) = point1d();
        let sched = RadiusSchedule::critical(&sol, GammaSpec::zero());
        let e = std::f64::consts::E;
        assert!((sched.radius_at(&sol, e) - e / 2.0).abs() < 1e-15);
        assert_eq!(sched.radius_at(&sol, 0.0), 0.0);
        let sched2 = RadiusSchedule { dimension: 2, ..sched };
        assert!((sched2.radius_at(&sol, e * e) - (e * e / 2.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_speed(0.5, -0.5).unwrap(), Regime::Critical);
        assert_eq!(classify_speed(0.3, -0.5).unwrap(), Regime::Subcritical);
        assert_eq!(classify_speed(0.7, -0.5).unwrap(), Regime::Supercritical);
        assert!(classify_speed(1.0, -0.5).is_err());
        assert!(classify_speed(0.0, -0.5).is_err());
    }

    #[test]
    fn tabulated_gamma_interpolates() {
        let g = GammaSpec::Tabulated { times: vec![0.0, 10.0], values: vec![0.0, 2.0] };
        assert!((g.eval(5.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(g.eval(20.0, 1.0), 2.0);
        let up = GammaSpec::ToInfinity { law: GrowthLaw::Log, coefficient: 1.0 };
        assert!((up.eval(std::f64::consts::E, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disjointness() {
        let (_, sol) = point1d();
        let s = RadiusSchedule::critical(&sol, GammaSpec::zero());
        let a = FrontierWindow::new(0.0, 1.0, DirectionSet::plus(), s.clone()).unwrap();
        let b = FrontierWindow::new(0.0, 1.0, DirectionSet::minus(), s.clone()).unwrap();
        let c = FrontierWindow::new(0.5, 2.0, DirectionSet::both_signs(), s).unwrap();
        assert!(check_disjoint(&[a.clone(), b.clone()]).is_ok());
        assert!(check_disjoint(&[a, b, c]).is_err());
    }
}
