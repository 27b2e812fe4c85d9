use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::rate::{BranchingRate, Geometry};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::special::{adaptive_simpson, bessel_i0, bessel_i0_scaled, bessel_i1, bessel_k0, bessel_k0_scaled, bessel_k1};

/// Below this `k` the principal eigenvalue is indistinguishable from zero.
const K_FLOOR: f64 = 1e-8;

/// Root-finding controls shared by both solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Points of the geometric sign-scan grid on `(0, k_max]`.
    pub grid_points: usize,
    /// Relative width at which bisection stops.
    pub rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { grid_points: 512, rel_tol: 1e-12 }
    }
}

/// Closed-form pieces of the ground state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenPieces {
    /// `h(x) = sum_i coefficients[i] * exp(-k |x - centers[i]|)` on the line.
    Exponentials { centers: Vec<f64>, coefficients: Vec<f64> },
    /// Radial: `interior * I0(k r)` for `r < radius`, `exterior * K0(k r)` for `r >= radius`.
    Bessel { radius: f64, interior: f64, exterior: f64 },
}

/// Principal eigenvalue and ground state of `-Laplacian/2 - (Q-1) mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    lambda: f64,
    k: f64,
    pieces: EigenPieces,
    /// L2 norm of `pieces` as stored.
    norm: f64,
    normalized: bool,
}

impl SpectralSolution {
    fn from_pieces(k: f64, pieces: EigenPieces) -> Self {
        let mut sol = SpectralSolution { lambda: -0.5 * k * k, k, pieces, norm: 1.0, normalized: false };
        sol.norm = sol.l2_norm();
        sol
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Decay rate `sqrt(-2 lambda)`.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn pieces(&self) -> &EigenPieces {
        &self.pieces
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dimension(&self) -> u8 {
        match self.pieces {
            EigenPieces::Exponentials { .. } => 1,
            EigenPieces::Bessel { .. } => 2,
        }
    }

    /// Front speed `sqrt(-lambda/2)`.
    pub fn critical_speed(&self) -> f64 {
        (-0.5 * self.lambda).sqrt()
    }

    /// Evaluates the eigenfunction.
    pub fn eval(&self, x: &Point) -> f64 {
        match &self.pieces {
            EigenPieces::Exponentials { centers, coefficients } => {
                let x = x.x();
                centers.iter().zip(coefficients).map(|(c, a)| a * (-self.k * (x - c).abs()).exp()).sum()
            }
            EigenPieces::Bessel { radius, interior, exterior } => {
                let r = x.norm();
                if r < *radius {
                    interior * bessel_i0(self.k * r)
                } else {
                    exterior * bessel_k0(self.k * r)
                }
            }
        }
    }

    /// `log h(x)`, accurate far beyond the point where `h` underflows.
    pub fn ln_eval(&self, x: &Point) -> f64 {
        match &self.pieces {
            EigenPieces::Exponentials { centers, coefficients } => {
                let x = x.x();
                let logs: Vec<f64> =
                    centers.iter().zip(coefficients).map(|(c, a)| a.ln() - self.k * (x - c).abs()).collect();
                let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
            }
            EigenPieces::Bessel { radius, interior, exterior } => {
                let r = x.norm();
                let z = self.k * r;
                if r < *radius {
                    interior.ln() + bessel_i0_scaled(z).ln() + z
                } else {
                    exterior.ln() + bessel_k0_scaled(z).ln() - z
                }
            }
        }
    }

    /// `|| h ||_2` of the stored pieces, in closed form for exponentials and by
    /// adaptive Simpson for the Bessel branches.
    pub fn l2_norm(&self) -> f64 {
        match &self.pieces {
            EigenPieces::Exponentials { centers, coefficients } => {
                let k = self.k;
                let mut total = 0.0;
                for (ci, ai) in centers.iter().zip(coefficients) {
                    for (cj, aj) in centers.iter().zip(coefficients) {
                        // int exp(-k|x-a| - k|x-b|) dx = exp(-k d) (d + 1/k)
                        let d = (ci - cj).abs();
                        total += ai * aj * (-k * d).exp() * (d + 1.0 / k);
                    }
                }
                total.sqrt()
            }
            EigenPieces::Bessel { radius, interior, exterior } => {
                let (inner, outer) = bessel_square_integrals(self.k, *radius);
                (2.0 * PI * (interior * interior * inner + exterior * exterior * outer)).sqrt()
            }
        }
    }

    /// Multiplies the eigenfunction by `c > 0`; the result is not normalized.
    pub fn scaled(&self, c: f64) -> Self {
        let pieces = match &self.pieces {
            EigenPieces::Exponentials { centers, coefficients } => EigenPieces::Exponentials {
                centers: centers.clone(),
                coefficients: coefficients.iter().map(|a| a * c).collect(),
            },
            EigenPieces::Bessel { radius, interior, exterior } => {
                EigenPieces::Bessel { radius: *radius, interior: interior * c, exterior: exterior * c }
            }
        };
        SpectralSolution { pieces, norm: self.norm * c, normalized: false, ..self.clone() }
    }

    /// Rescales to unit L2 norm.
    pub fn normalized(&self) -> Self {
        let norm = self.l2_norm();
        let mut out = self.scaled(1.0 / norm);
        out.norm = out.l2_norm();
        out.normalized = true;
        out
    }

    /// Jump-condition residuals `-(1/2)(h'(z+) - h'(z-)) - (Q-1) w h(z)` at each support point.
    /// For the circle the second entry is the continuity residual `h(R+) - h(R-)`.
    pub fn jump_residuals(&self, rate: &BranchingRate) -> Vec<f64> {
        let excess = rate.excess_mean();
        match (&self.pieces, rate.geometry()) {
            (EigenPieces::Exponentials { centers, coefficients }, Geometry::Atoms(atoms)) => {
                let k = self.k;
                atoms
                    .iter()
                    .map(|atom| {
                        let z = atom.position;
                        let mut right = 0.0;
                        let mut left = 0.0;
                        for (c, a) in centers.iter().zip(coefficients) {
                            let e = a * (-k * (z - c).abs()).exp();
                            if z > *c {
                                right -= k * e;
                                left -= k * e;
                            } else if z < *c {
                                right += k * e;
                                left += k * e;
                            } else {
                                right -= k * e;
                                left += k * e;
                            }
                        }
                        -0.5 * (right - left) - excess * atom.weight * self.eval(&Point::on_line(z))
                    })
                    .collect()
            }
            (EigenPieces::Bessel { radius, interior, exterior }, Geometry::Circle { strength, .. }) => {
                let z = self.k * radius;
                let h_in = interior * bessel_i0(z);
                let h_out = exterior * bessel_k0(z);
                let d_in = interior * self.k * bessel_i1(z);
                let d_out = -exterior * self.k * bessel_k1(z);
                vec![-0.5 * (d_out - d_in) - excess * strength * h_in, h_out - h_in]
            }
            _ => vec![f64::NAN],
        }
    }

    /// Residual of `-(1/2) Laplacian h - lambda h` at a point off the support, using
    /// analytic derivatives of each piece.
    pub fn ode_residual(&self, x: &Point) -> f64 {
        let k = self.k;
        match &self.pieces {
            EigenPieces::Exponentials { centers, coefficients } => {
                let x = x.x();
                let second: f64 =
                    centers.iter().zip(coefficients).map(|(c, a)| k * k * a * (-k * (x - c).abs()).exp()).sum();
                -0.5 * second - self.lambda * self.eval(&Point::on_line(x))
            }
            EigenPieces::Bessel { radius, interior, exterior } => {
                let r = x.norm();
                let z = k * r;
                let (h, d1, d2) = if r < *radius {
                    let (i0, i1) = (bessel_i0(z), bessel_i1(z));
                    (interior * i0, interior * k * i1, interior * k * k * (i0 - i1 / z))
                } else {
                    let (k0, k1) = (bessel_k0(z), bessel_k1(z));
                    (exterior * k0, -exterior * k * k1, exterior * k * k * (k0 + k1 / z))
                };
                -0.5 * (d2 + d1 / r) - self.lambda * h
            }
        }
    }
}

/// Evaluates the eigenfunction of `sol` at `x`.
pub fn eval_h(sol: &SpectralSolution, x: &Point) -> f64 {
    sol.eval(x)
}

/// `int_0^R I0(kr)^2 r dr` and `int_R^inf K0(kr)^2 r dr` by adaptive Simpson.
fn bessel_square_integrals(k: f64, radius: f64) -> (f64, f64) {
    let inner_f = |r: f64| {
        let v = bessel_i0(k * r);
        v * v * r
    };
    let scale_in = inner_f(radius) * radius;
    let inner = adaptive_simpson(&inner_f, 0.0, radius, 1e-13 * scale_in.max(1e-300));

    let outer_f = |r: f64| {
        let v = bessel_k0(k * r);
        v * v * r
    };
    let scale_out = outer_f(radius) / k;
    // integrate over slabs of width 1/k until the remaining tail is negligible
    let mut outer = 0.0;
    let mut a = radius;
    for _ in 0..60 {
        let b = a + 1.0 / k;
        let piece = adaptive_simpson(&outer_f, a, b, 1e-14 * scale_out.max(1e-300));
        outer += piece;
        a = b;
        if piece < 1e-17 * outer {
            break;
        }
    }
    (inner, outer)
}

/// Solves any supported catalyst.
pub fn solve(rate: &BranchingRate) -> Result<SpectralSolution> {
    match rate.geometry() {
        Geometry::Atoms(_) if rate.dimension() == 1 => solve_point_catalysts_1d(rate),
        Geometry::Circle { .. } => solve_circle_catalyst_2d(rate),
        Geometry::Atoms(_) => Err(Error::NoNegativeEigenvalue("zero measure in d=2".into())),
    }
}

pub fn solve_point_catalysts_1d(rate: &BranchingRate) -> Result<SpectralSolution> {
    solve_point_catalysts_1d_with(rate, SolverOptions::default())
}

/// Ground state for finitely many point catalysts on the line.
///
/// With `h = sum A_i exp(-k|x - x_i|)` the jump conditions read `k A = D E(k) A`, where
/// `D = diag(beta_i)` and `E_ij = exp(-k|x_i - x_j|)`. Writing `A = D^{1/2} v` turns this
/// into `S(k) v = k v` with `S = D^{1/2} E D^{1/2}` symmetric with positive entries. A positive
/// ground state needs `k` to be the Perron root `mu(k)` of `S(k)`, which is simple and
/// nonincreasing in `k`, so `mu(k) - k` has exactly one root on `(0, sum beta]`. It is found
/// by sign scan and bisection, and `A` is read off the Perron vector. Scanning
/// `det(kI - D E)` instead can miss the root where other branches of `S` cross it.
pub fn solve_point_catalysts_1d_with(rate: &BranchingRate, opts: SolverOptions) -> Result<SpectralSolution> {
    let Geometry::Atoms(atoms) = rate.geometry() else {
        return Err(Error::InvalidRate("expected point catalysts".into()));
    };
    if rate.dimension() != 1 {
        return Err(Error::InvalidRate("point catalysts are only supported in d=1".into()));
    }
    if atoms.is_empty() {
        return Err(Error::NoNegativeEigenvalue("the branching measure is zero".into()));
    }
    let excess = rate.excess_mean();
    if excess <= 0.0 {
        return Err(Error::NoNegativeEigenvalue(format!(
            "mean offspring Q = {} gives a nonpositive potential (Q-1) mu",
            rate.q()
        )));
    }
    let betas: Vec<f64> = atoms.iter().map(|a| a.weight * excess).collect();
    let centers: Vec<f64> = atoms.iter().map(|a| a.position).collect();

    if atoms.len() == 1 {
        let beta = betas[0];
        let sol = SpectralSolution::from_pieces(
            beta,
            EigenPieces::Exponentials { centers, coefficients: vec![beta.sqrt()] },
        );
        return Ok(SpectralSolution { norm: 1.0, normalized: true, ..sol });
    }

    let m = atoms.len();
    let sym = |k: f64| {
        DMatrix::from_fn(m, m, |i, j| (betas[i] * betas[j]).sqrt() * (-k * (centers[i] - centers[j]).abs()).exp())
    };
    let perron_gap = |k: f64| SymmetricEigen::new(sym(k)).eigenvalues.max() - k;

    let k_max = 2.0 * betas.iter().sum::<f64>();
    let k = rightmost_root(&perron_gap, k_max, opts).ok_or_else(|| {
        Error::NoNegativeEigenvalue("no sign change of the matching equation on (0, 2 sum beta]".into())
    })?;

    let eig = SymmetricEigen::new(sym(k));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let top = eig.eigenvalues[order[0]];
    let next = eig.eigenvalues[order[1]];
    if (next - k).abs() <= 1e-8 * k {
        return Err(Error::DegenerateRoot { k, next });
    }
    if (top - k).abs() > 1e-6 * k {
        // the rightmost root always belongs to the top branch; anything else is a scan failure
        return Err(Error::DegenerateRoot { k, next: top });
    }
    let v = eig.eigenvectors.column(order[0]);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let coefficients: Vec<f64> = (0..m).map(|i| sign * betas[i].sqrt() * v[i]).collect();
    if coefficients.iter().any(|&a| a <= 0.0) {
        return Err(Error::DegenerateRoot { k, next });
    }
    Ok(SpectralSolution::from_pieces(k, EigenPieces::Exponentials { centers, coefficients }).normalized())
}

pub fn solve_circle_catalyst_2d(rate: &BranchingRate) -> Result<SpectralSolution> {
    solve_circle_catalyst_2d_with(rate, SolverOptions::default())
}

/// Ground state for the surface measure of a circle in the plane.
///
/// Continuity and the radial jump condition reduce, through the Wronskian
/// `I0(z) K1(z) + I1(z) K0(z) = 1/z`, to `I0(kR) K0(kR) = 1 / (2 beta R)`. The left side
/// decreases from `+inf` to `0`, so the root is unique whenever it exceeds the floor.
pub fn solve_circle_catalyst_2d_with(rate: &BranchingRate, opts: SolverOptions) -> Result<SpectralSolution> {
    let Geometry::Circle { radius, strength } = *rate.geometry() else {
        return Err(Error::InvalidRate("expected a circle catalyst".into()));
    };
    let beta = strength * rate.excess_mean();
    if beta <= 0.0 {
        return Err(Error::NoNegativeEigenvalue(format!(
            "mean offspring Q = {} gives a nonpositive potential (Q-1) mu",
            rate.q()
        )));
    }
    let target = 1.0 / (2.0 * beta * radius);
    let g = |k: f64| {
        let z = k * radius;
        bessel_i0_scaled(z) * bessel_k0_scaled(z) - target
    };
    let k_max = 2.0 * (beta + 1.0 / radius);
    let k = rightmost_root(&g, k_max, opts)
        .filter(|&k| k >= K_FLOOR)
        .ok_or_else(|| Error::NoNegativeEigenvalue(format!("matching root below k = {K_FLOOR:e} for beta R = {}", beta * radius)))?;
    let z = k * radius;
    let exterior = bessel_i0(z) / bessel_k0(z);
    Ok(SpectralSolution::from_pieces(k, EigenPieces::Bessel { radius, interior: 1.0, exterior }).normalized())
}

/// Rightmost sign change of `f` on a geometric grid spanning eight decades below `k_max`,
/// refined by bisection.
fn rightmost_root<F: Fn(f64) -> f64>(f: &F, k_max: f64, opts: SolverOptions) -> Option<f64> {
    let n = opts.grid_points.max(2);
    let lo = K_FLOOR.min(k_max * 1e-8);
    let ratio = (k_max / lo).powf(1.0 / (n - 1) as f64);
    let grid: Vec<f64> = (0..n).map(|i| if i == n - 1 { k_max } else { lo * ratio.powi(i as i32) }).collect();
    let values: Vec<f64> = grid.iter().map(|&k| f(k)).collect();
    let idx = (0..n - 1).rev().find(|&i| values[i] == 0.0 || values[i].signum() != values[i + 1].signum())?;
    if values[idx] == 0.0 {
        return Some(grid[idx]);
    }
    let (mut a, mut b) = (grid[idx], grid[idx + 1]);
    let sa = values[idx].signum();
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if b - a <= opts.rel_tol * m {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}
