//! Principal eigenvalue and ground state of `-Laplacian/2 - (Q-1) mu` for point catalysts on
//! the line and circle catalysts in the plane, plus the frontier constants built from them.

mod frontier;
mod rate;
mod solve;

pub use frontier::{
    c_theta_circle_closed_form, check_disjoint, classify_speed, compute_c_star, compute_c_theta, radius_at,
    window_factor, FrontierWindow, GammaSpec, GrowthLaw, RadiusSchedule, Regime, CRITICAL_TOLERANCE,
};
pub use rate::{Atom, BranchingRate, Geometry, OffspringLaw, MAX_OFFSPRING};
pub use solve::{
    eval_h, solve, solve_circle_catalyst_2d, solve_circle_catalyst_2d_with, solve_point_catalysts_1d,
    solve_point_catalysts_1d_with, EigenPieces, SolverOptions, SpectralSolution,
};
