//! Finite-time acceptance experiments for the frontier limit theorems and the exact moment
//! identities, assembled into [`TheoremReport`]s.

mod report;
pub mod stats;
mod suite;

pub use report::{suite_exit_code, Check, HorizonStat, Theorem, TheoremReport, Verdict};
pub use suite::{
    bin_label, standard_windows, Suite, CRITICAL_BINS, LOG_UP, MINUS, PLUS, SQRTLOG_DOWN, SUB, SUBCRITICAL_FACTOR,
    SUPER, SUPERCRITICAL_FACTOR, SWEEP_HORIZON, SWEEP_LEVELS,
};
