use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// What a report checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    T1Supercritical,
    T1Critical,
    T2Subcritical,
    T2Critical,
    T3Poisson,
    GumbelLt,
    LinearGrowth,
    ManyToOne,
    ManyToTwo,
    Martingale,
    PaleyZygmund,
    SamplerConvergence,
}

impl Theorem {
    pub const ALL: [Theorem; 12] = [
        Theorem::T1Supercritical,
        Theorem::T1Critical,
        Theorem::T2Subcritical,
        Theorem::T2Critical,
        Theorem::T3Poisson,
        Theorem::GumbelLt,
        Theorem::LinearGrowth,
        Theorem::ManyToOne,
        Theorem::ManyToTwo,
        Theorem::Martingale,
        Theorem::PaleyZygmund,
        Theorem::SamplerConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::T1Supercritical => "t1_supercritical",
            Theorem::T1Critical => "t1_critical",
            Theorem::T2Subcritical => "t2_subcritical",
            Theorem::T2Critical => "t2_critical",
            Theorem::T3Poisson => "t3_poisson",
            Theorem::GumbelLt => "gumbel_lt",
            Theorem::LinearGrowth => "linear_growth",
            Theorem::ManyToOne => "many_to_one",
            Theorem::ManyToTwo => "many_to_two",
            Theorem::Martingale => "martingale",
            Theorem::PaleyZygmund => "paley_zygmund",
            Theorem::SamplerConvergence => "sampler_convergence",
        }
    }

    /// Exact finite-time identities; their failures are hard.
    pub fn is_identity(self) -> bool {
        matches!(
            self,
            Theorem::ManyToOne
                | Theorem::ManyToTwo
                | Theorem::Martingale
                | Theorem::PaleyZygmund
                | Theorem::SamplerConvergence
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    PreAsymptotic,
}

/// One tolerance test inside a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    /// Human-readable tolerance, e.g. `in [0.5, 1.6]`.
    pub target: String,
    pub passed: bool,
}

/// An estimate at one horizon, with a confidence interval and the value it is compared with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonStat {
    pub t: f64,
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl HorizonStat {
    /// Normal interval of half-width `z * stderr`.
    pub fn normal(t: f64, label: impl Into<String>, estimate: f64, stderr: f64, reference: Option<f64>) -> Self {
        HorizonStat {
            t,
            label: label.into(),
            estimate,
            stderr,
            lower: estimate - 1.96 * stderr,
            upper: estimate + 1.96 * stderr,
            reference,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: Theorem,
    /// Failures count as hard failures of the suite.
    pub hard: bool,
    pub horizons: Vec<f64>,
    pub statistics: Vec<HorizonStat>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    /// Numeric diagnostics.
    pub details: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl TheoremReport {
    pub fn new(theorem: Theorem, horizons: Vec<f64>) -> Self {
        TheoremReport {
            theorem,
            hard: theorem.is_identity(),
            horizons,
            statistics: Vec::new(),
            checks: Vec::new(),
            verdict: Verdict::Pass,
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, observed: f64, target: impl Into<String>, passed: bool) {
        self.checks.push(Check { name: name.into(), observed, target: target.into(), passed });
    }

    pub fn detail(&mut self, key: impl Into<String>, value: f64) {
        self.details.insert(key.into(), value);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Sets the verdict: any failed check fails the report; otherwise a report whose horizons are
    /// not yet asymptotic is marked pre-asymptotic rather than passed.
    pub fn finish(mut self, pre_asymptotic: bool) -> Self {
        self.verdict = if self.checks.iter().any(|c| !c.passed) {
            Verdict::Fail
        } else if pre_asymptotic {
            Verdict::PreAsymptotic
        } else {
            Verdict::Pass
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Conjunction of reports: 0 when everything passes, 3 on any hard failure, 1 otherwise.
pub fn suite_exit_code(reports: &[TheoremReport]) -> i32 {
    if reports.iter().any(|r| r.hard && r.verdict != Verdict::Pass) {
        3
    } else if reports.iter().any(|r| r.verdict != Verdict::Pass) {
        1
    } else {
        0
    }
}
