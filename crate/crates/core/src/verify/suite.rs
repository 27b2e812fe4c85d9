use std::f64::consts::PI;
use std::sync::OnceLock;

use statrs::function::factorial::ln_factorial;

use super::report::{HorizonStat, Theorem, TheoremReport};
use super::stats::{
    chi_square_homogeneity, iqr, linear_regression, mean_stderr, median, nonincreasing_steps, quantile,
    total_variation, wilson,
};
use crate::config::ExperimentConfig;
use crate::engine::{run_ensemble, Ensemble, EnsembleSpec, NamedWindow};
use crate::error::{Error, Result};
use crate::geometry::{Arc, DirectionSet, Point, Region};
use crate::moments::{
    is_pre_asymptotic, many_to_one_ladder, many_to_two, FkOptions, Method, MomentEstimate, SecondMomentOptions,
};
use crate::paths::{survival_at_atom, survival_sweep, StepScheme};
use crate::rng::mix;
use crate::spectral::{
    compute_c_star, compute_c_theta, BranchingRate, FrontierWindow, GammaSpec, GrowthLaw, RadiusSchedule,
    SpectralSolution,
};

/// Radial bins `[r1, r2)` of the critical windows compared against the first-moment oracle.
pub const CRITICAL_BINS: [(f64, f64); 6] = [(-3.0, -2.0), (-2.0, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 2.0), (2.0, 3.0)];
/// Subcritical and supercritical speeds as multiples of the critical one.
pub const SUBCRITICAL_FACTOR: f64 = 0.6;
pub const SUPERCRITICAL_FACTOR: f64 = 1.4;
/// `(dt, band width)` levels of the discretization sweep, coarse to fine.
pub const SWEEP_LEVELS: [(f64, f64); 3] = [(1e-3, 1e-2), (1e-4, 3e-3), (1e-5, 1e-3)];
/// Horizon of the discretization sweep.
pub const SWEEP_HORIZON: f64 = 1.0;

pub const PLUS: &str = "crit_plus";
pub const MINUS: &str = "crit_minus";
pub const SUB: &str = "sub";
pub const SUPER: &str = "super";
/// Critical front shifted by `log(t v 1) / k`.
pub const LOG_UP: &str = "crit_log_up";
/// Critical front shifted by `-sqrt(log(t v 1)) / k`.
pub const SQRTLOG_DOWN: &str = "crit_sqrtlog_down";

/// Label of a critical radial bin over all directions.
pub fn bin_label(r1: f64, r2: f64) -> String {
    format!("crit:{r1}:{r2}")
}

/// Largest window-count total kept in the pmf comparisons.
const PMF_TOTAL: usize = 8;
/// Minimum number of replicas with a nonzero count before a survival estimate is trusted.
const MIN_EVENTS: usize = 30;
const Z95: f64 = 1.959963984540054;

/// Ensemble and oracle results for one configuration, computed on first use and shared by the
/// theorem tests.
pub struct Suite {
    config: ExperimentConfig,
    rate: BranchingRate,
    sol: SpectralSolution,
    scheme: StepScheme,
    windows: Vec<NamedWindow>,
    ensemble: OnceLock<Ensemble>,
    first_moments: OnceLock<Vec<Vec<MomentEstimate>>>,
    second_moments: OnceLock<(TheoremReport, TheoremReport)>,
}

impl Suite {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let rate = config.rate()?;
        if rate.is_zero() {
            return Err(Error::DegenerateConfig(
                "the catalyst has zero mass, so nothing branches and the frontier statistics reduce to \
                 a single Brownian particle"
                    .into(),
            ));
        }
        let sol = config.solution()?;
        let scheme = config.scheme(&rate);
        let mut windows = standard_windows(&sol)?;
        for w in config.windows(&sol)? {
            windows.push(NamedWindow { label: format!("config:{}", w.label), window: w.window });
        }
        Ok(Suite {
            config,
            rate,
            sol,
            scheme,
            windows,
            ensemble: OnceLock::new(),
            first_moments: OnceLock::new(),
            second_moments: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn solution(&self) -> &SpectralSolution {
        &self.sol
    }

    pub fn windows(&self) -> &[NamedWindow] {
        &self.windows
    }

    fn window(&self, label: &str) -> &NamedWindow {
        self.windows.iter().find(|w| w.label == label).expect("standard window")
    }

    fn horizons(&self) -> &[f64] {
        &self.config.horizons
    }

    fn final_horizon(&self) -> f64 {
        *self.horizons().last().expect("validated horizons")
    }

    fn x0(&self) -> Point {
        self.config.x0()
    }

    fn h0(&self) -> f64 {
        self.sol.eval(&self.x0())
    }

    /// The branching ensemble shared by every test.
    pub fn ensemble(&self) -> Result<&Ensemble> {
        if let Some(e) = self.ensemble.get() {
            return Ok(e);
        }
        let spec = EnsembleSpec::new(self.config.simulation()?, self.sol.clone(), self.windows.clone())?;
        let ensemble = run_ensemble(&spec, self.config.replicas, self.config.seed)?;
        Ok(self.ensemble.get_or_init(|| ensemble))
    }

    fn counts(&self, label: &str, j: usize) -> Result<Vec<f64>> {
        let e = self.ensemble()?;
        let w = e.window_index(label).ok_or_else(|| Error::Config(format!("unknown window {label}")))?;
        Ok(e.counts(j, w))
    }

    fn c_star(&self, label: &str) -> Result<f64> {
        compute_c_star(&self.sol, &self.rate, &self.window(label).window)
    }

    /// `e^{lambda t + k R(t)} R(t)^{-(d-1)/2}`.
    fn normalizer(&self, schedule: &RadiusSchedule, t: f64) -> f64 {
        let r = schedule.radius_at(&self.sol, t);
        let d = self.sol.dimension() as f64;
        (self.sol.lambda() * t + self.sol.k() * r - 0.5 * (d - 1.0) * r.ln()).exp()
    }

    fn final_is_pre_asymptotic(&self, report: &mut TheoremReport) -> bool {
        let t = self.final_horizon();
        let pre = is_pre_asymptotic(&self.sol, t);
        if pre {
            report.note(format!(
                "final horizon {t} is below 5/sqrt(-lambda) = {:.3}; absolute tests are not yet meaningful",
                5.0 / (-self.sol.lambda()).sqrt()
            ));
        }
        pre
    }

    /// Survival in the critical window pushed out by `log(t v 1) / k`, normalized by the first
    /// moment predictor: the ratio should approach 1.
    pub fn theorem1_critical(&self) -> Result<TheoremReport> {
        let mut report = TheoremReport::new(Theorem::T1Critical, self.horizons().to_vec());
        let window = &self.window(LOG_UP).window;
        let target = self.c_star(LOG_UP)? * self.h0();
        report.detail("c_star_h_x0", target);
        let mut few_events = false;
        let mut ratios = Vec::new();
        for (j, &t) in self.horizons().iter().enumerate() {
            let counts = self.counts(LOG_UP, j)?;
            let n = counts.len();
            let hits = counts.iter().filter(|&&c| c > 0.0).count();
            few_events |= hits < MIN_EVENTS;
            let p = hits as f64 / n as f64;
            let (lo, hi) = wilson(hits, n, Z95);
            let scale = self.normalizer(&window.schedule, t) / target;
            let ratio = p * scale;
            ratios.push(ratio);
            report.statistics.push(HorizonStat {
                t,
                label: "normalized_survival_ratio".into(),
                estimate: ratio,
                stderr: (p * (1.0 - p) / n as f64).sqrt() * scale,
                lower: lo * scale,
                upper: hi * scale,
                reference: Some(1.0),
            });
        }
        if few_events {
            report.note(format!("fewer than {MIN_EVENTS} replicas with a particle in the window at some horizon"));
        }
        let last = *ratios.last().expect("horizons");
        report.check("final_ratio", last, "in [0.5, 1.6]", (0.5..=1.6).contains(&last));
        trend_check(&mut report, "abs_ratio_minus_one_nonincreasing_steps", &ratios.iter().map(|r| (r - 1.0).abs()).collect::<Vec<_>>());
        let pre = self.final_is_pre_asymptotic(&mut report) || few_events;
        Ok(report.finish(pre))
    }

    /// Decay rate of the survival probability at a supercritical speed.
    pub fn theorem1_supercritical(&self) -> Result<TheoremReport> {
        let mut report = TheoremReport::new(Theorem::T1Supercritical, self.horizons().to_vec());
        let window = &self.window(SUPER).window;
        let delta = window.schedule.delta;
        let expected = -self.sol.lambda() - self.sol.k() * delta;
        let c = self.c_star(SUPER)?;
        report.detail("delta", delta);
        report.detail("expected_slope", expected);
        let (mut ts, mut logs) = (Vec::new(), Vec::new());
        let mut few_events = false;
        for (j, &t) in self.horizons().iter().enumerate() {
            let counts = self.counts(SUPER, j)?;
            let n = counts.len();
            let hits = counts.iter().filter(|&&c| c > 0.0).count();
            few_events |= hits < MIN_EVENTS;
            let p = hits as f64 / n as f64;
            let (lo, hi) = wilson(hits, n, Z95);
            let predicted = crate::moments::predict_survival_probability(&self.sol, c, &self.x0(), t, &window.schedule)?;
            report.statistics.push(HorizonStat {
                t,
                label: "survival_probability".into(),
                estimate: p,
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
                lower: lo,
                upper: hi,
                reference: Some(predicted.value),
            });
            if hits > 0 {
                ts.push(t);
                logs.push(p.ln());
            }
        }
        if ts.len() < 2 {
            report.note("fewer than two horizons with a positive survival estimate");
            return Ok(report.finish(true));
        }
        let fit = linear_regression(&ts, &logs);
        report.detail("slope_stderr", fit.slope_stderr);
        let rel = (fit.slope - expected).abs() / expected.abs();
        report.check("log_survival_slope", fit.slope, format!("within 15% of {expected:.4}"), rel <= 0.15);
        if few_events {
            report.note(format!("fewer than {MIN_EVENTS} replicas with a particle in the window at some horizon"));
        }
        Ok(report.finish(few_events))
    }

    pub fn theorem1(&self) -> Result<Vec<TheoremReport>> {
        Ok(vec![self.theorem1_critical()?, self.theorem1_supercritical()?])
    }

    /// Per replica `normalized count / (c_* M_t)`; it should concentrate at 1.
    fn concentration(&self, theorem: Theorem, label: &str) -> Result<TheoremReport> {
        let mut report = TheoremReport::new(theorem, self.horizons().to_vec());
        let window = &self.window(label).window;
        let c = self.c_star(label)?;
        report.detail("c_star", c);
        let e = self.ensemble()?;
        let (mut medians, mut iqrs) = (Vec::new(), Vec::new());
        for (j, &t) in self.horizons().iter().enumerate() {
            let counts = self.counts(label, j)?;
            let m = e.martingale(j);
            let scale = self.normalizer(&window.schedule, t);
            let ratios: Vec<f64> = counts.iter().zip(&m).map(|(n, m)| scale * n / (c * m)).collect();
            let med = median(&ratios);
            let spread = iqr(&ratios);
            report.statistics.push(HorizonStat {
                t,
                label: "median_ratio".into(),
                estimate: med,
                stderr: f64::NAN,
                lower: quantile(&ratios, 0.25),
                upper: quantile(&ratios, 0.75),
                reference: Some(1.0),
            });
            report.detail(format!("mean_count_t{t}"), mean_stderr(&counts).0);
            medians.push(med);
            iqrs.push(spread);
        }
        let last = *medians.last().expect("horizons");
        report.check("final_median_ratio", last, "in [0.6, 1.5]", (0.6..=1.5).contains(&last));
        trend_check(&mut report, "iqr_nonincreasing_steps", &iqrs);
        let (first, final_iqr) = (iqrs[0], *iqrs.last().expect("horizons"));
        report.check("final_iqr_below_first", final_iqr / first, "< 1", final_iqr < first);
        let m_final = e.martingale(self.horizons().len() - 1);
        let small = m_final.iter().filter(|&&m| m < 1e-3 * self.h0()).count() as f64 / m_final.len() as f64;
        // Not a check: a replica whose ancestor has not branched by t has M_t <= e^{lambda t} h_max,
        // so this share is bounded below by the no-branch probability, which decays like t^{-1/2}.
        report.detail("share_of_small_martingale", small);
        if let [atom] = self.rate.atoms() {
            if self.x0().x() == atom.position && self.sol.dimension() == 1 {
                report.detail("no_branch_probability", survival_at_atom(atom.weight, self.final_horizon()));
            }
        }
        let pre = self.final_is_pre_asymptotic(&mut report);
        Ok(report.finish(pre))
    }

    pub fn theorem2_subcritical(&self) -> Result<TheoremReport> {
        self.concentration(Theorem::T2Subcritical, SUB)
    }

    /// Critical front shifted by `-sqrt(log t) / k`.
    pub fn theorem2_critical(&self) -> Result<TheoremReport> {
        self.concentration(Theorem::T2Critical, SQRTLOG_DOWN)
    }

    pub fn theorem2(&self) -> Result<Vec<TheoremReport>> {
        Ok(vec![self.theorem2_subcritical()?, self.theorem2_critical()?])
    }

    /// Mixed Poisson law of critical window counts at the final horizon.
    ///
    /// Compares the empirical pmf of the count in `[R(t), R(t)+1)` (all directions) and the joint
    /// pmf of the counts on the two sides against the average over replicas of the Poisson laws
    /// with intensities `c_* M_t`; also checks that the count vanishes when the front is pushed
    /// out by `log t / k`.
    pub fn theorem3(&self) -> Result<TheoremReport> {
        let t = self.final_horizon();
        let j = self.horizons().len() - 1;
        let mut report = TheoremReport::new(Theorem::T3Poisson, vec![t]);
        let spec = EnsembleSpec::new(self.config.simulation()?, self.sol.clone(), self.windows.clone())?;
        spec.check_family(&[PLUS, MINUS])?;
        let m = self.ensemble()?.martingale(j);
        let n = m.len() as f64;

        let single = bin_label(0.0, 1.0);
        let c = self.c_star(&single)?;
        let counts = self.counts(&single, j)?;
        let mut observed = vec![0.0; PMF_TOTAL + 1];
        for &k in &counts {
            if (k as usize) <= PMF_TOTAL {
                observed[k as usize] += 1.0 / n;
            }
        }
        let predicted: Vec<f64> =
            (0..=PMF_TOTAL).map(|k| m.iter().map(|&mi| poisson_pmf(c * mi, k)).sum::<f64>() / n).collect();
        let tv = total_variation(&observed, &predicted);
        report.check("tv_single_window", tv, "<= 0.08", tv <= 0.08);
        for k in 0..=PMF_TOTAL {
            report.statistics.push(HorizonStat {
                t,
                label: format!("pmf_{k}"),
                estimate: observed[k],
                stderr: (observed[k] * (1.0 - observed[k]) / n).sqrt(),
                lower: wilson((observed[k] * n).round() as usize, n as usize, Z95).0,
                upper: wilson((observed[k] * n).round() as usize, n as usize, Z95).1,
                reference: Some(predicted[k]),
            });
        }
        let (mean, se) = mean_stderr(&counts);
        let intensity: Vec<f64> = m.iter().map(|&mi| c * mi).collect();
        let (mean_pred, se_pred) = mean_stderr(&intensity);
        report.detail("mean_count", mean);
        report.detail("mean_intensity", mean_pred);
        report.detail("mean_z", (mean - mean_pred).abs() / se.hypot(se_pred));
        report.detail("c_star_h_x0", c * self.h0());
        let zero_pred: Vec<f64> = m.iter().map(|&mi| (-c * mi).exp()).collect();
        let zero_obs: Vec<f64> = counts.iter().map(|&k| if k == 0.0 { 1.0 } else { 0.0 }).collect();
        let (p0, se0) = mean_stderr(&zero_obs);
        let (q0, seq0) = mean_stderr(&zero_pred);
        report.detail("zero_cell_z", (p0 - q0).abs() / se0.hypot(seq0));

        let (cp, cm) = (self.c_star(PLUS)?, self.c_star(MINUS)?);
        let (plus, minus) = (self.counts(PLUS, j)?, self.counts(MINUS, j)?);
        let (mut obs2, mut pred2) = (Vec::new(), Vec::new());
        for a in 0..=PMF_TOTAL {
            for b in 0..=PMF_TOTAL - a {
                let hits = plus.iter().zip(&minus).filter(|(&x, &y)| x as usize == a && y as usize == b).count();
                obs2.push(hits as f64 / n);
                pred2.push(m.iter().map(|&mi| poisson_pmf(cp * mi, a) * poisson_pmf(cm * mi, b)).sum::<f64>() / n);
            }
        }
        let tv2 = total_variation(&obs2, &pred2);
        report.check("tv_joint_two_sides", tv2, "<= 0.08", tv2 <= 0.08);
        let hist = |xs: &[f64]| {
            let mut h = vec![0u64; PMF_TOTAL + 2];
            for &x in xs {
                h[(x as usize).min(PMF_TOTAL + 1)] += 1;
            }
            h
        };
        let (_, df, p) = chi_square_homogeneity(&hist(&plus), &hist(&minus));
        report.detail("symmetry_df", df as f64);
        if (cp - cm).abs() <= 1e-9 * cp.max(cm) {
            report.check("two_sides_chi_square_p", p, "> 0.01", p > 0.01);
        } else {
            report.note("the two sides have different constants; symmetry test skipped");
        }

        let far = self.counts(LOG_UP, j)?;
        let all_zero = far.iter().filter(|&&k| k == 0.0).count() as f64 / n;
        report.check("zero_share_log_shifted_front", all_zero, ">= 0.95", all_zero >= 0.95);
        let pre = self.final_is_pre_asymptotic(&mut report);
        Ok(report.finish(pre))
    }

    /// Distribution of the maximal displacement on the line with a single atom:
    /// `P(L_t >= delta t + gamma)` against `1 - mean(exp(-c M_t e^{-k gamma}))`.
    pub fn gumbel(&self) -> Result<TheoremReport> {
        if self.sol.dimension() != 1 || self.rate.atoms().len() != 1 {
            return Err(Error::Config("the Gumbel test needs a single atom on the line".into()));
        }
        let t = self.final_horizon();
        let j = self.horizons().len() - 1;
        let mut report = TheoremReport::new(Theorem::GumbelLt, vec![t]);
        let c = compute_c_theta(&self.sol, &self.rate, &DirectionSet::both_signs())?;
        report.detail("c_theta", c);
        let e = self.ensemble()?;
        let (l, m) = (e.max_norm(j), e.martingale(j));
        let n = l.len() as f64;
        let front = self.sol.critical_speed() * t;
        let mut gap = 0.0f64;
        let mut empirical = Vec::new();
        for gamma in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let hits = l.iter().filter(|&&x| x >= front + gamma).count();
            let p = hits as f64 / n;
            let shift = (-self.sol.k() * gamma).exp();
            let q = 1.0 - m.iter().map(|&mi| (-c * mi * shift).exp()).sum::<f64>() / n;
            let (lo, hi) = wilson(hits, l.len(), Z95);
            report.statistics.push(HorizonStat {
                t,
                label: format!("tail_gamma_{gamma}"),
                estimate: p,
                stderr: (p * (1.0 - p) / n).sqrt(),
                lower: lo,
                upper: hi,
                reference: Some(q),
            });
            if gamma <= 2.0 {
                gap = gap.max((p - q).abs());
                empirical.push(p);
            } else {
                report.check("far_tail_both_sides", p.max(q), "< 0.05", p < 0.05 && q < 0.05);
            }
        }
        report.check("max_gap", gap, "<= 0.05", gap <= 0.05);
        let steps = empirical.len() - 1;
        report.check(
            "tail_nonincreasing_steps",
            nonincreasing_steps(&empirical) as f64,
            format!("= {steps}"),
            nonincreasing_steps(&empirical) == steps,
        );
        let pre = self.final_is_pre_asymptotic(&mut report);
        Ok(report.finish(pre))
    }

    /// Regression of the median maximal displacement on `t`.
    pub fn linear_growth(&self) -> Result<TheoremReport> {
        let mut report = TheoremReport::new(Theorem::LinearGrowth, self.horizons().to_vec());
        let e = self.ensemble()?;
        let front = RadiusSchedule::critical(&self.sol, GammaSpec::zero());
        let mut medians = Vec::new();
        for (j, &t) in self.horizons().iter().enumerate() {
            let l = e.max_norm(j);
            let med = median(&l);
            medians.push(med);
            report.statistics.push(HorizonStat {
                t,
                label: "median_max_norm".into(),
                estimate: med,
                stderr: f64::NAN,
                lower: quantile(&l, 0.25),
                upper: quantile(&l, 0.75),
                reference: Some(front.radius_at(&self.sol, t)),
            });
        }
        if self.horizons().len() < 2 {
            report.note("a slope needs at least two horizons");
            return Ok(report.finish(true));
        }
        let fit = linear_regression(self.horizons(), &medians);
        let target = self.sol.critical_speed();
        report.detail("intercept", fit.intercept);
        report.detail("slope_stderr", fit.slope_stderr);
        report.detail("target_slope", target);
        let rel = (fit.slope - target).abs() / target;
        report.check("median_slope", fit.slope, format!("within 10% of {target:.4}"), rel <= 0.10);
        let pre = self.final_is_pre_asymptotic(&mut report);
        Ok(report.finish(pre))
    }

    /// Horizons used by the oracle comparisons: the first three of the ladder.
    pub fn oracle_horizons(&self) -> &[f64] {
        &self.horizons()[..self.horizons().len().min(3)]
    }

    /// Windows compared against the first-moment oracle.
    pub fn first_moment_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = CRITICAL_BINS.iter().map(|&(a, b)| bin_label(a, b)).collect();
        labels.extend([PLUS, MINUS, SUB, SUPER].map(String::from));
        labels
    }

    fn fk_options(&self, stream: u64) -> FkOptions {
        FkOptions::new(self.scheme, mix(self.config.seed, stream))
    }

    /// Feynman-Kac first moments at the oracle horizons; the last column is the whole space.
    fn first_moments(&self) -> Result<&Vec<Vec<MomentEstimate>>> {
        if let Some(v) = self.first_moments.get() {
            return Ok(v);
        }
        let ladder = self.oracle_horizons().to_vec();
        let targets: Vec<Vec<Region>> = ladder
            .iter()
            .map(|&t| {
                let mut row: Vec<Region> =
                    self.first_moment_labels().iter().map(|l| self.window(l).window.region_at(&self.sol, t)).collect();
                row.push(Region::Everywhere);
                row
            })
            .collect();
        let est = many_to_one_ladder(&self.rate, self.x0(), &ladder, &targets, self.config.fk_paths, &self.fk_options(1))?;
        Ok(self.first_moments.get_or_init(|| est))
    }

    /// Branching mean of window counts against the Feynman-Kac first moment, within 3 combined
    /// standard errors.
    pub fn many_to_one_report(&self) -> Result<TheoremReport> {
        let ladder = self.oracle_horizons().to_vec();
        let mut report = TheoremReport::new(Theorem::ManyToOne, ladder.clone());
        let fk = self.first_moments()?;
        let mut worst = 0.0f64;
        for (j, &t) in ladder.iter().enumerate() {
            for (w, label) in self.first_moment_labels().iter().enumerate() {
                let branching = MomentEstimate::from_sample(&self.counts(label, j)?, Method::Branching);
                let oracle = &fk[j][w];
                let z = branching.z_score(oracle);
                worst = worst.max(z);
                report.statistics.push(HorizonStat::normal(t, label.clone(), branching.value, branching.stderr, Some(oracle.value)));
                report.check(format!("{label}@{t}"), z, "|z| <= 3", z <= 3.0);
                for flag in &oracle.flags {
                    report.note(format!("{label}@{t}: oracle flag {flag}"));
                }
            }
        }
        report.detail("max_z", worst);
        Ok(report.finish(false))
    }

    /// Windows compared against the second-moment oracle; `None` is the whole space.
    fn second_moment_targets(&self) -> Vec<(String, Option<String>)> {
        vec![
            ("everywhere".into(), None),
            (bin_label(0.0, 1.0), Some(bin_label(0.0, 1.0))),
            (bin_label(-2.0, -1.0), Some(bin_label(-2.0, -1.0))),
        ]
    }

    /// Second moments at the first two oracle horizons: `(t, label, branching, oracle)`.
    fn second_moments(&self) -> Result<Vec<(f64, String, MomentEstimate, MomentEstimate)>> {
        let ladder: Vec<f64> = self.oracle_horizons().iter().take(2).copied().collect();
        let e = self.ensemble()?;
        let mut out = Vec::new();
        for (j, &t) in ladder.iter().enumerate() {
            let opts = SecondMomentOptions::new(self.fk_options(2 + j as u64)).with_stops(self.horizons().to_vec());
            for (label, window) in self.second_moment_targets() {
                let (region, sample) = match &window {
                    None => (Region::Everywhere, e.population(j)),
                    Some(l) => (self.window(l).window.region_at(&self.sol, t), self.counts(l, j)?),
                };
                let squares: Vec<f64> = sample.iter().map(|x| x * x).collect();
                let branching = MomentEstimate::from_sample(&squares, Method::Branching);
                let oracle = many_to_two(&self.rate, self.x0(), t, &region, &region, self.config.fk_paths, &opts)?;
                out.push((t, label, branching, oracle));
            }
        }
        Ok(out)
    }

    /// Branching mean of squared counts against the Feynman-Kac second moment, within 3
    /// combined standard errors.
    pub fn many_to_two_report(&self) -> Result<TheoremReport> {
        Ok(self.second_moment_reports()?.0.clone())
    }

    /// `E[N]^2 / E[N^2] <= P(N > 0) <= E[N]` with the moments from the oracles and `P(N > 0)`
    /// from the ensemble, with 3 sigma slack.
    pub fn paley_zygmund_report(&self) -> Result<TheoremReport> {
        Ok(self.second_moment_reports()?.1.clone())
    }

    fn second_moment_reports(&self) -> Result<&(TheoremReport, TheoremReport)> {
        if let Some(r) = self.second_moments.get() {
            return Ok(r);
        }
        let ladder: Vec<f64> = self.oracle_horizons().iter().take(2).copied().collect();
        let mut second = TheoremReport::new(Theorem::ManyToTwo, ladder.clone());
        let mut pz = TheoremReport::new(Theorem::PaleyZygmund, ladder.clone());
        let first = self.first_moments()?;
        let labels = self.first_moment_labels();
        let e = self.ensemble()?;
        for (t, label, branching, oracle) in self.second_moments()? {
            let j = ladder.iter().position(|&s| s == t).expect("ladder");
            let z = branching.z_score(&oracle);
            second.statistics.push(HorizonStat::normal(t, label.clone(), branching.value, branching.stderr, Some(oracle.value)));
            second.check(format!("{label}@{t}"), z, "|z| <= 3", z <= 3.0);
            for flag in &oracle.flags {
                second.note(format!("{label}@{t}: oracle flag {flag}"));
            }

            let column = labels.iter().position(|l| *l == label).unwrap_or(labels.len());
            let m1 = &first[j][column];
            let sample = if column == labels.len() { e.population(j) } else { self.counts(&label, j)? };
            let alive: Vec<f64> = sample.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
            let (p, se_p) = mean_stderr(&alive);
            let (lower, se_lower) = if m1.value > 0.0 && oracle.value > 0.0 {
                let lower = m1.value * m1.value / oracle.value;
                let rel = (2.0 * m1.stderr / m1.value).hypot(oracle.stderr / oracle.value);
                (lower, lower * rel)
            } else {
                (0.0, 0.0)
            };
            let z_lower = excess_z(lower - p, se_lower.hypot(se_p));
            let z_upper = excess_z(p - m1.value, m1.stderr.hypot(se_p));
            pz.statistics.push(HorizonStat::normal(t, label.clone(), p, se_p, None));
            pz.detail(format!("{label}@{t}:lower"), lower);
            pz.detail(format!("{label}@{t}:upper"), m1.value);
            pz.check(format!("{label}@{t}:lower"), z_lower, "excess in se <= 3", z_lower <= 3.0);
            pz.check(format!("{label}@{t}:upper"), z_upper, "excess in se <= 3", z_upper <= 3.0);
        }
        Ok(self.second_moments.get_or_init(|| (second.finish(false), pz.finish(false))))
    }

    /// `E[M_t] = h(x0)` at every horizon.
    pub fn martingale_report(&self) -> Result<TheoremReport> {
        let mut report = TheoremReport::new(Theorem::Martingale, self.horizons().to_vec());
        let e = self.ensemble()?;
        let h0 = self.h0();
        for (j, &t) in self.horizons().iter().enumerate() {
            let (mean, se) = mean_stderr(&e.martingale(j));
            let z = (mean - h0).abs() / se;
            report.statistics.push(HorizonStat::normal(t, "martingale_mean", mean, se, Some(h0)));
            report.check(format!("mean@{t}"), z, "|z| <= 3", z <= 3.0);
        }
        Ok(report.finish(false))
    }

    /// The identity-based checks: first and second moments, martingale mean, Paley-Zygmund.
    pub fn consistency(&self) -> Result<Vec<TheoremReport>> {
        Ok(vec![
            self.many_to_one_report()?,
            self.many_to_two_report()?,
            self.martingale_report()?,
            self.paley_zygmund_report()?,
        ])
    }

    /// Bias of the band scheme's survival probability at the atom against the closed form, along
    /// [`SWEEP_LEVELS`].
    pub fn sampler_convergence(&self, n_paths: usize) -> Result<TheoremReport> {
        let atoms = self.rate.atoms();
        if self.sol.dimension() != 1 || atoms.len() != 1 {
            return Err(Error::Config("the sampler sweep needs a single atom on the line".into()));
        }
        let atom = atoms[0];
        let mut report = TheoremReport::new(Theorem::SamplerConvergence, vec![SWEEP_HORIZON]);
        let exact = survival_at_atom(atom.weight, SWEEP_HORIZON);
        report.detail("exact", exact);
        let schemes: Vec<StepScheme> = SWEEP_LEVELS.iter().map(|&(dt, eps)| StepScheme::euler(dt, eps)).collect();
        let sweep = survival_sweep(
            &self.rate,
            Point::on_line(atom.position),
            SWEEP_HORIZON,
            &schemes,
            n_paths,
            mix(self.config.seed, 7),
        )?;
        let mut biases = Vec::new();
        for (level, point) in sweep.iter().enumerate() {
            let bias = (point.survival - exact).abs();
            biases.push(bias);
            report.statistics.push(HorizonStat::normal(
                SWEEP_HORIZON,
                format!("dt={},eps={}", point.scheme.dt, point.scheme.band_epsilon),
                point.survival,
                point.stderr,
                Some(exact),
            ));
            report.detail(format!("abs_bias_level_{level}"), bias);
        }
        let decreasing = biases.windows(2).all(|w| w[1] < w[0]);
        report.check("bias_decreasing", decreasing as u8 as f64, "= 1", decreasing);
        let rel = biases.last().expect("levels") / exact;
        report.check("final_relative_bias", rel, "< 0.01", rel < 0.01);
        Ok(report.finish(false))
    }

    /// Every test that applies to this configuration.
    pub fn all(&self, sweep_paths: usize) -> Result<Vec<TheoremReport>> {
        let mut out = self.theorem1()?;
        out.extend(self.theorem2()?);
        out.push(self.theorem3()?);
        let single_atom = self.sol.dimension() == 1 && self.rate.atoms().len() == 1;
        if single_atom {
            out.push(self.gumbel()?);
        }
        out.push(self.linear_growth()?);
        out.extend(self.consistency()?);
        if single_atom {
            out.push(self.sampler_convergence(sweep_paths)?);
        }
        Ok(out)
    }
}

/// Passes when `xs` is nonincreasing in at least two thirds of its steps.
fn trend_check(report: &mut TheoremReport, name: &str, xs: &[f64]) {
    let steps = xs.len().saturating_sub(1);
    let needed = (2 * steps).div_ceil(3);
    let got = nonincreasing_steps(xs);
    report.check(name, got as f64, format!(">= {needed} of {steps}"), got >= needed);
}

/// One-sided excess in standard errors: 0 when `diff <= 0`.
fn excess_z(diff: f64, se: f64) -> f64 {
    if diff <= 0.0 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    }
}

fn poisson_pmf(mean: f64, k: usize) -> f64 {
    if mean <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k as u64)).exp()
}

/// The windows every suite tracks: critical radial bins, the two sides, a subcritical and a
/// supercritical speed, and the critical front shifted up by `log t / k` and down by
/// `sqrt(log t) / k`.
pub fn standard_windows(sol: &SpectralSolution) -> Result<Vec<NamedWindow>> {
    let d = sol.dimension();
    let (all, plus, minus) = if d == 1 {
        (DirectionSet::both_signs(), DirectionSet::plus(), DirectionSet::minus())
    } else {
        (
            DirectionSet::full_circle(),
            DirectionSet::Arcs(vec![Arc::new(0.0, PI)?]),
            DirectionSet::Arcs(vec![Arc::new(PI, 2.0 * PI)?]),
        )
    };
    let critical = RadiusSchedule::critical(sol, GammaSpec::zero());
    let speed = sol.critical_speed();
    let named = |label: String, r1: f64, r2: f64, theta: DirectionSet, schedule: RadiusSchedule| -> Result<NamedWindow> {
        Ok(NamedWindow { label, window: FrontierWindow::new(r1, r2, theta, schedule)? })
    };
    let mut out = Vec::new();
    for (a, b) in CRITICAL_BINS {
        out.push(named(bin_label(a, b), a, b, all.clone(), critical.clone())?);
    }
    out.push(named(PLUS.into(), 0.0, 1.0, plus, critical.clone())?);
    out.push(named(MINUS.into(), 0.0, 1.0, minus, critical)?);
    let at = |factor: f64| RadiusSchedule::with_speed(factor * speed, GammaSpec::zero(), d);
    out.push(named(SUB.into(), 0.0, 1.0, all.clone(), at(SUBCRITICAL_FACTOR))?);
    out.push(named(SUPER.into(), 0.0, 1.0, all.clone(), at(SUPERCRITICAL_FACTOR))?);
    let up = GammaSpec::ToInfinity { law: GrowthLaw::Log, coefficient: 1.0 };
    out.push(named(LOG_UP.into(), 0.0, 1.0, all.clone(), RadiusSchedule::critical(sol, up))?);
    let down = GammaSpec::ToMinusInfinity { law: GrowthLaw::SqrtLog, coefficient: 1.0 };
    out.push(named(SQRTLOG_DOWN.into(), 0.0, 1.0, all, RadiusSchedule::critical(sol, down))?);
    Ok(out)
}
