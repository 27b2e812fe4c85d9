//! `E_x[Z_t(f) Z_t(g)]`: the diagonal term `E_x[exp((Q-1) A_t) (fg)(B_t)]` plus the
//! interaction term `E_x[ int_0^t exp((Q-1) A_s) m_f(B_s, t-s) m_g(B_s, t-s) dA_s^{R mu} ]`,
//! where `m_f(z, u) = E_z[Z_u(f)]`.
//!
//! `m_f` is only needed on the support of the catalyst. It is tabulated on a time grid for each
//! support point (a single point for the circle, by rotation invariance) and interpolated
//! linearly in `log m`. The Monte Carlo error of the table is carried into the reported
//! standard error by the delta method.

use rand::Rng;
use rayon::prelude::*;

use super::first::{importance_estimate, AtomImportance};
use super::{product_region, FkOptions, LogSum, Method, MomentEstimate, FLAG_MEMO_RESOLUTION};
use crate::error::{Error, Result};
use crate::geometry::{Point, Region};
use crate::paths::{advance_euler_traced, sample_hitting_time, PathState, SchemeKind, Segment};
use crate::rng::{mix, task_stream};
use crate::special::{erfc, erfc_inv};
use crate::spectral::{BranchingRate, Geometry};

#[derive(Clone, Debug, PartialEq)]
pub struct SecondMomentOptions {
    pub fk: FkOptions,
    /// Points of the memo time grid on `[0, t]`.
    pub memo_points: usize,
    /// Samples per memo entry.
    pub memo_samples: usize,
    /// Strata per unit of local time for a single atom.
    pub strata_per_unit: usize,
    /// Observation times the paths must stop at, as in the engine run being compared against.
    pub stops: Vec<f64>,
}

impl SecondMomentOptions {
    pub fn new(fk: FkOptions) -> Self {
        SecondMomentOptions { fk, memo_points: 256, memo_samples: 4000, strata_per_unit: 64, stops: Vec::new() }
    }

    pub fn with_stops(mut self, stops: Vec<f64>) -> Self {
        self.stops = stops;
        self
    }
}

/// `m(u)` on the grid `u_k = k t / (points - 1)`.
#[derive(Clone, Debug)]
struct Memo {
    step: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
}

/// Interpolated value and its sensitivities to the two surrounding grid values.
#[derive(Clone, Copy, Debug)]
struct Lookup {
    value: f64,
    index: usize,
    d_lo: f64,
    d_hi: f64,
}

impl Memo {
    fn lookup(&self, u: f64) -> Lookup {
        let last = self.values.len() - 1;
        let x = (u / self.step).clamp(0.0, last as f64);
        let index = (x.floor() as usize).min(last - 1);
        let a = x - index as f64;
        let (lo, hi) = (self.values[index], self.values[index + 1]);
        if lo > 0.0 && hi > 0.0 {
            let value = (lo.ln() * (1.0 - a) + hi.ln() * a).exp();
            Lookup { value, index, d_lo: (1.0 - a) * value / lo, d_hi: a * value / hi }
        } else {
            Lookup { value: (1.0 - a) * lo + a * hi, index, d_lo: 1.0 - a, d_hi: a }
        }
    }

    fn coarse(&self, index: usize) -> bool {
        let (lo, hi) = (self.values[index], self.values[index + 1]);
        let (small, big) = if lo < hi { (lo, hi) } else { (hi, lo) };
        big > 2.0 * small
    }
}

/// Running totals of the interaction term.
#[derive(Clone, Debug)]
struct Tally {
    sum: f64,
    var: f64,
    /// `d(total) / d(memo value)`, per memo table and grid point.
    grad: Vec<Vec<f64>>,
    /// Contribution to the total falling into each memo interval.
    by_interval: Vec<f64>,
}

impl Tally {
    fn new(tables: usize, points: usize) -> Self {
        Tally { sum: 0.0, var: 0.0, grad: vec![vec![0.0; points]; tables], by_interval: vec![0.0; points] }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.sum += other.sum;
        self.var += other.var;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.by_interval.iter_mut().zip(&other.by_interval) {
            *x += y;
        }
        self
    }

    /// Records `scale * m_f(u) m_g(u)` with weight `share` in the total.
    fn charge(&mut self, memos: &[&Memo; 2], tables: [usize; 2], u: f64, scale: f64, share: f64) -> f64 {
        let lf = memos[0].lookup(u);
        let lg = memos[1].lookup(u);
        let v = scale * lf.value * lg.value;
        let w = share * scale;
        self.grad[tables[0]][lf.index] += w * lf.d_lo * lg.value;
        self.grad[tables[0]][lf.index + 1] += w * lf.d_hi * lg.value;
        self.grad[tables[1]][lg.index] += w * lg.d_lo * lf.value;
        self.grad[tables[1]][lg.index + 1] += w * lg.d_hi * lf.value;
        self.by_interval[lf.index] += share * v;
        v
    }
}

/// `lim_{u -> 0+} P_p(B_u in region)`: the share of directions around `p` that point into the
/// region. The memo starts from this limit rather than the indicator at `p`, which differs from
/// it when `p` lies on the boundary.
fn right_limit(region: &Region, p: &Point, dimension: u8) -> f64 {
    let eps = 1e-9 * (1.0 + p.norm());
    if dimension == 1 {
        return 0.5 * (region.indicator(&Point::on_line(p.x() + eps)) + region.indicator(&Point::on_line(p.x() - eps)));
    }
    const DIRECTIONS: usize = 256;
    (0..DIRECTIONS)
        .map(|i| {
            let phi = (i as f64 + 0.5) * std::f64::consts::TAU / DIRECTIONS as f64;
            region.indicator(&Point::new(p.x() + eps * phi.cos(), p.y() + eps * phi.sin()))
        })
        .sum::<f64>()
        / DIRECTIONS as f64
}

fn memo_error(tally: &Tally, memos: &[Memo]) -> f64 {
    tally
        .grad
        .iter()
        .zip(memos)
        .map(|(g, m)| g.iter().zip(&m.errors).map(|(d, e)| (d * e).powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

fn resolution_ok(tally: &Tally, memos: &[Memo]) -> bool {
    let total: f64 = tally.by_interval.iter().sum();
    if total <= 0.0 {
        return true;
    }
    tally
        .by_interval
        .iter()
        .enumerate()
        .filter(|(k, _)| *k + 1 < memos[0].values.len())
        .all(|(k, &c)| c <= 0.01 * total || memos.iter().all(|m| !m.coarse(k)))
}

fn check_options(t: f64, n: usize, opts: &SecondMomentOptions) -> Result<()> {
    if opts.memo_points < 2 {
        return Err(Error::MemoResolution("the time grid needs at least two points".into()));
    }
    if opts.memo_samples < 2 || n < 2 || opts.strata_per_unit == 0 {
        return Err(Error::Config("sample sizes must be at least 2".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("horizon {t} must be finite and nonnegative")));
    }
    Ok(())
}

/// Estimates `E_{x0}[Z_t(1_f) Z_t(1_g)]`.
///
/// A single atom on the line with the exact scheme uses the exact law of the local time: the
/// `dA` integral is written in local-time scale, split into `strata_per_unit` strata per unit,
/// and within a stratum the inverse local time is drawn conditionally on falling before `t`.
/// With the band scheme the integral is sampled along discretized paths, one uniform point per
/// stretch spent in a band, with `m` read at the nearest support point.
pub fn many_to_two(
    rate: &BranchingRate,
    x0: Point,
    t: f64,
    f: &Region,
    g: &Region,
    n: usize,
    opts: &SecondMomentOptions,
) -> Result<MomentEstimate> {
    check_options(t, n, opts)?;
    opts.fk.scheme.validate(rate)?;
    let fg = product_region(f, g)?;
    let stops: Vec<f64> = opts.stops.iter().copied().filter(|&s| s > 0.0 && s < t).chain([t]).collect();
    if rate.is_zero() || rate.r() == 0.0 || t == 0.0 {
        let mut d = super::many_to_one_ladder(rate, x0, &stops, &with_last(&stops, fg), n, &opts.fk)?;
        return Ok(d.pop().and_then(|mut r| r.pop()).expect("one horizon"));
    }
    match opts.fk.scheme.kind {
        SchemeKind::Exact => single_atom(rate, x0, t, f, g, &fg, n, opts),
        SchemeKind::EulerBand => band_paths(rate, x0, &stops, f, g, &fg, n, opts),
    }
}

fn with_last(stops: &[f64], region: Region) -> Vec<Vec<Region>> {
    let mut targets = vec![Vec::new(); stops.len()];
    targets[stops.len() - 1].push(region);
    targets
}

#[allow(clippy::too_many_arguments)]
fn single_atom(
    rate: &BranchingRate,
    x0: Point,
    t: f64,
    f: &Region,
    g: &Region,
    fg: &Region,
    n: usize,
    opts: &SecondMomentOptions,
) -> Result<MomentEstimate> {
    let atom = rate.atoms()[0];
    let (z, w) = (atom.position, atom.weight);
    let theta = rate.excess_mean() * w;
    let seed = opts.fk.seed;
    let diagonal = importance_estimate(rate, x0.x(), t, fg, n, seed, u64::MAX >> 24)?;

    let step = t / (opts.memo_points - 1) as f64;
    let tabulate = |region: &Region, label: &str| -> Memo {
        let sampler = AtomImportance::new(z, theta, region);
        let rows: Vec<(f64, f64)> = (0..opts.memo_points)
            .into_par_iter()
            .map(|k| {
                let u = k as f64 * step;
                if k == 0 {
                    return (right_limit(region, &Point::on_line(z), 1), 0.0);
                }
                let mut rng = task_stream(seed, label, k as u64);
                let mut acc = LogSum::default();
                for _ in 0..opts.memo_samples {
                    acc.push(sampler.log_weight_from_atom(u, &mut rng));
                }
                let e = acc.finish(Method::FeynmanKac);
                (e.value, e.stderr)
            })
            .collect();
        Memo { step, values: rows.iter().map(|r| r.0).collect(), errors: rows.iter().map(|r| r.1).collect() }
    };
    let memo_f = tabulate(f, "m2-memo-f");
    let memo_g = if f == g { memo_f.clone() } else { tabulate(g, "m2-memo-g") };
    let memos = [memo_f, memo_g];
    let tables = if f == g { [0, 0] } else { [0, 1] };

    let spu = opts.strata_per_unit as f64;
    let ell_max = theta * t + 8.0 * t.sqrt() + 1.0;
    let n_strata = (ell_max * spu).ceil() as usize;
    let per = n.div_ceil(n_strata).max(2);
    let factor = rate.r() * w;
    let offset = x0.x() - z;
    let refs = [&memos[0], &memos[1]];
    let tally = (0..n_strata)
        .into_par_iter()
        .fold(
            || Tally::new(2, opts.memo_points),
            |mut tally, j| {
                let mut rng = task_stream(seed, "m2-strata", j as u64);
                let mut values = Vec::with_capacity(per);
                let mut local = Tally::new(2, opts.memo_points);
                for _ in 0..per {
                    let ell = (j as f64 + rng.random::<f64>()) / spu;
                    let budget = if offset != 0.0 {
                        let hit = sample_hitting_time(offset.abs(), &mut rng);
                        t - hit
                    } else {
                        t
                    };
                    if budget <= 0.0 {
                        values.push(0.0);
                        continue;
                    }
                    let c = ell / budget.sqrt();
                    let tail = erfc(c / std::f64::consts::SQRT_2);
                    if tail <= 0.0 {
                        values.push(0.0);
                        continue;
                    }
                    // |Z| conditioned on |Z| > c, so that tau = ell^2 / Z^2 < budget
                    let zabs = std::f64::consts::SQRT_2 * erfc_inv(rng.random::<f64>() * tail);
                    let tau = if zabs > 0.0 { (ell / zabs).powi(2).min(budget) } else { budget };
                    let scale = factor * (theta * ell).exp() * tail / spu;
                    values.push(local.charge(&refs, tables, budget - tau, scale, 1.0 / per as f64));
                }
                let mean = values.iter().sum::<f64>() / per as f64;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (per - 1) as f64;
                local.sum = mean;
                local.var = var / per as f64;
                tally = tally.merge(local);
                tally
            },
        )
        .reduce(|| Tally::new(2, opts.memo_points), Tally::merge);

    let memo_se = memo_error(&tally, &memos);
    let mut est = MomentEstimate {
        value: diagonal.value + tally.sum,
        stderr: (diagonal.stderr.powi(2) + tally.var + memo_se.powi(2)).sqrt(),
        n_samples: n + n_strata * per,
        method: Method::FeynmanKac,
        flags: diagonal.flags.clone(),
    };
    if !resolution_ok(&tally, &memos) {
        est.flag(FLAG_MEMO_RESOLUTION);
    }
    Ok(est)
}

/// Support points at which `m` is tabulated, and the index of the one nearest to `x`.
fn support(rate: &BranchingRate, f: &Region, g: &Region) -> Result<Vec<Point>> {
    match rate.geometry() {
        Geometry::Atoms(atoms) => Ok(atoms.iter().map(|a| Point::on_line(a.position)).collect()),
        Geometry::Circle { radius, .. } => {
            if !(f.is_rotation_invariant() && g.is_rotation_invariant()) {
                return Err(Error::Config("the circle catalyst needs rotation-invariant windows".into()));
            }
            Ok(vec![Point::new(*radius, 0.0)])
        }
    }
}

fn nearest(points: &[Point], x: &Point) -> usize {
    // a single point stands for the whole circle
    if points.len() == 1 {
        return 0;
    }
    let d = |i: &usize| points[*i].distance(x);
    (0..points.len()).min_by(|a, b| d(a).total_cmp(&d(b))).unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn band_paths(
    rate: &BranchingRate,
    x0: Point,
    stops: &[f64],
    f: &Region,
    g: &Region,
    fg: &Region,
    n: usize,
    opts: &SecondMomentOptions,
) -> Result<MomentEstimate> {
    let t = *stops.last().expect("nonempty");
    let scheme = opts.fk.scheme;
    let seed = opts.fk.seed;
    let excess = rate.excess_mean();
    let points = support(rate, f, g)?;
    let step = t / (opts.memo_points - 1) as f64;
    let grid: Vec<f64> = (1..opts.memo_points).map(|k| k as f64 * step).collect();

    let tabulate = |region: &Region, first_table: usize| -> Result<Vec<Memo>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let targets: Vec<Vec<Region>> = grid.iter().map(|_| vec![region.clone()]).collect();
                let fk = FkOptions { seed: mix(seed, (first_table + i + 1) as u64), ..opts.fk };
                let est = super::many_to_one_ladder(rate, *p, &grid, &targets, opts.memo_samples, &fk)?;
                let mut values = vec![right_limit(region, p, rate.dimension())];
                let mut errors = vec![0.0];
                for row in est {
                    values.push(row[0].value);
                    errors.push(row[0].stderr);
                }
                Ok(Memo { step, values, errors })
            })
            .collect()
    };
    let mut memos = tabulate(f, 0)?;
    let n_points = points.len();
    let same = f == g;
    if !same {
        memos.extend(tabulate(g, n_points)?);
    }

    let chunks = n.div_ceil(1024);
    let results: Vec<(Vec<f64>, Tally)> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(Vec<f64>, Tally)> {
            let mut rng = task_stream(seed, "m2-band", c as u64);
            let count = 1024.min(n - c * 1024);
            let mut tally = Tally::new(memos.len(), opts.memo_points);
            let mut logs = Vec::with_capacity(count);
            for _ in 0..count {
                let mut state = PathState::unkilled(x0, 0.0);
                let mut interaction = 0.0;
                let mut segments: Vec<Segment> = Vec::new();
                for &s in stops {
                    advance_euler_traced(&mut state, s, rate, &scheme, &mut rng, |seg| segments.push(seg));
                }
                for seg in segments.drain(..) {
                    let s = seg.start + rng.random::<f64>() * (seg.end - seg.start);
                    let pcaf = seg.pcaf_at_start + seg.rate * (s - seg.start);
                    let scale = rate.r() * seg.rate * (seg.end - seg.start) * (excess * pcaf).exp();
                    let i = nearest(&points, &seg.position);
                    let tables = if same { [i, i] } else { [i, n_points + i] };
                    let refs = [&memos[tables[0]], &memos[tables[1]]];
                    interaction += tally.charge(&refs, tables, t - s, scale, 1.0 / n as f64);
                }
                let diagonal = if fg.contains(&state.position) { (excess * state.pcaf).exp() } else { 0.0 };
                logs.push((diagonal + interaction).ln());
            }
            Ok((logs, tally))
        })
        .collect::<Result<_>>()?;

    let mut sum = LogSum::default();
    let mut tally = Tally::new(memos.len(), opts.memo_points);
    for (logs, part) in results {
        for l in logs {
            sum.push(l);
        }
        tally = tally.merge(part);
    }
    let mut est = sum.finish(Method::FeynmanKac);
    let memo_se = memo_error(&tally, &memos);
    est.stderr = est.stderr.hypot(memo_se);
    est.n_samples = n;
    if !resolution_ok(&tally, &memos) {
        est.flag(FLAG_MEMO_RESOLUTION);
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DirectionSet;
    use crate::paths::StepScheme;
    use crate::special::{adaptive_simpson, normal_cdf};
    use std::f64::consts::PI;

    fn opts(scheme: StepScheme, seed: u64) -> SecondMomentOptions {
        SecondMomentOptions::new(FkOptions::new(scheme, seed))
    }

    /// `E_0[N_t^2]` for one atom of weight 1 and binary branching, by quadrature: with
    /// `m(u) = 2 e^{u/2} Phi(sqrt u)` and `tau_l = l^2 / Z^2`,
    /// `E[N_t^2] = m(t) + 2 int_0^inf e^l E[m(t - tau_l)^2; tau_l < t] dl`.
    fn second_moment_oracle(t: f64) -> f64 {
        let m = |u: f64| 2.0 * (u / 2.0).exp() * normal_cdf(u.max(0.0).sqrt());
        let outer = |l: f64| {
            let lo = l / t.sqrt();
            let inner = |z: f64| {
                let tau = if z > 0.0 { (l / z).powi(2) } else { t };
                (2.0 / PI).sqrt() * (-z * z / 2.0).exp() * m(t - tau).powi(2)
            };
            l.exp() * adaptive_simpson(&inner, lo, lo + 12.0, 1e-11)
        };
        m(t) + 2.0 * adaptive_simpson(&outer, 0.0, t + 10.0 * t.sqrt() + 5.0, 1e-9)
    }

    #[test]
    fn memo_starts_from_the_right_limit() {
        let shell = |inner: f64, outer: f64, dirs: DirectionSet| Region::Shell { inner, outer, dirs };
        let at = Point::ORIGIN;
        assert_eq!(right_limit(&shell(0.0, 0.0, DirectionSet::both_signs()), &at, 1), 0.0);
        assert_eq!(right_limit(&shell(0.0, 1.0, DirectionSet::both_signs()), &at, 1), 1.0);
        assert_eq!(right_limit(&shell(0.0, 1.0, DirectionSet::plus()), &at, 1), 0.5);
        let on_circle = Point::new(1.0, 0.0);
        assert_eq!(right_limit(&shell(1.0, 2.0, DirectionSet::full_circle()), &on_circle, 2), 0.5);

        // a window that has shrunk to the atom itself holds no particles
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let point = shell(0.0, 0.0, DirectionSet::both_signs());
        let est = many_to_two(&rate, Point::ORIGIN, 2.0, &point, &point, 2000, &opts(StepScheme::exact(), 3)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn zero_measure_second_moment_is_one() {
        let rate = BranchingRate::zero(1).unwrap();
        let est = many_to_two(
            &rate,
            Point::ORIGIN,
            3.0,
            &Region::Everywhere,
            &Region::Everywhere,
            100,
            &opts(StepScheme::exact(), 1),
        )
        .unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn single_atom_total_population_matches_quadrature() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        for t in [1.0, 3.0] {
            let oracle = second_moment_oracle(t);
            let est = many_to_two(
                &rate,
                Point::ORIGIN,
                t,
                &Region::Everywhere,
                &Region::Everywhere,
                50_000,
                &opts(StepScheme::exact(), 2),
            )
            .unwrap();
            assert!((est.value - oracle).abs() < 4.0 * est.stderr, "t={t}: {est:?} vs {oracle}");
            assert!(est.stderr < 0.02 * oracle);
            assert!(!est.has_flag(FLAG_MEMO_RESOLUTION));
        }
    }

    #[test]
    fn second_moment_dominates_first() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let w = Region::Shell { inner: 2.0, outer: 3.0, dirs: DirectionSet::both_signs() };
        let o = opts(StepScheme::exact(), 3);
        let second = many_to_two(&rate, Point::ORIGIN, 6.0, &w, &w, 20_000, &o).unwrap();
        let first = super::super::many_to_one(&rate, Point::ORIGIN, 6.0, &w, 20_000, &o.fk).unwrap();
        assert!(second.value + 3.0 * second.stderr >= first.value - 3.0 * first.stderr);
        assert!(second.value > first.value);
    }

    #[test]
    fn band_route_is_close_to_exact_route() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
        let e = Region::Everywhere;
        let exact = many_to_two(&rate, Point::ORIGIN, 1.0, &e, &e, 20_000, &opts(StepScheme::exact(), 4)).unwrap();
        let mut o = opts(StepScheme::euler(1e-4, 3e-3), 5);
        o.memo_samples = 2000;
        let band = many_to_two(&rate, Point::ORIGIN, 1.0, &e, &e, 20_000, &o).unwrap();
        let rel = (band.value - exact.value).abs() / exact.value;
        assert!(rel < 0.04 + 3.0 * band.stderr.hypot(exact.stderr) / exact.value, "{band:?} {exact:?}");
    }

    #[test]
    fn circle_needs_rotation_invariant_windows() {
        let rate = BranchingRate::circle_2d(1.0, 1.0).unwrap();
        let half = Region::Shell {
            inner: 0.0,
            outer: 1.0,
            dirs: DirectionSet::Arcs(vec![crate::geometry::Arc::new(0.0, 1.0).unwrap()]),
        };
        let o = opts(StepScheme::euler(1e-3, 1e-2), 6);
        assert!(many_to_two(&rate, Point::ORIGIN, 1.0, &half, &half, 10, &o).is_err());
        let mut tiny = o.clone();
        tiny.memo_points = 1;
        assert!(matches!(
            many_to_two(&rate, Point::ORIGIN, 1.0, &Region::Everywhere, &Region::Everywhere, 10, &tiny),
            Err(Error::MemoResolution(_))
        ));
    }
}
