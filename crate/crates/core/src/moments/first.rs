//! `E_x[Z_t(f)] = E_x[exp((Q-1) A_t) f(B_t)]`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{FkOptions, LogSum, Method, MomentEstimate, Sampler};
use crate::error::{Error, Result};
use crate::geometry::{DirectionSet, Point, Region};
use crate::paths::{advance, sample_avoiding_endpoint, sample_hitting_time, PathState, SchemeKind};
use crate::rng::{task_stream, StreamRng};
use crate::special::normal_cdf;
use crate::spectral::BranchingRate;

const CHUNK: usize = 4096;
/// Probability of drawing `|B|` from the uniform component when the window is reachable.
const UNIFORM_SHARE: f64 = 0.5;

/// Importance sampler for one window and a single atom of effective strength `theta`.
///
/// From the atom, `m = l_u + |B_u|` has density `∝ m^2 exp(-m^2/2u)` and `|B_u|` is uniform on
/// `(0, m)` given `m`. Against the weight `exp(theta l_u)` the proposal draws `m` from
/// `N(theta u, u)` restricted to `m > 0`, then `|B_u|` from a mixture of the density
/// `∝ exp(-theta b)` on `(0, m)` and the uniform law on the part of `(0, m)` that lands in the
/// window.
#[derive(Clone, Debug)]
pub(crate) struct AtomImportance {
    z: f64,
    theta: f64,
    region: Region,
    /// `(sign, lo, hi)`: the displacements `z + sign b`, `b in [lo, hi]`, that hit the region.
    slices: Vec<(f64, f64, f64)>,
}

impl AtomImportance {
    pub(crate) fn new(z: f64, theta: f64, region: &Region) -> Self {
        let all = vec![(1.0, 0.0, f64::INFINITY), (-1.0, 0.0, f64::INFINITY)];
        let slices = match region {
            Region::Everywhere => all,
            Region::Shell { inner, outer, dirs: DirectionSet::Signs { plus, minus } } => {
                let mut out = Vec::new();
                let mut add = |sign: f64, lo: f64, hi: f64| {
                    let lo = lo.max(0.0);
                    if hi > lo {
                        out.push((sign, lo, hi));
                    }
                };
                if *plus {
                    add(1.0, inner - z, outer - z);
                    add(-1.0, z - outer, z - inner);
                }
                if *minus {
                    add(1.0, -outer - z, -inner - z);
                    add(-1.0, z + inner, z + outer);
                }
                out
            }
            Region::Shell { .. } => all,
        };
        AtomImportance { z, theta, region: region.clone(), slices }
    }

    fn reachable(&self, m: f64) -> f64 {
        self.slices.iter().map(|&(_, lo, hi)| (hi.min(m) - lo).max(0.0)).sum()
    }

    fn in_slices(&self, sign: f64, b: f64, m: f64) -> bool {
        b < m && self.slices.iter().any(|&(s, lo, hi)| s == sign && b >= lo && b <= hi)
    }

    /// Log-weight of one draw for a path that starts on the atom and runs for `u`.
    pub(crate) fn log_weight_from_atom(&self, u: f64, rng: &mut StreamRng) -> f64 {
        if u <= 0.0 {
            return if self.region.contains(&Point::on_line(self.z)) { 0.0 } else { f64::NEG_INFINITY };
        }
        let theta = self.theta;
        let su = u.sqrt();
        let m = loop {
            let g: f64 = rng.sample(StandardNormal);
            let m = theta * u + su * g;
            if m > 0.0 {
                break m;
            }
        };
        let head = (m / u).ln() + 0.5 * theta * theta * u + normal_cdf(theta * su).ln();
        let reach = self.reachable(m);
        let tilt_share = if reach > 0.0 { 1.0 - UNIFORM_SHARE } else { 1.0 };
        let tilt_mass = -(-theta * m).exp_m1();
        let (sign, b) = if rng.random::<f64>() < tilt_share {
            let b = -(-rng.random::<f64>() * tilt_mass).ln_1p() / theta;
            (if rng.random::<bool>() { 1.0 } else { -1.0 }, b.min(m))
        } else {
            let mut pick = rng.random::<f64>() * reach;
            let mut chosen = (1.0, 0.0);
            for &(s, lo, hi) in &self.slices {
                let len = (hi.min(m) - lo).max(0.0);
                if pick < len {
                    chosen = (s, lo + pick);
                    break;
                }
                pick -= len;
                chosen = (s, lo + len);
            }
            chosen
        };
        if !self.region.contains(&Point::on_line(self.z + sign * b)) {
            return f64::NEG_INFINITY;
        }
        let mut q = tilt_share * 0.5 * theta * (-theta * b).exp() / tilt_mass;
        if tilt_share < 1.0 && self.in_slices(sign, b, m) {
            q += (1.0 - tilt_share) / reach;
        }
        head - theta * b - q.ln()
    }

    /// Log-weight of one draw for a path from `x0` over `[0, t]`.
    pub(crate) fn log_weight(&self, x0: f64, t: f64, rng: &mut StreamRng) -> Result<f64> {
        let offset = x0 - self.z;
        if offset == 0.0 {
            return Ok(self.log_weight_from_atom(t, rng));
        }
        let hit = sample_hitting_time(offset.abs(), rng);
        if hit >= t {
            let y = sample_avoiding_endpoint(offset, t, rng)?;
            return Ok(if self.region.contains(&Point::on_line(self.z + y)) { 0.0 } else { f64::NEG_INFINITY });
        }
        Ok(self.log_weight_from_atom(t - hit, rng))
    }
}

fn validate_ladder(ladder: &[f64], n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config("a Feynman-Kac estimate needs at least two paths".into()));
    }
    if ladder.is_empty() || ladder[0] < 0.0 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("horizons must be nonnegative and increasing".into()));
    }
    Ok(())
}

fn use_importance(rate: &BranchingRate, opts: &FkOptions) -> Result<bool> {
    let available = opts.scheme.kind == SchemeKind::Exact
        && rate.dimension() == 1
        && rate.atoms().len() == 1
        && rate.excess_mean() > 0.0;
    match opts.sampler {
        Sampler::Auto => Ok(available),
        Sampler::Plain => Ok(false),
        Sampler::Importance if available => Ok(true),
        Sampler::Importance => Err(Error::InvalidScheme(
            "importance sampling needs the exact scheme, one atom and mean offspring above 1".into(),
        )),
    }
}

fn chunked<F>(n: usize, f: F) -> Result<LogSum>
where
    F: Fn(usize, usize) -> Result<LogSum> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<LogSum> =
        (0..chunks).into_par_iter().map(|c| f(c, CHUNK.min(n - c * CHUNK))).collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(LogSum::default(), LogSum::merge))
}

/// Plain weighting: every path is carried through all horizons, so one path serves every
/// `(horizon, function)` pair. `log_f[j][r](x)` is `ln f` or `-inf`.
fn plain_ladder<F>(
    rate: &BranchingRate,
    x0: Point,
    ladder: &[f64],
    n_targets: &[usize],
    log_f: F,
    n: usize,
    opts: &FkOptions,
) -> Result<Vec<Vec<LogSum>>>
where
    F: Fn(usize, usize, &Point) -> f64 + Sync,
{
    opts.scheme.validate(rate)?;
    let excess = rate.excess_mean();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<Vec<LogSum>>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<Vec<LogSum>>> {
            let mut rng = task_stream(opts.seed, "fk-plain", c as u64);
            let mut acc: Vec<Vec<LogSum>> = n_targets.iter().map(|&k| vec![LogSum::default(); k]).collect();
            for _ in 0..CHUNK.min(n - c * CHUNK) {
                let mut state = PathState::unkilled(x0, 0.0);
                for (j, &t) in ladder.iter().enumerate() {
                    advance(&mut state, t, rate, &opts.scheme, &mut rng)?;
                    let lw = excess * state.pcaf;
                    for (r, sum) in acc[j].iter_mut().enumerate() {
                        sum.push(lw + log_f(j, r, &state.position));
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<Vec<LogSum>> = n_targets.iter().map(|&k| vec![LogSum::default(); k]).collect();
    for part in parts {
        for (tj, pj) in total.iter_mut().zip(part) {
            for (a, b) in tj.iter_mut().zip(pj) {
                *a = a.merge(b);
            }
        }
    }
    Ok(total)
}

fn log_indicator(region: &Region, x: &Point) -> f64 {
    if region.contains(x) {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Importance-sampled `E_x[exp(theta l_t) 1_region(B_t)]` for the single-atom rate.
pub(crate) fn importance_estimate(
    rate: &BranchingRate,
    x0: f64,
    t: f64,
    region: &Region,
    n: usize,
    seed: u64,
    stream_index: u64,
) -> Result<MomentEstimate> {
    let atom = rate.atoms()[0];
    let sampler = AtomImportance::new(atom.position, rate.excess_mean() * atom.weight, region);
    let sum = chunked(n, |c, count| {
        let mut rng = task_stream(seed, "fk-importance", (stream_index << 24) | c as u64);
        let mut acc = LogSum::default();
        for _ in 0..count {
            acc.push(sampler.log_weight(x0, t, &mut rng)?);
        }
        Ok(acc)
    })?;
    Ok(sum.finish(Method::FeynmanKac))
}

/// Estimates `E_{x0}[Z_t(1_region)]` at several horizons, `targets[j]` being the regions
/// observed at `ladder[j]`.
///
/// Feynman-Kac paths stop at every horizon of the ladder, as the engine's particles do, so
/// under the band scheme the estimates refer to the same discretized process as an engine run
/// with these observation times.
pub fn many_to_one_ladder(
    rate: &BranchingRate,
    x0: Point,
    ladder: &[f64],
    targets: &[Vec<Region>],
    n: usize,
    opts: &FkOptions,
) -> Result<Vec<Vec<MomentEstimate>>> {
    validate_ladder(ladder, n)?;
    if targets.len() != ladder.len() {
        return Err(Error::Config("one list of regions per horizon is required".into()));
    }
    if use_importance(rate, opts)? {
        let mut out = Vec::with_capacity(ladder.len());
        let width = targets.iter().map(Vec::len).max().unwrap_or(0) as u64;
        for (j, (&t, regions)) in ladder.iter().zip(targets).enumerate() {
            let row = regions
                .iter()
                .enumerate()
                .map(|(r, region)| importance_estimate(rate, x0.x(), t, region, n, opts.seed, j as u64 * width + r as u64))
                .collect::<Result<Vec<_>>>()?;
            out.push(row);
        }
        return Ok(out);
    }
    let sizes: Vec<usize> = targets.iter().map(Vec::len).collect();
    let sums = plain_ladder(rate, x0, ladder, &sizes, |j, r, x| log_indicator(&targets[j][r], x), n, opts)?;
    Ok(sums.iter().map(|row| row.iter().map(|s| s.finish(Method::FeynmanKac)).collect()).collect())
}

/// Estimates `E_{x0}[Z_t(1_region)] = E_{x0}[exp((Q-1) A_t) 1_region(B_t)]` from `n` paths.
pub fn many_to_one(
    rate: &BranchingRate,
    x0: Point,
    t: f64,
    region: &Region,
    n: usize,
    opts: &FkOptions,
) -> Result<MomentEstimate> {
    let mut out = many_to_one_ladder(rate, x0, &[t], &[vec![region.clone()]], n, opts)?;
    Ok(out.remove(0).remove(0))
}

/// Estimates `E_{x0}[Z_t(f)]` for a nonnegative function `f` with plain weighting.
pub fn many_to_one_fn<F>(
    rate: &BranchingRate,
    x0: Point,
    t: f64,
    f: F,
    n: usize,
    opts: &FkOptions,
) -> Result<MomentEstimate>
where
    F: Fn(&Point) -> f64 + Sync,
{
    validate_ladder(&[t], n)?;
    let negative = std::sync::atomic::AtomicBool::new(false);
    let sums = plain_ladder(
        rate,
        x0,
        &[t],
        &[1],
        |_, _, x| {
            let v = f(x);
            if v < 0.0 {
                negative.store(true, std::sync::atomic::Ordering::Relaxed);
            }
            v.ln()
        },
        n,
        opts,
    )?;
    if negative.into_inner() {
        return Err(Error::Config("many_to_one_fn needs a nonnegative function".into()));
    }
    Ok(sums[0][0].finish(Method::FeynmanKac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::StepScheme;
    use crate::special::adaptive_simpson;
    use std::f64::consts::PI;

    fn point1d() -> BranchingRate {
        BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap()
    }

    /// `E_0[exp(theta l_t) 1{|B_t| in [a, b], sign}]` by quadrature over the joint density
    /// `(l + y) / sqrt(2 pi t^3) exp(-(l + y)^2 / 2t)` of `(l_t, B_t = sign y)` per sign.
    fn quadrature(theta: f64, t: f64, a: f64, b: f64, signs: f64) -> f64 {
        let inner = |y: f64| {
            let g = |l: f64| {
                let m = l + y;
                (theta * l - m * m / (2.0 * t)).exp() * m / (2.0 * PI * t.powi(3)).sqrt()
            };
            adaptive_simpson(&g, 0.0, theta * t + 12.0 * t.sqrt(), 1e-12)
        };
        signs * adaptive_simpson(&inner, a, b, 1e-10)
    }

    #[test]
    fn zero_measure_gives_one() {
        let rate = BranchingRate::zero(1).unwrap();
        let est =
            many_to_one(&rate, Point::on_line(0.3), 2.0, &Region::Everywhere, 100, &FkOptions::new(StepScheme::exact(), 1))
                .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn total_mass_matches_half_normal_quadrature() {
        // E_0[exp(l_1)] with l_1 half-normal
        let g = |l: f64| l.exp() * (2.0 / PI).sqrt() * (-l * l / 2.0).exp();
        let oracle = adaptive_simpson(&g, 0.0, 40.0, 1e-13);
        let rate = point1d();
        for sampler in [Sampler::Importance, Sampler::Plain] {
            let opts = FkOptions::new(StepScheme::exact(), 2).with_sampler(sampler);
            let est = many_to_one(&rate, Point::ORIGIN, 1.0, &Region::Everywhere, 200_000, &opts).unwrap();
            assert!((est.value - oracle).abs() < 4.0 * est.stderr, "{sampler:?}: {est:?} vs {oracle}");
        }
    }

    #[test]
    fn frontier_window_matches_quadrature() {
        let rate = point1d();
        let t = 10.0;
        let region = Region::Shell { inner: 5.0, outer: 6.0, dirs: DirectionSet::both_signs() };
        let oracle = quadrature(1.0, t, 5.0, 6.0, 2.0);
        let opts = FkOptions::new(StepScheme::exact(), 3);
        let est = many_to_one(&rate, Point::ORIGIN, t, &region, 100_000, &opts).unwrap();
        assert!((est.value - oracle).abs() < 4.0 * est.stderr, "{est:?} vs {oracle}");
        assert!(est.stderr < 0.02 * oracle);
        assert!(!est.has_flag(super::super::FLAG_DEGENERATE_WEIGHTS));
        let plus = Region::Shell { inner: 5.0, outer: 6.0, dirs: DirectionSet::plus() };
        let est = many_to_one(&rate, Point::ORIGIN, t, &plus, 100_000, &opts).unwrap();
        assert!((est.value - oracle / 2.0).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn start_off_the_atom() {
        // plain and importance estimators are unbiased for the same quantity
        let rate = point1d();
        let region = Region::Shell { inner: 0.5, outer: 2.5, dirs: DirectionSet::both_signs() };
        let x0 = Point::on_line(1.5);
        let a = many_to_one(&rate, x0, 2.0, &region, 200_000, &FkOptions::new(StepScheme::exact(), 4)).unwrap();
        let opts = FkOptions::new(StepScheme::exact(), 5).with_sampler(Sampler::Plain);
        let b = many_to_one(&rate, x0, 2.0, &region, 200_000, &opts).unwrap();
        assert!(a.z_score(&b) < 4.0, "{a:?} {b:?}");
    }

    #[test]
    fn importance_needs_a_single_atom() {
        let rate = BranchingRate::atoms_1d(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let opts = FkOptions::new(StepScheme::euler(1e-3, 1e-2), 1).with_sampler(Sampler::Importance);
        assert!(many_to_one(&rate, Point::ORIGIN, 1.0, &Region::Everywhere, 10, &opts).is_err());
    }

    #[test]
    fn function_form_agrees_with_indicator_form() {
        let rate = point1d();
        let opts = FkOptions::new(StepScheme::exact(), 6).with_sampler(Sampler::Plain);
        let region = Region::Shell { inner: 0.0, outer: 1.0, dirs: DirectionSet::both_signs() };
        let a = many_to_one(&rate, Point::ORIGIN, 1.0, &region, 50_000, &opts).unwrap();
        let b = many_to_one_fn(&rate, Point::ORIGIN, 1.0, |x| region.indicator(x), 50_000, &opts).unwrap();
        assert_eq!(a.value, b.value);
        assert!(many_to_one_fn(&rate, Point::ORIGIN, 1.0, |_| -1.0, 10, &opts).is_err());
    }
}
