use std::f64::consts::TAU;
use std::sync::LazyLock;

use proptest::prelude::*;

use catbbm::config::ExperimentConfig;
use catbbm::geometry::{Arc, DirectionSet, Point, Region};
use catbbm::spectral::{
    check_disjoint, compute_c_star, compute_c_theta, solve, BranchingRate, FrontierWindow, GammaSpec, OffspringLaw,
    RadiusSchedule, SpectralSolution,
};
use catbbm::verify::stats::{quantile, wilson};

static CIRCLE: LazyLock<(BranchingRate, SpectralSolution)> = LazyLock::new(|| {
    let rate = BranchingRate::circle_2d(1.0, 1.0).unwrap();
    let sol = solve(&rate).unwrap();
    (rate, sol)
});

/// One to four atoms in `[-3, 3]`, at least 0.1 apart, with weights in `[0.2, 2]`.
fn atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, 0.2..2.0f64), 1..=4).prop_filter("separated atoms", |atoms| {
        atoms.iter().enumerate().all(|(i, a)| atoms[i + 1..].iter().all(|b| (a.0 - b.0).abs() >= 0.1))
    })
}

fn single_atom() -> (BranchingRate, SpectralSolution) {
    let rate = BranchingRate::atoms_1d(&[(0.0, 1.0)]).unwrap();
    let sol = solve(&rate).unwrap();
    (rate, sol)
}

fn window(r1: f64, r2: f64, theta: DirectionSet, sol: &SpectralSolution) -> FrontierWindow {
    let dimension = theta.dimension();
    let schedule = RadiusSchedule::with_speed(sol.critical_speed(), GammaSpec::zero(), dimension);
    FrontierWindow::new(r1, r2, theta, schedule).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn point_catalysts_solve_the_eigenproblem(atoms in atoms(), probes in prop::collection::vec(-6.0..6.0f64, 20)) {
        let rate = BranchingRate::atoms_1d(&atoms).unwrap();
        let sol = solve(&rate).unwrap();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let heaviest = atoms.iter().map(|a| a.1).fold(0.0, f64::max);
        prop_assert!(sol.lambda() < 0.0);
        prop_assert_eq!(sol.k(), (-2.0 * sol.lambda()).sqrt());
        prop_assert!(sol.k() > 0.0 && sol.k() <= 2.0 * total);
        // adding catalyst only deepens the well
        prop_assert!(sol.k() >= heaviest * (1.0 - 1e-12));
        prop_assert!((sol.l2_norm() - 1.0).abs() < 1e-8);
        let scale = sol.eval(&Point::on_line(atoms[0].0));
        for r in sol.jump_residuals(&rate) {
            prop_assert!(r.abs() <= 1e-8 * scale.max(1.0), "jump residual {}", r);
        }
        for x in probes.into_iter().filter(|x| atoms.iter().all(|a| (x - a.0).abs() > 1e-6)) {
            let p = Point::on_line(x);
            prop_assert!(sol.eval(&p) > 0.0);
            prop_assert!(sol.ode_residual(&p).abs() <= 1e-8);
        }
    }

    #[test]
    fn ground_state_decays_at_rate_k(atoms in atoms()) {
        let rate = BranchingRate::atoms_1d(&atoms).unwrap();
        let sol = solve(&rate).unwrap();
        for side in [-1.0, 1.0] {
            let envelope = |r: f64| sol.ln_eval(&Point::on_line(side * r)) + sol.k() * r;
            let samples: Vec<f64> = (1..=50).map(|r| envelope(r as f64)).collect();
            let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            prop_assert!(hi.is_finite() && lo.is_finite());
            let slope = (envelope(50.0) - envelope(20.0)) / 30.0;
            prop_assert!(slope.abs() < 1e-3, "slope {}", slope);
        }
    }

    #[test]
    fn scaling_the_eigenfunction_changes_nothing_else(atoms in atoms(), c in 0.01..100.0f64, x in -5.0..5.0f64) {
        let rate = BranchingRate::atoms_1d(&atoms).unwrap();
        let sol = solve(&rate).unwrap();
        let scaled = sol.scaled(c);
        prop_assert_eq!(scaled.lambda(), sol.lambda());
        prop_assert_eq!(scaled.k(), sol.k());
        let size = sol.eval(&Point::on_line(atoms[0].0)).max(1.0);
        for (a, b) in sol.jump_residuals(&rate).into_iter().zip(scaled.jump_residuals(&rate)) {
            prop_assert!((b - c * a).abs() <= 1e-8 * c * size);
        }
        let back = scaled.normalized();
        prop_assert!(back.is_normalized());
        let p = Point::on_line(x);
        prop_assert!((back.eval(&p) / sol.eval(&p) - 1.0).abs() < 1e-10);
        let twice = back.normalized();
        prop_assert!((twice.eval(&p) / back.eval(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_constant_is_monotone_in_the_radii(r1 in -3.0..3.0f64, width in 0.05..3.0f64, step in 0.01..1.0f64) {
        let (rate, sol) = single_atom();
        let base = compute_c_star(&sol, &rate, &window(r1, r1 + width, DirectionSet::both_signs(), &sol)).unwrap();
        let later_start = compute_c_star(&sol, &rate, &window(r1 + step.min(width / 2.0), r1 + width, DirectionSet::both_signs(), &sol)).unwrap();
        let later_end = compute_c_star(&sol, &rate, &window(r1, r1 + width + step, DirectionSet::both_signs(), &sol)).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!(later_start < base);
        prop_assert!(later_end > base);
    }

    #[test]
    fn window_constant_adds_over_split_directions(start in 0.0..TAU, length in 0.1..TAU, cut in 0.05..0.95f64) {
        let (rate, sol) = &*CIRCLE;
        let end = start + length;
        let mid = start + cut * length;
        let c = |a: f64, b: f64| compute_c_theta(sol, rate, &DirectionSet::Arcs(vec![Arc::new(a, b).unwrap()])).unwrap();
        let whole = c(start, end);
        let parts = c(start, mid) + c(mid, end);
        prop_assert!((parts / whole - 1.0).abs() < 1e-8, "{} vs {}", parts, whole);
    }

    #[test]
    fn sign_windows_add_up(atoms in atoms()) {
        let rate = BranchingRate::atoms_1d(&atoms).unwrap();
        let sol = solve(&rate).unwrap();
        let both = compute_c_theta(&sol, &rate, &DirectionSet::both_signs()).unwrap();
        let plus = compute_c_theta(&sol, &rate, &DirectionSet::plus()).unwrap();
        let minus = compute_c_theta(&sol, &rate, &DirectionSet::minus()).unwrap();
        prop_assert!(((plus + minus) / both - 1.0).abs() < 1e-12);
    }

    #[test]
    fn critical_radius_carries_the_dimension_log(t in 0.0..100.0f64, gamma in -3.0..3.0f64) {
        let (_, line) = single_atom();
        let schedule = RadiusSchedule::critical(&line, GammaSpec::Constant { value: gamma });
        prop_assert!((schedule.radius_at(&line, t) - (t / 2.0 + gamma)).abs() < 1e-12);

        let (_, plane) = &*CIRCLE;
        let schedule = RadiusSchedule::critical(plane, GammaSpec::Constant { value: gamma });
        let expected = plane.critical_speed() * t + t.max(1.0).ln() / (2.0 * plane.k()) + gamma;
        prop_assert!((schedule.radius_at(plane, t) - expected).abs() < 1e-12);
    }

    #[test]
    fn window_families_split_counts(
        points in prop::collection::vec((0.0..6.0f64, 0.0..TAU), 0..200),
        inner in 0.0..2.0f64,
        cut in 0.1..2.0f64,
        width in 0.1..2.0f64,
        angle in 0.1..6.0f64,
    ) {
        let (_, sol) = &*CIRCLE;
        let outer = inner + cut + width;
        let split = inner + cut;
        let left = DirectionSet::Arcs(vec![Arc::new(0.0, angle).unwrap()]);
        let right = DirectionSet::Arcs(vec![Arc::new(angle, TAU).unwrap()]);
        let family = [
            window(inner, split, left.clone(), sol),
            window(split, outer, left.clone(), sol),
            window(inner, split, right.clone(), sol),
            window(split, outer, right, sol),
        ];
        prop_assert!(check_disjoint(&family).is_ok());
        prop_assert!(check_disjoint(&[window(inner, outer, left.clone(), sol), family[0].clone()]).is_err());

        let cloud: Vec<Point> = points.iter().map(|(r, phi)| Point::new(r * phi.cos(), r * phi.sin())).collect();
        let t = 0.0;
        let union = Region::Shell { inner, outer, dirs: DirectionSet::full_circle() };
        let in_union = cloud.iter().filter(|p| union.contains(p)).count();
        let in_parts: usize = family
            .iter()
            .map(|w| {
                let region = w.region_at(sol, t);
                cloud.iter().filter(|p| region.contains(p)).count()
            })
            .sum();
        prop_assert_eq!(in_parts, in_union);
        prop_assert!(in_union <= cloud.len());
    }

    #[test]
    fn offspring_laws_sample_their_support(raw in prop::collection::vec(0.0..1.0f64, 1..=6), u in 0.0..1.0f64) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-3);
        let law = OffspringLaw::new(raw.iter().map(|p| p / total).collect()).unwrap();
        let n = law.sample_from_uniform(u);
        prop_assert!(n >= 1 && n <= law.max_offspring());
        prop_assert!(law.prob(n) > 0.0);
        prop_assert!(law.mean() >= 1.0);
        let r: f64 = (1..=law.max_offspring()).map(|n| (n * (n - 1)) as f64 * law.prob(n)).sum();
        prop_assert!((law.factorial_moment() - r).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_the_proportion(n in 1usize..10_000, frac in 0.0..=1.0f64) {
        let successes = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson(successes, n, 1.96);
        let p = successes as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn quantiles_are_monotone(xs in prop::collection::vec(-100.0..100.0f64, 1..100), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&xs, lo) <= quantile(&xs, hi));
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(quantile(&xs, 0.0), min);
        prop_assert_eq!(quantile(&xs, 1.0), max);
    }

    #[test]
    fn configs_round_trip_through_toml(seed in any::<u64>(), replicas in 1usize..100_000, first in 0.5..5.0f64, gap in 0.5..5.0f64) {
        for name in ["point1d", "twopoint1d", "circle2d"] {
            let mut cfg = ExperimentConfig::preset(name).unwrap();
            cfg.seed = seed;
            cfg.replicas = replicas;
            cfg.horizons = vec![first, first + gap];
            let text = cfg.to_toml_string().unwrap();
            prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }
}
