use rayon::prelude::*;
use tfqkd::dominance::{verify_dominance, DominanceCheck};
use tfqkd::optimize::{optimize_point, rate_curve, Bounds, OptimizationProblem, Sweep, DIMENSION};
use tfqkd::{ExperimentConfig, Variant};

/// Exhaustive search on 11 points per transformed axis over [−5, 5].
fn grid_best(problem: &OptimizationProblem) -> f64 {
    let axis: Vec<f64> = (0..11).map(|i| -5.0 + f64::from(i)).collect();
    let total = 11usize.pow(DIMENSION as u32);
    (0..total)
        .into_par_iter()
        .map(|mut k| {
            let mut z = [0.0; DIMENSION];
            for zi in z.iter_mut() {
                *zi = axis[k % 11];
                k /= 11;
            }
            problem.objective(&z)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

#[test]
fn optimum_beats_coarse_grid_at_short_distance() {
    let config = ExperimentConfig::reference(1e18, Variant::TwoPhase);
    let problem = OptimizationProblem::new(config, 0.01);
    let grid = grid_best(&problem);
    assert!(grid > 0.0);
    let opt = optimize_point(&problem).unwrap();
    assert!(opt.feasible());
    assert!(opt.rate() >= 0.95 * grid, "optimizer {} vs grid {grid}", opt.rate());
}

#[test]
fn bounds_encode_the_grid_box() {
    let b = Bounds::default();
    let p = b.decode(&[-5.0; DIMENSION]);
    assert!(p.mu1 > b.intensity_min && p.delta_over_pi > b.delta_over_pi_min);
}

#[test]
fn curve_is_monotone_and_certified() {
    let config = ExperimentConfig::reference(1e13, Variant::TwoPhase);
    let curve = rate_curve(&Sweep::new(vec![100.0, 200.0, 300.0], config)).unwrap();
    assert_eq!(curve.len(), 3);
    for w in curve.windows(2) {
        assert!(w[1].rate() <= w[0].rate(), "{} then {}", w[0].rate(), w[1].rate());
    }
    for r in &curve {
        assert!(r.feasible());
        r.params.ensure_valid().unwrap();
        let cert = verify_dominance(&r.params, &DominanceCheck::default()).unwrap();
        assert!(cert.pass, "{:?} {cert:?}", r.params);
    }
}

#[test]
fn doubling_budget_never_hurts() {
    let config = ExperimentConfig::reference(1e15, Variant::FourPhase);
    for (distance, budget) in [(50.0, 250), (250.0, 500), (420.0, 1000)] {
        let mut p = OptimizationProblem::new(config, distance);
        p.restarts = 3;
        p.seed = 5;
        p.budget = budget;
        let small = optimize_point(&p).unwrap();
        p.budget = 2 * budget;
        let large = optimize_point(&p).unwrap();
        assert!(
            large.score >= small.score,
            "L={distance}: {} < {}",
            large.score,
            small.score
        );
    }
}

#[test]
fn warm_start_not_worse_than_cold() {
    let config = ExperimentConfig::reference(1e13, Variant::FourPhase);
    let distances = Sweep::range(0.0, 400.0, 50.0).unwrap();
    let mut sweep = Sweep::new(distances, config);
    sweep.budget = 1500;
    sweep.restarts = 4;
    let warm = rate_curve(&sweep).unwrap();
    sweep.warm_start = false;
    let cold = rate_curve(&sweep).unwrap();
    for (w, c) in warm.iter().zip(&cold) {
        assert!(
            w.rate() >= 0.98 * c.rate(),
            "L={}: warm {} cold {}",
            w.distance_km,
            w.rate(),
            c.rate()
        );
    }
}

#[test]
fn identical_problem_identical_result() {
    let mut p = OptimizationProblem::new(ExperimentConfig::reference(1e13, Variant::TwoPhase), 150.0);
    p.budget = 800;
    p.seed = 42;
    let a = optimize_point(&p).unwrap();
    let b = optimize_point(&p).unwrap();
    assert_eq!(
        a.params.to_array().map(f64::to_bits),
        b.params.to_array().map(f64::to_bits)
    );
    assert_eq!(a.result, b.result);
}
