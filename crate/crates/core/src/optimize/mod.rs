//! Rate maximisation over the protocol tuple and rate-distance curves.
//!
//! The search runs in a 7-dimensional unconstrained space:
//!
//! | coordinate | maps to |
//! |---|---|
//! | `z0` | μ1 on (μ_min, μ_max) via a logistic |
//! | `z1`, `z2` | μ and μ2 as logistic fractions of (μ_min, μ1) |
//! | `z3..z5` | logits of p0, p10, p11 against p2 |
//! | `z6` | Δ/π on (Δ_min, 1) via a logistic |
//!
//! so the simplex, ordering and box constraints hold by construction and
//! only vacuum dominance is left to rejection.

mod nelder_mead;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel;
use crate::error::{Error, Result};
use crate::finite_key::{self, KeyRateResult, PointEvaluation};
use crate::params::{ExperimentConfig, ProtocolParams};

pub use nelder_mead::{NelderMead, NmOutcome};

pub const DEFAULT_BUDGET: usize = 4000;
pub const DEFAULT_RESTARTS: usize = 8;
pub const DIMENSION: usize = 7;

/// Box for the searched quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub delta_over_pi_min: f64,
    pub delta_over_pi_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            intensity_min: 1e-4,
            intensity_max: 1.0,
            delta_over_pi_min: 1e-3,
            delta_over_pi_max: 1.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(1e-12, 1.0 - 1e-12);
    (u / (1.0 - u)).ln()
}

impl Bounds {
    /// Maps search coordinates to a protocol tuple.
    pub fn decode(&self, z: &[f64]) -> ProtocolParams {
        let lo = self.intensity_min;
        let mu1 = lo + (self.intensity_max - lo) * sigmoid(z[0]);
        let mu = lo + (mu1 - lo) * sigmoid(z[1]);
        let mu2 = lo + (mu1 - lo) * sigmoid(z[2]);
        let top = z[3].max(z[4]).max(z[5]).max(0.0);
        let w = [(z[3] - top).exp(), (z[4] - top).exp(), (z[5] - top).exp(), (-top).exp()];
        let total: f64 = w.iter().sum();
        let dlo = self.delta_over_pi_min;
        ProtocolParams {
            mu,
            mu1,
            mu2,
            p0: w[0] / total,
            p10: w[1] / total,
            p11: w[2] / total,
            p2: w[3] / total,
            delta_over_pi: dlo + (self.delta_over_pi_max - dlo) * sigmoid(z[6]),
        }
    }

    /// Inverse of [`Bounds::decode`] for tuples inside the box.
    pub fn encode(&self, p: &ProtocolParams) -> [f64; DIMENSION] {
        let lo = self.intensity_min;
        let frac = |x: f64, hi: f64| logit((x - lo) / (hi - lo));
        let floor = 1e-300;
        [
            frac(p.mu1, self.intensity_max),
            frac(p.mu, p.mu1),
            frac(p.mu2, p.mu1),
            (p.p0.max(floor) / p.p2.max(floor)).ln(),
            (p.p10.max(floor) / p.p2.max(floor)).ln(),
            (p.p11.max(floor) / p.p2.max(floor)).ln(),
            logit((p.delta_over_pi - self.delta_over_pi_min) / (self.delta_over_pi_max - self.delta_over_pi_min)),
        ]
    }
}

/// The fixed first start: μ=0.05, μ1=0.1, μ2=0.02, p0=0.7, the rest split
/// 3:2:1 over p10:p11:p2, Δ=π/8.
pub fn canonical_start() -> ProtocolParams {
    ProtocolParams {
        mu: 0.05,
        mu1: 0.1,
        mu2: 0.02,
        p0: 0.7,
        p10: 0.15,
        p11: 0.1,
        p2: 0.05,
        delta_over_pi: 0.125,
    }
}

/// Ordering score used by the search. Positive values are key rates per
/// pulse; infeasible points get a negative margin so the simplex can still
/// climb toward the feasible region; rejected tuples get `−∞`.
pub fn search_score(eval: &PointEvaluation) -> f64 {
    let r = &eval.result;
    if r.feasible {
        return r.rate_per_pulse;
    }
    let k0 = eval.counts.k0;
    if !(k0 > 0.0) {
        return -1e3;
    }
    let margin = (r.g_unclamped / k0).clamp(-1e3, 1.0);
    let e_ph = eval.bound.f_value / k0;
    let excess = if e_ph.is_finite() {
        (e_ph - 0.5).clamp(0.0, 1e3)
    } else {
        1e3
    };
    let inconsistent = if eval.bound.consistent { 0.0 } else { 1.0 };
    margin - 2.0 - excess - inconsistent
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    pub config: ExperimentConfig,
    pub distance_km: f64,
    pub bounds: Bounds,
    /// Objective evaluations per restart.
    pub budget: usize,
    /// Number of seeded starts, the canonical one included.
    pub restarts: usize,
    pub seed: u64,
    /// Additional starts tried on top of `restarts` (e.g. a neighbouring optimum).
    pub extra_starts: Vec<ProtocolParams>,
}

impl OptimizationProblem {
    pub fn new(config: ExperimentConfig, distance_km: f64) -> Self {
        OptimizationProblem {
            config,
            distance_km,
            bounds: Bounds::default(),
            budget: DEFAULT_BUDGET,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            extra_starts: Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        if !(self.distance_km >= 0.0) || !self.distance_km.is_finite() {
            return Err(Error::domain(format!(
                "distance {} km must be finite and nonnegative",
                self.distance_km
            )));
        }
        let b = &self.bounds;
        let ok = 0.0 < b.intensity_min
            && b.intensity_min < b.intensity_max
            && b.intensity_max <= 1.0
            && 0.0 < b.delta_over_pi_min
            && b.delta_over_pi_min < b.delta_over_pi_max
            && b.delta_over_pi_max <= 1.0;
        if !ok {
            return Err(Error::domain(format!("inconsistent search bounds {b:?}")));
        }
        Ok(())
    }

    /// Score of a point in search coordinates.
    pub fn objective(&self, z: &[f64]) -> f64 {
        let p = self.bounds.decode(z);
        match finite_key::evaluate(&p, &self.config, self.distance_km) {
            Ok(eval) => search_score(&eval),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// One restart's contribution to the search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartTrace {
    pub start: ProtocolParams,
    pub best_score: f64,
    pub evals: usize,
    pub improvements: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub distance_km: f64,
    pub params: ProtocolParams,
    pub result: KeyRateResult,
    pub score: f64,
    pub trace: Vec<RestartTrace>,
}

impl OptimizationResult {
    pub fn feasible(&self) -> bool {
        self.result.feasible
    }

    pub fn rate(&self) -> f64 {
        self.result.rate_per_pulse
    }
}

/// Better score wins; equal scores go to the lexicographically smaller tuple.
fn better(a: (f64, &ProtocolParams), b: (f64, &ProtocolParams)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            let (x, y) = (a.1.to_array(), b.1.to_array());
            x.iter().zip(&y).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
        }
    }
}

fn start_points(problem: &OptimizationProblem) -> Vec<[f64; DIMENSION]> {
    let bounds = &problem.bounds;
    let canonical = bounds.encode(&canonical_start());
    let mut starts = Vec::with_capacity(problem.restarts + problem.extra_starts.len());
    if problem.restarts > 0 {
        starts.push(canonical);
    }
    for k in 1..problem.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
        rng.set_stream(k as u64);
        // Draw until the perturbed start is admissible; fall back to the last draw.
        let mut z = canonical;
        for _ in 0..64 {
            for (zi, ci) in z.iter_mut().zip(&canonical) {
                let g: f64 = StandardNormal.sample(&mut rng);
                *zi = ci + 1.5 * g;
            }
            if problem.objective(&z) > f64::NEG_INFINITY {
                break;
            }
        }
        starts.push(z);
    }
    starts.extend(problem.extra_starts.iter().map(|p| bounds.encode(p)));
    starts
}

/// Maximises the key rate at one distance with seeded Nelder–Mead restarts.
pub fn optimize_point(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.check()?;
    let nm = NelderMead {
        max_evals: problem.budget,
        ..NelderMead::default()
    };
    let starts = start_points(problem);
    let runs: Vec<(NmOutcome, ProtocolParams)> = starts
        .par_iter()
        .map(|z| (nm.maximize(|x| problem.objective(x), z), problem.bounds.decode(z)))
        .collect();

    let mut best: Option<(f64, ProtocolParams)> = None;
    let mut trace = Vec::with_capacity(runs.len());
    for (out, start) in runs {
        if !out.x.is_empty() {
            let p = problem.bounds.decode(&out.x);
            if best.as_ref().is_none_or(|(s, bp)| better((out.value, &p), (*s, bp))) {
                best = Some((out.value, p));
            }
        }
        trace.push(RestartTrace {
            start,
            best_score: out.value,
            evals: out.evals,
            improvements: out.improvements,
        });
    }

    let (score, params) = best.unwrap_or((f64::NEG_INFINITY, canonical_start()));
    let result = match finite_key::evaluate(&params, &problem.config, problem.distance_km) {
        Ok(eval) => eval.result,
        Err(_) => infeasible_result(&problem.config),
    };
    Ok(OptimizationResult {
        distance_km: problem.distance_km,
        params,
        result,
        score,
        trace,
    })
}

fn infeasible_result(config: &ExperimentConfig) -> KeyRateResult {
    KeyRateResult {
        e_ph_upper: 1.0,
        e_bit: 0.5,
        f_value: f64::NAN,
        k1_even_plus: f64::NAN,
        g_bits: 0,
        g_unclamped: f64::NEG_INFINITY,
        rate_per_pulse: 0.0,
        h_ec_bits: 0.0,
        feasible: false,
        eps: config.epsilon_budget(),
    }
}

/// Distances and search settings of a rate-distance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub distances: Vec<f64>,
    pub config: ExperimentConfig,
    pub warm_start: bool,
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Sweep {
    pub fn new(distances: Vec<f64>, config: ExperimentConfig) -> Self {
        Sweep {
            distances,
            config,
            warm_start: true,
            budget: DEFAULT_BUDGET,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }

    /// `from, from + step, …` up to and including `to` (within rounding).
    pub fn range(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !(from >= 0.0) || !(to >= from) || !to.is_finite() {
            return Err(Error::domain(format!("bad distance range {from}..{to} step {step}")));
        }
        let n = ((to - from) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| from + step * i as f64).collect())
    }

    fn problem(&self, distance_km: f64, extra: Option<ProtocolParams>) -> OptimizationProblem {
        OptimizationProblem {
            budget: self.budget,
            restarts: self.restarts,
            seed: self.seed,
            extra_starts: extra.into_iter().collect(),
            ..OptimizationProblem::new(self.config, distance_km)
        }
    }
}

/// Optimises every distance of the sweep; per-point failures become
/// infeasible rows.
pub fn rate_curve(sweep: &Sweep) -> Result<Vec<OptimizationResult>> {
    sweep.config.validate()?;
    if sweep.distances.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("curve distances must be strictly increasing"));
    }
    let fallback = |d: f64| OptimizationResult {
        distance_km: d,
        params: canonical_start(),
        result: infeasible_result(&sweep.config),
        score: f64::NEG_INFINITY,
        trace: Vec::new(),
    };
    if !sweep.warm_start {
        return Ok(sweep
            .distances
            .par_iter()
            .map(|&d| optimize_point(&sweep.problem(d, None)).unwrap_or_else(|_| fallback(d)))
            .collect());
    }
    let mut out: Vec<OptimizationResult> = Vec::with_capacity(sweep.distances.len());
    for &d in &sweep.distances {
        let prev = out.last().filter(|r| r.feasible()).map(|r| r.params);
        out.push(optimize_point(&sweep.problem(d, prev)).unwrap_or_else(|_| fallback(d)));
    }
    Ok(out)
}

/// Result of locating the largest distance with a positive key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxDistance {
    /// Last feasible point of the coarse sweep.
    pub coarse_km: Option<f64>,
    /// Last feasible point after refining past `coarse_km`.
    pub refined_km: Option<f64>,
    pub best: Option<OptimizationResult>,
    #[serde(skip)]
    pub curve: Vec<OptimizationResult>,
}

/// Sweeps `from..=to` at `step` with warm starts, then walks forward from the
/// last feasible point at `fine_step` (also warm-started) until the key
/// vanishes or the next coarse point is reached.
pub fn max_distance(sweep: &Sweep, fine_step: f64) -> Result<MaxDistance> {
    let curve = rate_curve(sweep)?;
    let Some(last_idx) = curve.iter().rposition(OptimizationResult::feasible) else {
        return Ok(MaxDistance {
            coarse_km: None,
            refined_km: None,
            best: None,
            curve,
        });
    };
    let coarse = curve[last_idx].clone();
    let stop = sweep.distances.get(last_idx + 1).copied().unwrap_or(f64::INFINITY);
    let mut best = coarse.clone();
    let mut d = coarse.distance_km + fine_step;
    while fine_step > 0.0 && d < stop - 1e-9 {
        let mut warm = sweep.clone();
        warm.distances = vec![d];
        let problem = warm.problem(d, Some(best.params));
        let r = optimize_point(&problem)?;
        if !r.feasible() {
            break;
        }
        best = r;
        d += fine_step;
    }
    Ok(MaxDistance {
        coarse_km: Some(coarse.distance_km),
        refined_km: Some(best.distance_km),
        best: Some(best),
        curve,
    })
}

/// One CSV row of a curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub distance_km: f64,
    pub rate_per_pulse: f64,
    pub g_bits: u64,
    pub e_ph_upper: f64,
    pub e_bit: f64,
    pub mu: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub p0: f64,
    pub p10: f64,
    pub p11: f64,
    pub p2: f64,
    pub delta_over_pi: f64,
    pub feasible: bool,
    pub plob: f64,
}

impl CurveRow {
    pub fn new(r: &OptimizationResult, config: &ExperimentConfig) -> Self {
        let p = &r.params;
        CurveRow {
            distance_km: r.distance_km,
            rate_per_pulse: r.result.rate_per_pulse,
            g_bits: r.result.g_bits,
            e_ph_upper: r.result.e_ph_upper,
            e_bit: r.result.e_bit,
            mu: p.mu,
            mu1: p.mu1,
            mu2: p.mu2,
            p0: p.p0,
            p10: p.p10,
            p11: p.p11,
            p2: p.p2,
            delta_over_pi: p.delta_over_pi,
            feasible: r.result.feasible,
            plob: channel::plob_bound(r.distance_km, config.loss_db_per_km),
        }
    }
}

/// Writes a curve as CSV, optionally preceded by a `# …` comment line.
pub fn write_curve_csv<W: Write>(
    mut out: W,
    curve: &[OptimizationResult],
    config: &ExperimentConfig,
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in curve {
        w.serialize(CurveRow::new(r, config)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}
