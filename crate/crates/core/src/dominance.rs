//! Numerical check of the operator-dominance inequality on a truncated
//! two-mode Fock space.
//!
//! For each phase offset δ_b on a grid and for both the in-phase and the
//! anti-phase component, the verifier builds
//!
//! ```text
//! LHS(δ_b) = p10²|0,0⟩⟨0,0| + Σ_s (p11²(Δ/π) P^{μ1}_s − Γ P^{μ2}_s) |s⟩⟨s|
//! RHS(δ_b) = (Λ/p_even) |v⟩⟨v|,   |v⟩ = Σ_{s even} √(P^μ_s) |s⟩
//! ```
//!
//! with `|s⟩` the normalised s-photon twin-field state at phases
//! `(0, δ_b)` (or `(0, δ_b + π)`), and requires the smallest eigenvalue of
//! `LHS − RHS` to be nonnegative up to a tolerance. The LHS is assembled
//! from the decoy states directly, not from `q_s`, so a wrong `q_s`, Γ or Λ
//! shows up as a negative eigenvalue.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ProtocolParams;
use crate::photon::{self, ln_factorial, poisson_twin_unchecked};

pub type C64 = Complex<f64>;

pub const DEFAULT_N_MAX: u32 = 20;
pub const DEFAULT_DELTA_GRID: u32 = 9;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Truncated mass above which a warning is attached to the report.
pub const TRACE_DEFICIT_WARN: f64 = 1e-6;
/// Relative Frobenius distance below which grid points share one eigen-solve.
const REUSE_TOL: f64 = 1e-12;

/// Normalised s-photon twin-field state on the basis `|m, s−m⟩`, m = 0..=s.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinFockState {
    pub s: u32,
    pub theta_a: f64,
    pub theta_b: f64,
    pub amplitudes: Vec<C64>,
}

/// Amplitude of `|m, s−m⟩` is `√(s!/(2^s m!(s−m)!)) e^{imθ_a} e^{i(s−m)θ_b}`.
pub fn build_twin_fock(s: u32, theta_a: f64, theta_b: f64) -> TwinFockState {
    let ln_sf = ln_factorial(s) - f64::from(s) * std::f64::consts::LN_2;
    let amplitudes = (0..=s)
        .map(|m| {
            let n = s - m;
            let mag = (0.5 * (ln_sf - ln_factorial(m) - ln_factorial(n))).exp();
            C64::from_polar(mag, f64::from(m) * theta_a + f64::from(n) * theta_b)
        })
        .collect();
    TwinFockState {
        s,
        theta_a,
        theta_b,
        amplitudes,
    }
}

impl TwinFockState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Index of `|m, n⟩` in the basis `{|m, n⟩ : m + n ≤ n_max}` ordered by
/// total photon number, then by m.
pub fn basis_index(m: u32, n: u32) -> usize {
    let s = (m + n) as usize;
    s * (s + 1) / 2 + m as usize
}

pub fn basis_dim(n_max: u32) -> usize {
    let n = n_max as usize;
    (n + 1) * (n + 2) / 2
}

/// Embeds a twin-field state into the truncated space.
fn embed(state: &TwinFockState, dim: usize) -> DVector<C64> {
    let mut v = DVector::zeros(dim);
    let offset = basis_index(0, state.s);
    for (m, a) in state.amplitudes.iter().enumerate() {
        v[offset + m] = *a;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSign {
    InPhase,
    AntiPhase,
}

impl PhaseSign {
    fn bob_offset(self) -> f64 {
        match self {
            PhaseSign::InPhase => 0.0,
            PhaseSign::AntiPhase => std::f64::consts::PI,
        }
    }
}

/// Hermitian matrix on the truncated basis plus the mass it leaves out.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    pub n_max: u32,
    pub matrix: DMatrix<C64>,
    pub trace_deficit: f64,
}

impl TruncatedOperator {
    /// Largest `|M − M†|` entry.
    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Matrix element `⟨s_a| M |s_b⟩` between twin-field states.
    pub fn expectation(&self, bra: &TwinFockState, ket: &TwinFockState) -> C64 {
        let dim = self.matrix.nrows();
        let b = embed(bra, dim);
        let k = embed(ket, dim);
        (b.adjoint() * &self.matrix * k)[(0, 0)]
    }
}

/// Uniform grid over `[−Δ/2, Δ/2]`, endpoints included; a single point is δ = 0.
pub fn delta_grid(delta: f64, points: u32) -> Vec<f64> {
    match points {
        0 | 1 => vec![0.0],
        n => (0..n)
            .map(|j| -0.5 * delta + delta * f64::from(j) / f64::from(n - 1))
            .collect(),
    }
}

/// Γ and Λ to test; normally taken from the photon statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceWeights {
    pub gamma: f64,
    pub lambda: f64,
}

impl DominanceWeights {
    pub fn from_params(params: &ProtocolParams) -> Result<Self> {
        let c = photon::lambda_two_phase(params, photon::DEFAULT_REL_TOL)?;
        Ok(DominanceWeights {
            gamma: c.gamma,
            lambda: c.lambda,
        })
    }
}

fn lhs_weights(params: &ProtocolParams, w: &DominanceWeights, n_max: u32) -> Vec<f64> {
    let a = params.p11 * params.p11 * params.delta_over_pi;
    (0..=n_max)
        .map(|s| {
            let mut c = a * poisson_twin_unchecked(s, params.mu1) - w.gamma * poisson_twin_unchecked(s, params.mu2);
            if s == 0 {
                c += params.p10 * params.p10;
            }
            c
        })
        .collect()
}

fn lhs_deficit(params: &ProtocolParams, w: &DominanceWeights, n_max: u32) -> f64 {
    let a = params.p11 * params.p11 * params.delta_over_pi;
    ((n_max + 1)..(n_max + 400))
        .map(|s| a * poisson_twin_unchecked(s, params.mu1) + w.gamma.abs() * poisson_twin_unchecked(s, params.mu2))
        .sum()
}

fn rhs_deficit(params: &ProtocolParams, w: &DominanceWeights, n_max: u32) -> f64 {
    let scale = w.lambda / photon_p_even(params.mu);
    ((n_max + 1)..(n_max + 400))
        .filter(|s| s % 2 == 0)
        .map(|s| scale * poisson_twin_unchecked(s, params.mu))
        .sum()
}

fn photon_p_even(mu: f64) -> f64 {
    0.5 * (1.0 + (-4.0 * mu).exp())
}

fn lhs_at(params: &ProtocolParams, weights: &[f64], theta_b: f64, n_max: u32) -> DMatrix<C64> {
    let dim = basis_dim(n_max);
    let mut m = DMatrix::zeros(dim, dim);
    for s in 0..=n_max {
        let c = weights[s as usize];
        if c == 0.0 {
            continue;
        }
        let state = build_twin_fock(s, 0.0, theta_b);
        let off = basis_index(0, s);
        for (i, ai) in state.amplitudes.iter().enumerate() {
            for (j, aj) in state.amplitudes.iter().enumerate() {
                m[(off + i, off + j)] += ai * aj.conj() * c;
            }
        }
    }
    let _ = params;
    m
}

fn rhs_at(params: &ProtocolParams, w: &DominanceWeights, theta_b: f64, n_max: u32) -> DMatrix<C64> {
    let dim = basis_dim(n_max);
    let mut v = DVector::<C64>::zeros(dim);
    for s in (0..=n_max).step_by(2) {
        let amp = poisson_twin_unchecked(s, params.mu).sqrt();
        let state = build_twin_fock(s, 0.0, theta_b);
        let off = basis_index(0, s);
        for (i, a) in state.amplitudes.iter().enumerate() {
            v[off + i] = a * amp;
        }
    }
    let scale = w.lambda / photon_p_even(params.mu);
    (&v * v.adjoint()) * C64::from(scale)
}

fn average(mats: Vec<DMatrix<C64>>) -> DMatrix<C64> {
    let n = mats.len() as f64;
    let mut iter = mats.into_iter();
    let mut acc = iter.next().expect("grid is never empty");
    for m in iter {
        acc += m;
    }
    acc / C64::from(n)
}

/// δ_b-averaged `p10²τ(μ0) + p11²(Δ/π)τ^±(μ1) − Γτ^±(μ2)` on the truncated space.
pub fn assemble_lhs(params: &ProtocolParams, sign: PhaseSign, n_max: u32, grid: u32) -> Result<TruncatedOperator> {
    params.ensure_valid()?;
    let w = DominanceWeights::from_params(params)?;
    Ok(assemble_lhs_with(params, &w, sign, n_max, grid))
}

pub fn assemble_lhs_with(
    params: &ProtocolParams,
    w: &DominanceWeights,
    sign: PhaseSign,
    n_max: u32,
    grid: u32,
) -> TruncatedOperator {
    let weights = lhs_weights(params, w, n_max);
    let mats = delta_grid(params.delta(), grid)
        .into_iter()
        .map(|d| lhs_at(params, &weights, d + sign.bob_offset(), n_max))
        .collect();
    TruncatedOperator {
        n_max,
        matrix: average(mats),
        trace_deficit: lhs_deficit(params, w, n_max),
    }
}

/// δ_b-averaged `Λρ^±_even` on the truncated space.
pub fn assemble_rhs(params: &ProtocolParams, sign: PhaseSign, n_max: u32, grid: u32) -> Result<TruncatedOperator> {
    params.ensure_valid()?;
    let w = DominanceWeights::from_params(params)?;
    Ok(assemble_rhs_with(params, &w, sign, n_max, grid))
}

pub fn assemble_rhs_with(
    params: &ProtocolParams,
    w: &DominanceWeights,
    sign: PhaseSign,
    n_max: u32,
    grid: u32,
) -> TruncatedOperator {
    let mats = delta_grid(params.delta(), grid)
        .into_iter()
        .map(|d| rhs_at(params, w, d + sign.bob_offset(), n_max))
        .collect();
    TruncatedOperator {
        n_max,
        matrix: average(mats),
        trace_deficit: rhs_deficit(params, w, n_max),
    }
}

/// Settings of a dominance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceCheck {
    pub n_max: u32,
    pub delta_grid: u32,
    pub tol: f64,
}

impl Default for DominanceCheck {
    fn default() -> Self {
        DominanceCheck {
            n_max: DEFAULT_N_MAX,
            delta_grid: DEFAULT_DELTA_GRID,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub min_eigenvalue_in: f64,
    pub min_eigenvalue_anti: f64,
    pub pass: bool,
    pub n_max: u32,
    pub delta_grid: u32,
    pub tol: f64,
    pub trace_deficit: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub warnings: Vec<String>,
}

/// Real form of a pointwise operator built at Alice phase 0 and Bob phase
/// `theta_b`. Conjugating with `U = diag(e^{inθ_b})` as `U†MU` makes it real
/// symmetric with the same spectrum; any imaginary residue left after that is
/// an assembly error.
fn dephased(m: &DMatrix<C64>, theta_b: f64, n_max: u32) -> Result<DMatrix<f64>> {
    let bob: Vec<C64> = (0..=n_max)
        .flat_map(|s| (0..=s).map(move |k| C64::from_polar(1.0, f64::from(s - k) * theta_b)))
        .collect();
    let dim = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
    let mut residue = 0.0f64;
    let real = DMatrix::<f64>::from_fn(dim, dim, |i, j| {
        let z = bob[i].conj() * m[(i, j)] * bob[j];
        residue = residue.max(z.im.abs());
        z.re
    });
    if residue > 1e-12 * scale {
        return Err(Error::Eigen(format!(
            "operator not real after removing Bob's phase (residue {residue:.3e})"
        )));
    }
    Ok(real)
}

fn smallest_eigenvalue(real: &DMatrix<f64>) -> Result<f64> {
    let min = real
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        Ok(min)
    } else {
        Err(Error::Eigen("non-finite eigenvalue".into()))
    }
}

/// Lower bounds on the smallest eigenvalue of each matrix. A matrix within
/// Frobenius distance `d` of one already diagonalised reuses that spectrum:
/// by Weyl's inequality its smallest eigenvalue is at least `λ_min − d`.
fn smallest_eigenvalues(mats: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    let mut solved: Vec<(usize, f64)> = Vec::new();
    let mut out = Vec::with_capacity(mats.len());
    for (i, m) in mats.iter().enumerate() {
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let near = solved
            .iter()
            .map(|&(j, min)| (min, (m - &mats[j]).norm()))
            .find(|&(_, d)| d <= REUSE_TOL * scale);
        let min = match near {
            Some((min, d)) => min - d,
            None => {
                let min = smallest_eigenvalue(m)?;
                solved.push((i, min));
                min
            }
        };
        out.push(min);
    }
    Ok(out)
}

/// Certifies dominance with Γ and Λ from the photon statistics.
pub fn verify_dominance(params: &ProtocolParams, check: &DominanceCheck) -> Result<CertReport> {
    params.ensure_valid()?;
    let w = DominanceWeights::from_params(params)?;
    verify_dominance_with(params, &w, check)
}

/// Certifies dominance pointwise in δ_b for explicitly given Γ and Λ.
pub fn verify_dominance_with(
    params: &ProtocolParams,
    w: &DominanceWeights,
    check: &DominanceCheck,
) -> Result<CertReport> {
    if check.n_max == 0 {
        return Err(Error::domain("n_max must be at least 1"));
    }
    let weights = lhs_weights(params, w, check.n_max);
    let grid = delta_grid(params.delta(), check.delta_grid);
    let jobs: Vec<(PhaseSign, f64)> = [PhaseSign::InPhase, PhaseSign::AntiPhase]
        .into_iter()
        .flat_map(|sign| grid.iter().map(move |&d| (sign, d)))
        .collect();

    let mats = jobs
        .par_iter()
        .map(|&(sign, d)| {
            let theta_b = d + sign.bob_offset();
            let m = lhs_at(params, &weights, theta_b, check.n_max) - rhs_at(params, w, theta_b, check.n_max);
            dephased(&m, theta_b, check.n_max)
        })
        .collect::<Result<Vec<_>>>()?;
    let mins: Vec<(PhaseSign, f64)> = jobs
        .iter()
        .map(|&(sign, _)| sign)
        .zip(smallest_eigenvalues(&mats)?)
        .collect();

    let fold = |want: PhaseSign| {
        mins.iter()
            .filter(|(s, _)| *s == want)
            .map(|(_, e)| *e)
            .fold(f64::INFINITY, f64::min)
    };
    let min_in = fold(PhaseSign::InPhase);
    let min_anti = fold(PhaseSign::AntiPhase);
    let trace_deficit = lhs_deficit(params, w, check.n_max) + rhs_deficit(params, w, check.n_max);

    let mut warnings = Vec::new();
    if trace_deficit > TRACE_DEFICIT_WARN {
        warnings.push(format!(
            "n_max = {} truncates {trace_deficit:.3e} of the operator mass; raise n_max",
            check.n_max
        ));
    }
    let floor = -check.tol - trace_deficit;
    Ok(CertReport {
        min_eigenvalue_in: min_in,
        min_eigenvalue_anti: min_anti,
        pass: min_in >= floor && min_anti >= floor,
        n_max: check.n_max,
        delta_grid: check.delta_grid,
        tol: check.tol,
        trace_deficit,
        gamma: w.gamma,
        lambda: w.lambda,
        warnings,
    })
}
