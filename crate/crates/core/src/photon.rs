//! Photon-number statistics of the twin coherent pulses and the decoy
//! weights Γ, Λ that enter the phase-error bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{ProtocolParams, Variant};

/// Default relative truncation tolerance for the Λ series.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// Hard cap on the truncation order, far beyond anything a valid tuple needs.
const MAX_ORDER: u32 = 20_000;

pub(crate) fn ln_factorial(s: u32) -> f64 {
    libm::lgamma(f64::from(s) + 1.0)
}

/// Probability that the pulse pair at intensity `mu` per pulse carries `s`
/// photons in total: `e^{−2μ}(2μ)^s / s!`.
pub fn poisson_twin(s: u32, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::domain(format!("intensity must be nonnegative, got {mu}")));
    }
    Ok(poisson_twin_unchecked(s, mu))
}

pub(crate) fn poisson_twin_unchecked(s: u32, mu: f64) -> f64 {
    if mu == 0.0 {
        return if s == 0 { 1.0 } else { 0.0 };
    }
    let m = 2.0 * mu;
    if s <= 20 {
        let mut p = (-m).exp();
        for k in 1..=s {
            p *= m / f64::from(k);
        }
        p
    } else {
        (-m + f64::from(s) * m.ln() - ln_factorial(s)).exp()
    }
}

/// Probability that the total photon number of a code-mode pair is even,
/// `e^{−2μ}cosh(2μ) = (1 + e^{−4μ})/2`.
pub fn p_even(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::domain(format!("intensity must be nonnegative, got {mu}")));
    }
    Ok(0.5 * (1.0 + (-4.0 * mu).exp()))
}

/// Γ = p11² (Δ/π) μ1 e^{−2μ1} / (μ2 e^{−2μ2}).
///
/// Only needs `μ2 > 0`; the other constraints are not checked, so
/// degenerate decoys (`μ1 = μ2`) give `p11² Δ/π`.
pub fn gamma(params: &ProtocolParams) -> Result<f64> {
    if !(params.mu2 > 0.0) {
        return Err(Error::domain("Γ is undefined for μ2 ≤ 0"));
    }
    Ok(gamma_unchecked(params))
}

fn gamma_unchecked(p: &ProtocolParams) -> f64 {
    p.p11 * p.p11 * p.delta_over_pi * (p.mu1 / p.mu2) * (2.0 * (p.mu2 - p.mu1)).exp()
}

/// Per-photon-number weight `q_s` of the decoy mixture after subtracting Γτ(μ2).
pub fn q_s(s: u32, params: &ProtocolParams) -> Result<f64> {
    params.ensure_valid()?;
    Ok(q_s_unchecked(s, params))
}

pub(crate) fn q_s_unchecked(s: u32, p: &ProtocolParams) -> f64 {
    let w = p.p11 * p.p11 * p.delta_over_pi;
    match s {
        0 => p.p10 * p.p10 - w * (-2.0 * p.mu1).exp() * (p.mu1 - p.mu2) / p.mu2,
        1 => 0.0,
        _ => {
            let x = p.mu2 / p.mu1;
            let sf = f64::from(s);
            // μ1^{s−1} − μ2^{s−1} = μ1^{s−1}(1 − x^{s−1})
            let ln = (w * p.mu1).ln() - 2.0 * p.mu1
                + sf * std::f64::consts::LN_2
                + (sf - 1.0) * p.mu1.ln()
                + (-(x.powf(sf - 1.0))).ln_1p()
                - ln_factorial(s);
            ln.exp()
        }
    }
}

/// `q_0..=q_{s_max}` by recurrence on `2^s μ1^{s−1}/s!` and `(μ2/μ1)^{s−1}`.
fn q_table(p: &ProtocolParams, s_max: u32) -> Vec<f64> {
    let w = p.p11 * p.p11 * p.delta_over_pi;
    let x = p.mu2 / p.mu1;
    let mut out = Vec::with_capacity(s_max as usize + 1);
    out.push(q_s_unchecked(0, p));
    if s_max >= 1 {
        out.push(0.0);
    }
    // at s = 2: w μ1 e^{−2μ1} · 2^2 μ1 / 2!
    let mut scale = w * p.mu1 * (-2.0 * p.mu1).exp() * 2.0 * p.mu1;
    let mut x_pow = x;
    for s in 2..=s_max {
        out.push(scale * (1.0 - x_pow));
        scale *= 2.0 * p.mu1 / f64::from(s + 1);
        x_pow *= x;
    }
    out
}

/// Γ, Λ and the bookkeeping of the truncated Λ series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoyCoefficients {
    pub gamma: f64,
    pub lambda: f64,
    pub p_even: f64,
    /// `q_s` for `s = 0..=s_max`.
    #[serde(skip)]
    pub q_table: Vec<f64>,
    /// Largest (even) photon number kept in the series.
    pub s_max: u32,
    /// Upper bound on the neglected part of `p_even/Λ`.
    pub tail_bound: f64,
    /// `p10² + p11²Δ/π − Γ − Λ`; negative means the tuple is infeasible.
    pub t_residual: f64,
    #[serde(skip)]
    pub variant: Variant,
}

/// Series terms `P^μ_s / q_s` for even `s`, in the overflow-free form where
/// the factorials and powers of two cancel:
/// `a_s = e^{2(μ1−μ)} (μ/μ1)^s / (p11²(Δ/π)(1 − (μ2/μ1)^{s−1}))` for even s ≥ 2.
/// Yields `a_0, a_2, a_4, …` with the powers carried multiplicatively.
struct EvenSeries {
    c0: f64,
    pref: f64,
    rho: f64,
    x: f64,
    /// `(μ/μ1)^s` and `(μ2/μ1)^{s−1}` for the next term.
    ratio_pow: f64,
    x_pow: f64,
    started: bool,
}

impl EvenSeries {
    fn new(p: &ProtocolParams) -> Result<Self> {
        if !(p.mu < p.mu1) {
            return Err(Error::NonConvergent(format!(
                "Σ P^μ_s/q_s diverges unless μ < μ1 (μ = {}, μ1 = {})",
                p.mu, p.mu1
            )));
        }
        if !(p.mu2 < p.mu1) || !(p.mu2 > 0.0) {
            return Err(Error::domain("q_s vanishes for even s ≥ 2 unless 0 < μ2 < μ1"));
        }
        let q0 = q_s_unchecked(0, p);
        if !(q0 > 0.0) {
            return Err(Error::domain(format!("q_0 = {q0} must be positive")));
        }
        let w = p.p11 * p.p11 * p.delta_over_pi;
        if !(w > 0.0) || !(p.mu > 0.0) {
            return Err(Error::domain("p11, Δ and μ must be positive"));
        }
        let ratio = p.mu / p.mu1;
        let x = p.mu2 / p.mu1;
        Ok(EvenSeries {
            c0: poisson_twin_unchecked(0, p.mu) / q0,
            pref: (2.0 * (p.mu1 - p.mu)).exp() / w,
            rho: ratio * ratio,
            x,
            ratio_pow: ratio * ratio,
            x_pow: x,
            started: false,
        })
    }

    /// Bound on `Σ_{j≥1} a_{s+2j}` given `a_s` (s ≥ 2): the term ratio
    /// `ρ (1 − x^{s−1})/(1 − x^{s+1})` never exceeds `ρ = (μ/μ1)²`.
    fn tail_after(&self, a_s: f64) -> f64 {
        a_s * self.rho / (1.0 - self.rho)
    }
}

impl Iterator for EvenSeries {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if !self.started {
            self.started = true;
            return Some(self.c0);
        }
        let a = self.pref * self.ratio_pow / (1.0 - self.x_pow);
        self.ratio_pow *= self.rho;
        self.x_pow *= self.x * self.x;
        Some(a)
    }
}

fn check_rel_tol(rel_tol: f64) -> Result<()> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::domain(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    Ok(())
}

fn finish(p: &ProtocolParams, lambda: f64, s_max: u32, tail_bound: f64, variant: Variant) -> DecoyCoefficients {
    let gamma = gamma_unchecked(p);
    let q_table = q_table(p, s_max);
    DecoyCoefficients {
        gamma,
        lambda,
        p_even: 0.5 * (1.0 + (-4.0 * p.mu).exp()),
        q_table,
        s_max,
        tail_bound,
        t_residual: p.p10 * p.p10 + p.p11 * p.p11 * p.delta_over_pi - gamma - lambda,
        variant,
    }
}

/// Λ for the two-phase code mode, `p_even/Λ = Σ_{s even} P^μ_s / q_s`.
///
/// The series is cut at the first even `s_max` whose geometric tail bound is
/// below `rel_tol` times the partial sum; the tail bound is added to the sum
/// before dividing so Λ is never overestimated.
pub fn lambda_two_phase(params: &ProtocolParams, rel_tol: f64) -> Result<DecoyCoefficients> {
    params.ensure_valid()?;
    lambda_two_phase_unvalidated(params, rel_tol)
}

/// [`lambda_two_phase`] without the parameter validation. Divergent or
/// degenerate inputs still produce an error.
pub fn lambda_two_phase_unvalidated(params: &ProtocolParams, rel_tol: f64) -> Result<DecoyCoefficients> {
    check_rel_tol(rel_tol)?;
    let mut series = EvenSeries::new(params)?;
    let mut sum = series.next().unwrap_or_default();
    let mut s = 0;
    let tail = loop {
        s += 2;
        let a = series.next().unwrap_or_default();
        sum += a;
        let tail = series.tail_after(a);
        if tail <= rel_tol * sum {
            break tail;
        }
        if s >= MAX_ORDER {
            return Err(Error::NonConvergent(format!("no truncation below order {MAX_ORDER}")));
        }
    };
    let p_even = 0.5 * (1.0 + (-4.0 * params.mu).exp());
    Ok(finish(params, p_even / (sum + tail), s, tail, Variant::TwoPhase))
}

/// Λ for the four-phase code mode,
/// `p_even/Λ = √(Σ_{k,l even, k+l ≡ 0 mod 4} P^μ_k P^μ_l q_k^{−1} q_l^{−1})`.
///
/// `tail_bound` is reported in units of `p_even/Λ`, like the two-phase case.
pub fn lambda_four_phase(params: &ProtocolParams, rel_tol: f64) -> Result<DecoyCoefficients> {
    params.ensure_valid()?;
    lambda_four_phase_unvalidated(params, rel_tol)
}

pub fn lambda_four_phase_unvalidated(params: &ProtocolParams, rel_tol: f64) -> Result<DecoyCoefficients> {
    check_rel_tol(rel_tol)?;
    let mut series = EvenSeries::new(params)?;
    // Terms indexed by k/2; sums split by k ≡ 0 or 2 (mod 4), since
    // k + l ≡ 0 (mod 4) pairs same-class indices.
    let mut class = [series.next().unwrap_or_default(), 0.0];
    let mut s = 0;
    loop {
        s += 2;
        let a = series.next().unwrap_or_default();
        class[((s / 2) % 2) as usize] += a;
        let inner = class[0] * class[0] + class[1] * class[1];
        // Dropped pairs have max(k, l) > s_max; ignoring the mod-4 rule
        // over-counts them, so 2·A·T + T² bounds the omitted mass.
        let t = series.tail_after(a);
        let total = class[0] + class[1];
        let tail_inner = 2.0 * total * t + t * t;
        let root = inner.sqrt();
        let tail_root = (inner + tail_inner).sqrt() - root;
        if tail_root <= rel_tol * root {
            let p_even = 0.5 * (1.0 + (-4.0 * params.mu).exp());
            return Ok(finish(
                params,
                p_even / (inner + tail_inner).sqrt(),
                s,
                tail_root,
                Variant::FourPhase,
            ));
        }
        if s >= MAX_ORDER {
            return Err(Error::NonConvergent(format!("no truncation below order {MAX_ORDER}")));
        }
    }
}

/// Coefficients for the given code-mode variant.
pub fn decoy_coefficients(params: &ProtocolParams, variant: Variant, rel_tol: f64) -> Result<DecoyCoefficients> {
    match variant {
        Variant::TwoPhase => lambda_two_phase(params, rel_tol),
        Variant::FourPhase => lambda_four_phase(params, rel_tol),
    }
}
