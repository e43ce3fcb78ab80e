//! Finite-size statistics: the M± sampling bounds, the phase-error bound
//! f(K1, K2) and the final key length.

use serde::Serialize;

use crate::channel::{self, ChannelPoint};
use crate::error::{Error, Result};
use crate::params::{EpsilonBudget, ExperimentConfig, LogBase, ObservedCounts, ProtocolParams, Variant};
use crate::photon::{self, DecoyCoefficients};

/// Binary Shannon entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    Ok(entropy(x))
}

fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    // the symmetric form keeps h(x) == h(1 − x) bit for bit
    let (a, b) = if x <= 0.5 { (x, 1.0 - x) } else { (1.0 - x, x) };
    -(a * a.log2() + b * b.log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MBound {
    pub value: f64,
    /// False outside the regime `(1−p)K ≫ −log ε` where the approximation
    /// is trusted (checked as a factor of 100).
    pub in_regime: bool,
}

/// Approximate sampling bound
/// `M± ≈ ((1−p)/p)K ± √(−log ε)·(√(2(1−p))/p)·√K`, with M⁻ clamped at 0.
pub fn m_bound(k: f64, p: f64, eps: f64, sign: Sign, log_base: LogBase) -> Result<MBound> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("sampling probability {p} outside (0, 1]")));
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::domain(format!("population size {k} must be nonnegative")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("ε = {eps} outside (0, 1)")));
    }
    let neg_log = log_base.neg_log(eps);
    let mean = (1.0 - p) / p * k;
    let spread = neg_log.sqrt() * (2.0 * (1.0 - p)).sqrt() / p * k.sqrt();
    let value = match sign {
        Sign::Plus => mean + spread,
        Sign::Minus => (mean - spread).max(0.0),
    };
    Ok(MBound {
        value,
        in_regime: (1.0 - p) * k > 100.0 * neg_log,
    })
}

/// Phase-error count bound and its intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FBound {
    pub f_value: f64,
    pub k1_even_plus: f64,
    pub nu: f64,
    /// False when `K1 − (Γπ/(p2²Δ))K2 < 0`, i.e. the decoy data contradict
    /// the model; `f_value` then keeps only the fluctuation term.
    pub consistent: bool,
}

/// Weight multiplying Λ in the sampling probability; the four-phase code
/// mode doubles it.
fn lambda_weight(variant: Variant) -> f64 {
    match variant {
        Variant::TwoPhase => 1.0,
        Variant::FourPhase => 2.0,
    }
}

/// Closed-form f(K1, K2), the expression used for optimization.
///
/// For the four-phase variant `f_value` already includes the extra factor
/// 1/2, so `e_ph ≤ f_value / K0` holds for both variants.
pub fn f_bound(
    counts: &ObservedCounts,
    coeffs: &DecoyCoefficients,
    params: &ProtocolParams,
    eps: f64,
    log_base: LogBase,
) -> FBound {
    let gamma = coeffs.gamma;
    let code_even = params.p0 * params.p0 * coeffs.p_even;
    let a = params.p2 * params.p2 * params.delta_over_pi;
    let lg = log_base.neg_log(eps / 2.0).sqrt();

    let raw_inner = counts.k1 - gamma / a * counts.k2;
    let consistent = raw_inner >= 0.0;
    let inner = raw_inner.max(0.0);

    let (first, second) = match coeffs.variant {
        Variant::TwoPhase => (
            (2.0 * gamma * (a + gamma)).sqrt() / a,
            (2.0 * (1.0 + coeffs.lambda / code_even)).sqrt(),
        ),
        Variant::FourPhase => {
            let pi = std::f64::consts::PI;
            let p2d = params.p2 * params.p2 * params.delta();
            (
                (2.0 * gamma * pi * (p2d + gamma * pi)).sqrt() / p2d,
                (2.0 * (1.0 + 2.0 * coeffs.lambda / code_even)).sqrt(),
            )
        }
    };
    let nu = first * counts.k2.sqrt() + second * inner.sqrt();
    let lam = lambda_weight(coeffs.variant) * coeffs.lambda;
    FBound {
        f_value: code_even / lam * (inner + nu * lg),
        k1_even_plus: inner + first * counts.k2.sqrt() * lg,
        nu,
        consistent,
    }
}

/// Two-stage form `f = M⁺(K1^{(even)+}; Λ/(p0²p_even + Λ), ε/2)` with
/// `K1^{(even)+} = K1 − M⁻(K2; (p2²Δ/π)/(p2²Δ/π + Γ), ε/2)`.
pub fn f_bound_composed(
    counts: &ObservedCounts,
    coeffs: &DecoyCoefficients,
    params: &ProtocolParams,
    eps: f64,
    log_base: LogBase,
) -> Result<FBound> {
    let a = params.p2 * params.p2 * params.delta_over_pi;
    let m_minus = m_bound(counts.k2, a / (a + coeffs.gamma), eps / 2.0, Sign::Minus, log_base)?;
    let raw = counts.k1 - m_minus.value;
    let k1_even_plus = raw.max(0.0);
    let code_even = params.p0 * params.p0 * coeffs.p_even;
    let lam = lambda_weight(coeffs.variant) * coeffs.lambda;
    let m_plus = m_bound(k1_even_plus, lam / (code_even + lam), eps / 2.0, Sign::Plus, log_base)?;
    let nu = (m_plus.value * lam / code_even - k1_even_plus) / log_base.neg_log(eps / 2.0).sqrt();
    Ok(FBound {
        f_value: m_plus.value,
        k1_even_plus,
        nu,
        consistent: raw >= 0.0,
    })
}

/// Final key length and everything needed to audit it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateResult {
    pub e_ph_upper: f64,
    pub e_bit: f64,
    pub f_value: f64,
    pub k1_even_plus: f64,
    pub g_bits: u64,
    /// `G` before clamping and flooring; negative when no key is left.
    pub g_unclamped: f64,
    pub rate_per_pulse: f64,
    pub h_ec_bits: f64,
    pub feasible: bool,
    pub eps: EpsilonBudget,
}

/// `G = K0 − ⌈K0 h(f/K0)⌉ − H_EC − ζ − ζ′` with `H_EC = ⌈f_cor K0 h(e_bit)⌉`.
pub fn key_length(counts: &ObservedCounts, f: &FBound, config: &ExperimentConfig) -> KeyRateResult {
    let k0 = counts.k0;
    let e_bit = counts.bit_error_rate();
    let e_ph = if k0 > 0.0 { f.f_value / k0 } else { f64::INFINITY };
    let h_ec = (config.f_cor * k0 * entropy(e_bit)).ceil();
    let g = if k0 > 0.0 {
        k0 - (k0 * entropy(e_ph.min(0.5))).ceil() - h_ec - f64::from(config.zeta) - f64::from(config.zeta_prime)
    } else {
        -f64::from(config.zeta) - f64::from(config.zeta_prime)
    };
    let g_bits = if g >= 1.0 { g.floor() as u64 } else { 0 };
    let feasible = e_ph < 0.5 && g_bits > 0 && f.consistent;
    let g_bits = if feasible { g_bits } else { 0 };
    KeyRateResult {
        e_ph_upper: e_ph.clamp(0.0, 1.0),
        e_bit,
        f_value: f.f_value,
        k1_even_plus: f.k1_even_plus,
        g_bits,
        g_unclamped: g,
        rate_per_pulse: g_bits as f64 / config.n_tot,
        h_ec_bits: h_ec,
        feasible,
        eps: config.epsilon_budget(),
    }
}

/// Everything computed for one (params, distance) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEvaluation {
    pub distance_km: f64,
    pub params: ProtocolParams,
    pub channel: ChannelPoint,
    pub counts: ObservedCounts,
    pub coefficients: DecoyCoefficients,
    pub bound: FBound,
    pub result: KeyRateResult,
}

/// Analytic pipeline: expected counts → Γ, Λ → f(K1, K2) → G.
pub fn evaluate(params: &ProtocolParams, config: &ExperimentConfig, distance_km: f64) -> Result<PointEvaluation> {
    evaluate_with_tol(params, config, distance_km, photon::DEFAULT_REL_TOL)
}

pub fn evaluate_with_tol(
    params: &ProtocolParams,
    config: &ExperimentConfig,
    distance_km: f64,
    rel_tol: f64,
) -> Result<PointEvaluation> {
    if !(distance_km >= 0.0) {
        return Err(Error::domain(format!("distance {distance_km} km must be nonnegative")));
    }
    let coefficients = photon::decoy_coefficients(params, config.variant, rel_tol)?;
    let channel = ChannelPoint::new(distance_km, config, params.delta());
    let counts = channel::expected_counts(params, config, &channel);
    Ok(evaluate_counts(params, config, channel, counts, coefficients))
}

/// Finite-key evaluation for given (e.g. simulated) counts.
pub fn evaluate_counts(
    params: &ProtocolParams,
    config: &ExperimentConfig,
    channel: ChannelPoint,
    counts: ObservedCounts,
    coefficients: DecoyCoefficients,
) -> PointEvaluation {
    let bound = f_bound(&counts, &coefficients, params, config.epsilon, config.log_base);
    let result = key_length(&counts, &bound, config);
    PointEvaluation {
        distance_km: channel.distance_km,
        params: *params,
        channel,
        counts,
        coefficients,
        bound,
        result,
    }
}
