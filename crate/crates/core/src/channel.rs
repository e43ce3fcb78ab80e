//! Analytic detection model: fiber transmittance, misalignment and the
//! expected counting rates of the code and decoy modes.

use serde::Serialize;

use crate::params::{ExperimentConfig, ObservedCounts, ProtocolParams, Variant};

/// One-arm transmittance `η = 10^{−loss·L/20} η_d`; each arm covers half of `L`.
pub fn transmittance(distance_km: f64, eta_d: f64, loss_db_per_km: f64) -> f64 {
    10f64.powf(-loss_db_per_km * distance_km / 20.0) * eta_d
}

/// Mean of `sin²(δ/2)` for δ uniform on `[−Δ/2, Δ/2]`, which is
/// `1/2 − sin(Δ/2)/Δ`.
pub fn e_mis(delta: f64) -> f64 {
    if delta.abs() < 1e-4 {
        // series of 1/2 − sin(Δ/2)/Δ, avoids cancellation near 0
        let d2 = delta * delta;
        return d2 / 48.0 - d2 * d2 / 3840.0;
    }
    0.5 - (0.5 * delta).sin() / delta
}

/// Channel quantities at one distance for a given phase-slice width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelPoint {
    pub distance_km: f64,
    /// One-arm transmittance including detector efficiency.
    pub eta: f64,
    /// Phase-slice mismatch error.
    pub e_mis: f64,
    /// Total misalignment `e_d + (1 − e_d) e_mis`.
    pub e_m: f64,
}

impl ChannelPoint {
    pub fn new(distance_km: f64, config: &ExperimentConfig, delta: f64) -> Self {
        let eta = transmittance(distance_km, config.eta_d, config.loss_db_per_km);
        let e_mis = e_mis(delta);
        ChannelPoint {
            distance_km,
            eta,
            e_mis,
            e_m: config.e_d + (1.0 - config.e_d) * e_mis,
        }
    }
}

/// Code-mode counting rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodeRates {
    pub q_corr: f64,
    pub q_err: f64,
    pub q_mu: f64,
    pub e_bit: f64,
    /// Set when `q_mu = 0`; `e_bit` is then reported as 0.
    pub degenerate: bool,
}

pub fn code_rates(eta: f64, mu: f64, e_m: f64, p_d: f64) -> CodeRates {
    let right = 2.0 * eta * mu * (1.0 - e_m);
    let wrong = 2.0 * eta * mu * e_m;
    let keep = 1.0 - p_d;
    // 1 − (1−p_d)e^{−x} without cancellation for tiny x and p_d
    let click = |x: f64| -((-p_d).ln_1p() - x).exp_m1();
    let q_corr = keep * (-wrong).exp() * click(right);
    let q_err = keep * (-right).exp() * click(wrong);
    let q_mu = q_corr + q_err;
    let degenerate = q_mu == 0.0;
    CodeRates {
        q_corr,
        q_err,
        q_mu,
        e_bit: if degenerate { 0.0 } else { q_err / q_mu },
        degenerate,
    }
}

/// Repeaterless capacity `−log₂(1 − η)` of the end-to-end fibre, detectors excluded.
pub fn plob_bound(distance_km: f64, loss_db_per_km: f64) -> f64 {
    let eta = 10f64.powf(-loss_db_per_km * distance_km / 10.0);
    -(-eta).ln_1p() / std::f64::consts::LN_2
}

/// Single-click rate when both parties send intensity `mu_i`:
/// `2(1−p_d)e^{−ημ_i}(1 − (1−p_d)e^{−ημ_i})`.
pub fn decoy_rate(eta: f64, mu_i: f64, p_d: f64) -> f64 {
    let x = eta * mu_i;
    let keep = 1.0 - p_d;
    2.0 * keep * (-x).exp() * -((-p_d).ln_1p() - x).exp_m1()
}

/// Expected detection counts with observed frequencies equal to their means.
pub fn expected_counts(params: &ProtocolParams, config: &ExperimentConfig, point: &ChannelPoint) -> ObservedCounts {
    let n = config.n_tot;
    let code = code_rates(point.eta, params.mu, point.e_m, config.p_d);
    let sift = match config.variant {
        Variant::TwoPhase => 1.0,
        Variant::FourPhase => 0.5,
    };
    let k0 = n * params.p0 * params.p0 * code.q_mu * sift;
    let k10 = n * params.p10 * params.p10 * decoy_rate(point.eta, 0.0, config.p_d);
    let k11 = n * params.p11 * params.p11 * params.delta_over_pi * decoy_rate(point.eta, params.mu1, config.p_d);
    let k2 = n * params.delta_over_pi * params.p2 * params.p2 * decoy_rate(point.eta, params.mu2, config.p_d);
    ObservedCounts::new(k0, k10, k11, k2, k0 * code.e_bit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn transmittance_values() {
        assert_eq!(transmittance(0.0, 0.3, 0.2), 0.3);
        assert!((transmittance(100.0, 0.3, 0.2) - 0.03).abs() < 1e-15);
        assert!((transmittance(400.0, 0.3, 0.2) - 3e-5).abs() < 1e-18);
    }

    #[test]
    fn transmittance_squares_when_doubling() {
        for l in [10.0, 73.0, 250.0] {
            let a = transmittance(l, 0.3, 0.2) / 0.3;
            let b = transmittance(2.0 * l, 0.3, 0.2) / 0.3;
            assert!((b / (a * a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn e_mis_values() {
        assert!(e_mis(1e-9) < 1e-18);
        assert!((e_mis(PI / 8.0) - 0.003_206_574_4).abs() < 1e-10);
        assert!((e_mis(PI / 8.0) - (0.5 - (PI / 16.0).sin() / (PI / 8.0))).abs() < 1e-16);
        assert!((e_mis(PI) - (0.5 - 1.0 / PI)).abs() < 1e-16);
        assert!((e_mis(PI) - 0.181_690_1).abs() < 1e-7);
        // both branches agree at the switch-over
        let d = 1e-4;
        assert!((e_mis(d * 0.999_999) - (0.5 - (0.5 * d).sin() / d)).abs() < 1e-15);
    }

    #[test]
    fn dark_count_limit() {
        let r = code_rates(0.0, 0.05, 0.03, 1e-6);
        let expect = 1e-6 * (1.0 - 1e-6);
        assert!((r.q_corr / expect - 1.0).abs() < 1e-9);
        assert!((r.q_err / expect - 1.0).abs() < 1e-9);
        assert!((r.e_bit - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_error_sources() {
        let r = code_rates(0.03, 0.05, 0.0, 0.0);
        assert_eq!(r.q_err, 0.0);
        assert_eq!(r.e_bit, 0.0);
        let z = code_rates(0.0, 0.05, 0.03, 0.0);
        assert!(z.degenerate);
        assert_eq!(z.e_bit, 0.0);
    }

    #[test]
    fn plob_values() {
        assert!((plob_bound(100.0, 0.2) - -(1.0f64 - 0.01).log2()).abs() < 1e-15);
        assert!(plob_bound(0.0, 0.2).is_infinite());
        assert!(plob_bound(300.0, 0.2) < plob_bound(200.0, 0.2));
    }

    #[test]
    fn decoy_rate_values() {
        assert_eq!(decoy_rate(0.03, 0.0, 0.0), 0.0);
        assert!((decoy_rate(0.03, 0.0, 1e-8) - 2.0 * 1e-8 * (1.0 - 1e-8)).abs() < 1e-22);
        let x = 0.003f64;
        let pd = 1e-8;
        let direct = 2.0 * (1.0 - pd) * (-x).exp() * (1.0 - (1.0 - pd) * (-x).exp());
        assert!((decoy_rate(0.03, 0.1, pd) / direct - 1.0).abs() < 1e-12);
        assert!((decoy_rate(0.03, 0.1, pd) - 5.973e-3).abs() < 1e-6);
    }

    #[test]
    fn signal_dominated_bit_error() {
        let cfg = ExperimentConfig::reference(1e13, Variant::TwoPhase);
        let point = ChannelPoint::new(50.0, &cfg, PI / 8.0);
        let r = code_rates(point.eta, 0.05, point.e_m, cfg.p_d);
        assert!((r.e_bit - point.e_m).abs() / point.e_m < 0.05);
    }

    #[test]
    fn rates_are_probabilities_on_grid() {
        for i in 0..=10 {
            for j in 1..=10 {
                for k in 0..=10 {
                    for pd in [0.0, 1e-8, 1e-6, 1e-4] {
                        let eta = 0.03 * f64::from(i);
                        let mu = 0.1 * f64::from(j);
                        let e_m = 0.05 * f64::from(k);
                        let r = code_rates(eta, mu, e_m, pd);
                        assert!((0.0..=1.0).contains(&r.q_corr));
                        assert!((0.0..=1.0).contains(&r.q_err));
                        assert!(r.q_mu <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn expected_counts_products() {
        let params = ProtocolParams {
            mu: 0.05,
            mu1: 0.1,
            mu2: 0.05,
            p0: 0.5,
            p10: 0.3,
            p11: 0.15,
            p2: 0.05,
            delta_over_pi: 0.125,
        };
        let mut cfg = ExperimentConfig::reference(1e10, Variant::TwoPhase);
        let point = ChannelPoint::new(100.0, &cfg, params.delta());
        let c = expected_counts(&params, &cfg, &point);

        // hand-built products
        let eta = 0.03;
        let e_m = 0.03 + 0.97 * (0.5 - (PI / 16.0).sin() / (PI / 8.0));
        let pd = 1e-8;
        let qc =
            (1.0 - pd) * (-2.0 * eta * 0.05 * e_m).exp() * (1.0 - (1.0 - pd) * (-2.0 * eta * 0.05 * (1.0 - e_m)).exp());
        let qe =
            (1.0 - pd) * (-2.0 * eta * 0.05 * (1.0 - e_m)).exp() * (1.0 - (1.0 - pd) * (-2.0 * eta * 0.05 * e_m).exp());
        let qd = |m: f64| 2.0 * (1.0 - pd) * (-eta * m).exp() * (1.0 - (1.0 - pd) * (-eta * m).exp());
        let k0 = 1e10 * 0.25 * (qc + qe);
        let k1 = 1e10 * (0.0225 * 0.125 * qd(0.1) + 0.09 * qd(0.0));
        let k2 = 1e10 * 0.125 * 0.0025 * qd(0.05);
        assert!((c.k0 / k0 - 1.0).abs() < 1e-9);
        assert!((c.k1 / k1 - 1.0).abs() < 1e-9);
        assert!((c.k2 / k2 - 1.0).abs() < 1e-9);
        assert!((c.err0 / (k0 * qe / (qc + qe)) - 1.0).abs() < 1e-9);

        cfg.variant = Variant::FourPhase;
        let c4 = expected_counts(&params, &cfg, &point);
        assert_eq!(c4.k0, c.k0 / 2.0);
        assert_eq!(c4.k1, c.k1);

        cfg.n_tot = 0.0;
        let z = expected_counts(&params, &cfg, &point);
        assert_eq!((z.k0, z.k1, z.k2, z.err0), (0.0, 0.0, 0.0, 0.0));
    }
}
