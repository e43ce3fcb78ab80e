//! Protocol parameters, experiment configuration and the validity rules
//! shared by every other module.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed slack on `p0 + p10 + p11 + p2 = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// The optimizable protocol tuple.
///
/// The phase-slice width is stored as a fraction of π, the same way it is
/// written in configuration files; [`ProtocolParams::delta`] gives radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Code-mode intensity.
    pub mu: f64,
    /// Stronger decoy intensity.
    pub mu1: f64,
    /// Weaker decoy intensity.
    pub mu2: f64,
    /// Probability of the code mode.
    pub p0: f64,
    /// Probability of the vacuum decoy.
    pub p10: f64,
    /// Probability of the `mu1` decoy.
    pub p11: f64,
    /// Probability of the `mu2` decoy.
    pub p2: f64,
    /// Phase-slice width Δ divided by π, in (0, 1].
    pub delta_over_pi: f64,
}

impl ProtocolParams {
    /// Phase-slice width in radians.
    pub fn delta(&self) -> f64 {
        self.delta_over_pi * std::f64::consts::PI
    }

    /// Parameters as a flat array in declaration order.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.mu,
            self.mu1,
            self.mu2,
            self.p0,
            self.p10,
            self.p11,
            self.p2,
            self.delta_over_pi,
        ]
    }

    fn named_fields(&self) -> [(&'static str, f64); 8] {
        [
            ("mu", self.mu),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("p0", self.p0),
            ("p10", self.p10),
            ("p11", self.p11),
            ("p2", self.p2),
            ("delta_over_pi", self.delta_over_pi),
        ]
    }

    /// Checks every validity constraint and lists the ones that fail.
    ///
    /// Non-finite fields are rejected with [`Error::NonFinite`] rather than
    /// reported as violations.
    pub fn validate(&self) -> Result<ValidityReport> {
        for (name, value) in self.named_fields() {
            if !value.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }

        let mut violations = Vec::new();
        let mut check = |constraint: Constraint, margin: f64, ok: bool| {
            if !ok {
                violations.push(Violation { constraint, margin });
            }
        };

        for (name, value) in self.named_fields() {
            check(Constraint::Positive(name), value, value > 0.0);
        }
        check(
            Constraint::DeltaAtMostPi,
            1.0 - self.delta_over_pi,
            self.delta_over_pi <= 1.0,
        );

        let sum = self.p0 + self.p10 + self.p11 + self.p2;
        let slack = PROBABILITY_SUM_TOL - (sum - 1.0).abs();
        check(Constraint::ProbabilitySum, slack, slack >= 0.0);

        check(Constraint::Mu1AtMostOne, 1.0 - self.mu1, self.mu1 <= 1.0);
        check(Constraint::Mu2BelowMu1, self.mu1 - self.mu2, self.mu2 < self.mu1);
        check(Constraint::MuBelowMu1, self.mu1 - self.mu, self.mu < self.mu1);

        // Only meaningful once the quantities it divides by are positive.
        if self.mu2 > 0.0 && self.p11 > 0.0 && self.delta_over_pi > 0.0 {
            let lhs = (self.mu1 - self.mu2) / self.mu2;
            let rhs = self.p10 * self.p10 / (self.p11 * self.p11 * self.delta_over_pi * (-2.0 * self.mu1).exp());
            check(Constraint::VacuumDominance, rhs - lhs, lhs < rhs);
        }

        Ok(ValidityReport { violations })
    }

    /// Like [`validate`](Self::validate) but turns any violation into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate()?;
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report))
        }
    }
}

/// A single validity rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Positive(&'static str),
    DeltaAtMostPi,
    ProbabilitySum,
    Mu1AtMostOne,
    Mu2BelowMu1,
    MuBelowMu1,
    /// `(μ1 − μ2)/μ2 < p10² / (p11² (Δ/π) e^{−2μ1})`, i.e. `q_0 > 0`.
    VacuumDominance,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Positive(name) => write!(f, "{name} > 0"),
            Constraint::DeltaAtMostPi => f.write_str("Δ ≤ π"),
            Constraint::ProbabilitySum => f.write_str("probabilities sum to 1"),
            Constraint::Mu1AtMostOne => f.write_str("μ1 ≤ 1"),
            Constraint::Mu2BelowMu1 => f.write_str("μ2 < μ1"),
            Constraint::MuBelowMu1 => f.write_str("μ < μ1"),
            Constraint::VacuumDominance => f.write_str("(μ1 − μ2)/μ2 < p10² / (p11² (Δ/π) e^{−2μ1})"),
        }
    }
}

/// A failed constraint together with its signed slack (negative or zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, constraint: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("all constraints hold");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "violated `{}` (margin {:.3e})", v.constraint, v.margin)?;
        }
        Ok(())
    }
}

/// Which code-mode encoding is analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Phases {0, π}.
    #[default]
    TwoPhase,
    /// Phases {0, π} or {π/2, −π/2} with basis sifting.
    FourPhase,
}

/// Base of the logarithm in the `√(−log ε)` fluctuation terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LogBase {
    #[default]
    #[serde(rename = "e")]
    Natural,
    #[serde(rename = "2")]
    Two,
}

impl LogBase {
    /// `−log(x)` in this base.
    pub fn neg_log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => -x.ln(),
            LogBase::Two => -x.log2(),
        }
    }
}

/// Fixed physical and security constants of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Number of pulse pairs sent.
    pub n_tot: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Dark-count probability per detector per pulse.
    pub p_d: f64,
    /// Intrinsic misalignment error.
    pub e_d: f64,
    pub loss_db_per_km: f64,
    /// Error-correction inefficiency.
    pub f_cor: f64,
    /// Failure probability of the phase-error bound.
    pub epsilon: f64,
    /// Privacy-amplification slack bits.
    pub zeta: u32,
    /// Error-verification hash bits.
    pub zeta_prime: u32,
    pub variant: Variant,
    #[serde(default)]
    pub log_base: LogBase,
}

impl ExperimentConfig {
    /// Detector, fiber and security constants used for the published
    /// rate-distance curves (η_d = 0.3, p_d = 1e−8, e_d = 0.03, 0.2 dB/km,
    /// f_cor = 1.1, ε = 2^−66, ζ = 66, ζ′ = 32).
    pub fn reference(n_tot: f64, variant: Variant) -> Self {
        ExperimentConfig {
            n_tot,
            eta_d: 0.3,
            p_d: 1e-8,
            e_d: 0.03,
            loss_db_per_km: 0.2,
            f_cor: 1.1,
            epsilon: 2f64.powi(-66),
            zeta: 66,
            zeta_prime: 32,
            variant,
            log_base: LogBase::Natural,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("eta_d", self.eta_d),
            ("p_d", self.p_d),
            ("e_d", self.e_d),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in probs {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is not a probability")));
            }
        }
        for (name, v) in [
            ("n_tot", self.n_tot),
            ("loss_db_per_km", self.loss_db_per_km),
            ("f_cor", self.f_cor),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        if self.n_tot < 1.0 {
            return Err(Error::Config(format!("n_tot = {} must be ≥ 1", self.n_tot)));
        }
        if self.loss_db_per_km < 0.0 {
            return Err(Error::Config("loss_db_per_km must be nonnegative".into()));
        }
        if self.f_cor < 1.0 {
            return Err(Error::Config(format!("f_cor = {} must be ≥ 1", self.f_cor)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.zeta == 0 || self.zeta_prime == 0 {
            return Err(Error::Config("zeta and zeta_prime must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon_budget(&self) -> EpsilonBudget {
        epsilon_budget(self.epsilon, self.zeta, self.zeta_prime)
    }
}

/// Security parameters of the final key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub eps_sct: f64,
    pub eps_cor: f64,
    pub eps_sec: f64,
}

/// `ε_sct = √2·√(ε + 2^−ζ)`, `ε_cor = 2^−ζ′`, `ε_sec = ε_sct + ε_cor`.
pub fn epsilon_budget(epsilon: f64, zeta: u32, zeta_prime: u32) -> EpsilonBudget {
    let pow2 = |k: u32| 2f64.powi(-(k.min(i32::MAX as u32) as i32));
    let eps_sct = std::f64::consts::SQRT_2 * (epsilon + pow2(zeta)).sqrt();
    let eps_cor = pow2(zeta_prime);
    EpsilonBudget {
        eps_sct,
        eps_cor,
        eps_sec: eps_sct + eps_cor,
    }
}

/// Detection tallies, either expected values or Monte Carlo observations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservedCounts {
    /// Sifted code-mode successes.
    pub k0: f64,
    /// Vacuum–vacuum decoy successes.
    pub k10: f64,
    /// Postselected `mu1`–`mu1` successes.
    pub k11: f64,
    /// `k10 + k11`.
    pub k1: f64,
    /// Postselected `mu2`–`mu2` successes.
    pub k2: f64,
    /// Erroneous sifted bits.
    pub err0: f64,
}

impl ObservedCounts {
    pub fn new(k0: f64, k10: f64, k11: f64, k2: f64, err0: f64) -> Self {
        ObservedCounts {
            k0,
            k10,
            k11,
            k1: k10 + k11,
            k2,
            err0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.k0, self.k10, self.k11, self.k1, self.k2, self.err0];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::domain("counts must be finite and nonnegative"));
        }
        if (self.k1 - (self.k10 + self.k11)).abs() > 1e-9 * self.k1.max(1.0) {
            return Err(Error::domain("k1 must equal k10 + k11"));
        }
        if self.err0 > self.k0 {
            return Err(Error::domain("err0 exceeds k0"));
        }
        Ok(())
    }

    /// Observed bit error rate `err0 / k0` (0 when nothing was sifted).
    pub fn bit_error_rate(&self) -> f64 {
        if self.k0 > 0.0 {
            self.err0 / self.k0
        } else {
            0.0
        }
    }
}

/// Contents of a run configuration file.
///
/// Every key is optional; experiment constants default to
/// [`ExperimentConfig::reference`] and the protocol tuple is only present
/// when all eight of its keys are.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mu: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub p0: Option<f64>,
    pub p10: Option<f64>,
    pub p11: Option<f64>,
    pub p2: Option<f64>,
    pub delta_over_pi: Option<f64>,
    pub n_tot: Option<f64>,
    pub eta_d: Option<f64>,
    pub p_d: Option<f64>,
    pub e_d: Option<f64>,
    pub loss_db_per_km: Option<f64>,
    pub f_cor: Option<f64>,
    pub log2_epsilon: Option<f64>,
    pub zeta: Option<u32>,
    pub zeta_prime: Option<u32>,
    pub variant: Option<Variant>,
    pub log_base: Option<LogBase>,
    pub distance_km: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Protocol tuple if all eight keys are set; an error if only some are.
    pub fn params(&self) -> Result<Option<ProtocolParams>> {
        let fields = [
            self.mu,
            self.mu1,
            self.mu2,
            self.p0,
            self.p10,
            self.p11,
            self.p2,
            self.delta_over_pi,
        ];
        match fields.iter().filter(|f| f.is_some()).count() {
            0 => Ok(None),
            8 => Ok(Some(ProtocolParams {
                mu: self.mu.unwrap(),
                mu1: self.mu1.unwrap(),
                mu2: self.mu2.unwrap(),
                p0: self.p0.unwrap(),
                p10: self.p10.unwrap(),
                p11: self.p11.unwrap(),
                p2: self.p2.unwrap(),
                delta_over_pi: self.delta_over_pi.unwrap(),
            })),
            _ => Err(Error::Config(
                "protocol parameters must be given all together \
                 (mu, mu1, mu2, p0, p10, p11, p2, delta_over_pi)"
                    .into(),
            )),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::reference(self.n_tot.unwrap_or(1e13), self.variant.unwrap_or_default());
        if let Some(v) = self.eta_d {
            cfg.eta_d = v;
        }
        if let Some(v) = self.p_d {
            cfg.p_d = v;
        }
        if let Some(v) = self.e_d {
            cfg.e_d = v;
        }
        if let Some(v) = self.loss_db_per_km {
            cfg.loss_db_per_km = v;
        }
        if let Some(v) = self.f_cor {
            cfg.f_cor = v;
        }
        if let Some(v) = self.log2_epsilon {
            cfg.epsilon = v.exp2();
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.zeta_prime {
            cfg.zeta_prime = v;
        }
        if let Some(v) = self.log_base {
            cfg.log_base = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ProtocolParams {
        ProtocolParams {
            mu: 0.05,
            mu1: 0.1,
            mu2: 0.05,
            p0: 0.5,
            p10: 0.3,
            p11: 0.15,
            p2: 0.05,
            delta_over_pi: 0.125,
        }
    }

    #[test]
    fn example_tuple_is_valid() {
        // vacuum-dominance slack by hand: (0.1-0.05)/0.05 = 1 < 0.09/(0.0225*0.125*e^-0.2) ≈ 39.1
        let report = example().validate().unwrap();
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn equal_decoys_rejected() {
        let p = ProtocolParams {
            mu1: 0.1,
            mu2: 0.1,
            ..example()
        };
        let report = p.validate().unwrap();
        assert!(report.violates(Constraint::Mu2BelowMu1));
        assert!(report.to_string().contains("μ2 < μ1"));
    }

    #[test]
    fn probability_sum_rejected() {
        let p = ProtocolParams { p11: 0.3, ..example() };
        let report = p.validate().unwrap();
        assert!(report.violates(Constraint::ProbabilitySum));
        assert!(report.to_string().contains("probabilities sum to 1"));
    }

    #[test]
    fn vacuum_dominance_violation_named() {
        let p = ProtocolParams {
            mu: 0.01,
            mu1: 0.9,
            mu2: 0.02,
            p0: 0.4,
            p10: 0.01,
            p11: 0.5,
            p2: 0.09,
            delta_over_pi: 1.0,
        };
        let report = p.validate().unwrap();
        assert!(report.violates(Constraint::VacuumDominance));
        let v = report
            .violations
            .iter()
            .find(|v| v.constraint == Constraint::VacuumDominance);
        assert!(v.unwrap().margin < 0.0);
    }

    #[test]
    fn mu_must_stay_below_mu1() {
        let p = ProtocolParams { mu: 0.1, ..example() };
        assert!(p.validate().unwrap().violates(Constraint::MuBelowMu1));
    }

    #[test]
    fn non_finite_rejected_distinctly() {
        let p = ProtocolParams {
            mu: f64::NAN,
            ..example()
        };
        assert!(matches!(p.validate(), Err(Error::NonFinite("mu"))));
    }

    #[test]
    fn reference_budget() {
        let b = ExperimentConfig::reference(1e13, Variant::TwoPhase).epsilon_budget();
        assert_eq!(b.eps_cor, 2f64.powi(-32));
        assert!((b.eps_sct / 2f64.powi(-32) - 1.0).abs() < 1e-14);
        assert!((b.eps_sec / 2f64.powi(-31) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn budget_small_example() {
        let b = epsilon_budget(2f64.powi(-10), 10, 10);
        // √2·√(2·2^-10) = 2^-4
        assert!((b.eps_sct - 2f64.powi(-4)).abs() < 1e-15);
        assert!((b.eps_sec - (2f64.powi(-4) + 2f64.powi(-10))).abs() < 1e-15);
    }

    #[test]
    fn budget_vanishes() {
        let b = epsilon_budget(0.0, 2000, 2000);
        assert_eq!(b.eps_sct, 0.0);
        assert_eq!(b.eps_sec, 0.0);
    }

    #[test]
    fn budget_monotone() {
        let base = epsilon_budget(1e-10, 30, 30).eps_sec;
        assert!(epsilon_budget(1e-10, 31, 30).eps_sec < base);
        assert!(epsilon_budget(1e-10, 30, 31).eps_sec < base);
        assert!(epsilon_budget(2e-10, 30, 30).eps_sec > base);
    }

    #[test]
    fn config_file_roundtrip() {
        let cfg = ConfigFile::parse(
            r#"
            mu = 0.05
            mu1 = 0.1
            mu2 = 0.05
            p0 = 0.5
            p10 = 0.3
            p11 = 0.15
            p2 = 0.05
            delta_over_pi = 0.125
            n_tot = 1e15
            log2_epsilon = -66
            variant = "four-phase"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.params().unwrap(), Some(example()));
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.n_tot, 1e15);
        assert_eq!(exp.variant, Variant::FourPhase);
        assert_eq!(exp.epsilon, 2f64.powi(-66));
    }

    #[test]
    fn partial_params_rejected() {
        let cfg = ConfigFile::parse("mu = 0.1\nmu1 = 0.2").unwrap();
        assert!(cfg.params().is_err());
        assert!(ConfigFile::parse("bogus = 1").is_err());
    }

    #[test]
    fn counts_invariants() {
        let c = ObservedCounts::new(100.0, 3.0, 4.0, 5.0, 2.0);
        assert_eq!(c.k1, 7.0);
        c.check().unwrap();
        let bad = ObservedCounts { err0: 200.0, ..c };
        assert!(bad.check().is_err());
    }
}
