//! Round-by-round simulation of the protocol: mode and phase choices,
//! detector clicks, announcement, sifting and phase postselection.
//!
//! Rounds are split into fixed-size shards; shard `k` draws from the ChaCha8
//! stream `k` of the run seed, so tallies do not depend on how many worker
//! threads execute the shards.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelPoint};
use crate::error::Result;
use crate::params::{ExperimentConfig, ObservedCounts, ProtocolParams, Variant};

/// Rounds drawn from one RNG stream.
pub const SHARD_ROUNDS: u64 = 1 << 20;
/// Size of one trace record in bytes.
pub const TRACE_RECORD_BYTES: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Code,
    DecoyVac,
    DecoyMu1,
    DecoyMu2,
}

impl Mode {
    fn intensity(self, params: &ProtocolParams) -> f64 {
        match self {
            Mode::Code => params.mu,
            Mode::DecoyVac => 0.0,
            Mode::DecoyMu1 => params.mu1,
            Mode::DecoyMu2 => params.mu2,
        }
    }

    fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Code0,
    Decoy10,
    Decoy11,
    Decoy2,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingModel {
    /// Click probabilities taken from the analytic rate formulas.
    PaperFaithful,
    /// Per-round interference of the two pulses at the beam splitter.
    Physical,
}

impl std::str::FromStr for SamplingModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper-faithful" => Ok(SamplingModel::PaperFaithful),
            "physical" => Ok(SamplingModel::Physical),
            other => Err(format!("unknown sampling model '{other}' (paper-faithful | physical)")),
        }
    }
}

/// Everything drawn and observed in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundOutcome {
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub kappa_a: bool,
    pub kappa_b: bool,
    /// Four-phase code basis (0: {0, π}, 1: {π/2, 3π/2}); always 0 in two-phase runs.
    pub basis_a: bool,
    pub basis_b: bool,
    pub theta_a: f64,
    pub theta_b: f64,
    pub delta_b: f64,
    pub click_l: bool,
    pub click_r: bool,
    pub retained: bool,
    pub category: Category,
}

impl RoundOutcome {
    /// Fixed-width little-endian trace record.
    pub fn to_record(&self) -> [u8; TRACE_RECORD_BYTES] {
        let mut r = [0u8; TRACE_RECORD_BYTES];
        r[0] = self.mode_a.code();
        r[1] = self.mode_b.code();
        r[2] = u8::from(self.kappa_a)
            | u8::from(self.kappa_b) << 1
            | u8::from(self.basis_a) << 2
            | u8::from(self.basis_b) << 3
            | u8::from(self.retained) << 4;
        r[3] = u8::from(self.click_l) | u8::from(self.click_r) << 1;
        r[4..12].copy_from_slice(&self.theta_a.to_le_bytes());
        r[12..20].copy_from_slice(&self.theta_b.to_le_bytes());
        r[20..28].copy_from_slice(&self.delta_b.to_le_bytes());
        r
    }
}

/// Per-round constants shared by all rounds of a run.
#[derive(Debug, Clone, Copy)]
struct RoundModel {
    params: ProtocolParams,
    eta: f64,
    e_d: f64,
    keep: f64,
    model: SamplingModel,
    four_phase: bool,
    delta: f64,
    /// Closed-form probabilities: code correct/error, matched decoy single click.
    q_corr: f64,
    q_err: f64,
    q_decoy: [f64; 3],
    cum_modes: [f64; 3],
}

impl RoundModel {
    fn new(params: &ProtocolParams, point: &ChannelPoint, config: &ExperimentConfig, model: SamplingModel) -> Self {
        let code = channel::code_rates(point.eta, params.mu, point.e_m, config.p_d);
        let decoy = |m: f64| channel::decoy_rate(point.eta, m, config.p_d);
        RoundModel {
            params: *params,
            eta: point.eta,
            e_d: config.e_d,
            keep: 1.0 - config.p_d,
            model,
            four_phase: config.variant == Variant::FourPhase,
            delta: params.delta(),
            q_corr: code.q_corr,
            q_err: code.q_err,
            q_decoy: [decoy(0.0), decoy(params.mu1), decoy(params.mu2)],
            cum_modes: [params.p0, params.p0 + params.p10, params.p0 + params.p10 + params.p11],
        }
    }

    fn draw_mode<R: Rng>(&self, rng: &mut R) -> Mode {
        let u: f64 = rng.random();
        if u < self.cum_modes[0] {
            Mode::Code
        } else if u < self.cum_modes[1] {
            Mode::DecoyVac
        } else if u < self.cum_modes[2] {
            Mode::DecoyMu1
        } else {
            Mode::DecoyMu2
        }
    }

    /// Interference at the beam splitter for pulses `μ_a e^{iφ_a}`, `μ_b e^{iφ_b}`.
    /// The constructive port gets `I_tot (1 − w)`, the other `I_tot w` with
    /// `w = e_d + (1 − e_d)(1 − V|cos(φ_a − φ_b)|)/2`.
    fn physical_clicks<R: Rng>(&self, mu_a: f64, mu_b: f64, phase_diff: f64, rng: &mut R) -> (bool, bool) {
        let total = self.eta * (mu_a + mu_b);
        let (left, right) = if total > 0.0 {
            let vis = 2.0 * (mu_a * mu_b).sqrt() / (mu_a + mu_b);
            let c = vis * phase_diff.cos();
            let w = self.e_d + (1.0 - self.e_d) * 0.5 * (1.0 - c.abs());
            let (hi, lo) = (total * (1.0 - w), total * w);
            if c >= 0.0 {
                (hi, lo)
            } else {
                (lo, hi)
            }
        } else {
            (0.0, 0.0)
        };
        let click = |i: f64, rng: &mut R| rng.random::<f64>() >= self.keep * (-i).exp();
        let l = click(left, rng);
        let r = click(right, rng);
        (l, r)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> RoundOutcome {
        let p = &self.params;
        let mode_a = self.draw_mode(rng);
        let mode_b = self.draw_mode(rng);
        let mut out = RoundOutcome {
            mode_a,
            mode_b,
            kappa_a: false,
            kappa_b: false,
            basis_a: false,
            basis_b: false,
            theta_a: 0.0,
            theta_b: 0.0,
            delta_b: 0.0,
            click_l: false,
            click_r: false,
            retained: false,
            category: Category::Discarded,
        };
        // Phase each party applies to its pulse.
        let mut phase_a = 0.0;
        let mut phase_b = 0.0;
        if mode_a == Mode::Code {
            out.kappa_a = rng.random();
            out.basis_a = self.four_phase && rng.random();
            phase_a = f64::from(u8::from(out.kappa_a)) * PI + f64::from(u8::from(out.basis_a)) * FRAC_PI_2;
        } else if mode_a != Mode::DecoyVac {
            out.theta_a = rng.random::<f64>() * TAU;
            phase_a = out.theta_a;
        }
        if mode_b == Mode::Code {
            out.kappa_b = rng.random();
            out.basis_b = self.four_phase && rng.random();
            out.delta_b = (rng.random::<f64>() - 0.5) * self.delta;
            phase_b =
                f64::from(u8::from(out.kappa_b)) * PI + f64::from(u8::from(out.basis_b)) * FRAC_PI_2 + out.delta_b;
        } else if mode_b != Mode::DecoyVac {
            out.theta_b = rng.random::<f64>() * TAU;
            phase_b = out.theta_b;
        }

        let matched_code = mode_a == Mode::Code && mode_b == Mode::Code && out.basis_a == out.basis_b;
        let matched_decoy = mode_a == mode_b && mode_a != Mode::Code;
        let (l, r) = match self.model {
            SamplingModel::PaperFaithful if matched_code => {
                // correct outcome: left for equal bits, right for opposite bits
                let u: f64 = rng.random();
                let correct_left = out.kappa_a == out.kappa_b;
                if u < self.q_corr {
                    (correct_left, !correct_left)
                } else if u < self.q_corr + self.q_err {
                    (!correct_left, correct_left)
                } else {
                    (false, false)
                }
            }
            SamplingModel::PaperFaithful if matched_decoy => {
                let q = match mode_a {
                    Mode::DecoyVac => self.q_decoy[0],
                    Mode::DecoyMu1 => self.q_decoy[1],
                    _ => self.q_decoy[2],
                };
                let u: f64 = rng.random();
                if u < q {
                    let left = u < 0.5 * q;
                    (left, !left)
                } else {
                    (false, false)
                }
            }
            _ => self.physical_clicks(mode_a.intensity(p), mode_b.intensity(p), phase_a - phase_b, rng),
        };
        out.click_l = l;
        out.click_r = r;
        out.category = sift(&out, p);
        out.retained = out.category != Category::Discarded;
        out
    }
}

/// `min(d, π − d)` with `d = |θa − θb| mod π`.
pub fn phase_slice_distance(theta_a: f64, theta_b: f64) -> f64 {
    let d = (theta_a - theta_b).abs().rem_euclid(PI);
    d.min(PI - d)
}

/// Announcement and sifting of one round.
pub fn sift(outcome: &RoundOutcome, params: &ProtocolParams) -> Category {
    if outcome.click_l == outcome.click_r {
        return Category::Discarded;
    }
    let in_slice = || phase_slice_distance(outcome.theta_a, outcome.theta_b) <= 0.5 * params.delta();
    match (outcome.mode_a, outcome.mode_b) {
        (Mode::Code, Mode::Code) if outcome.basis_a == outcome.basis_b => Category::Code0,
        (Mode::DecoyVac, Mode::DecoyVac) => Category::Decoy10,
        (Mode::DecoyMu1, Mode::DecoyMu1) if in_slice() => Category::Decoy11,
        (Mode::DecoyMu2, Mode::DecoyMu2) if in_slice() => Category::Decoy2,
        _ => Category::Discarded,
    }
}

/// Bob's sifted bit: flipped on a right-detector click.
pub fn bob_bit(outcome: &RoundOutcome) -> bool {
    outcome.kappa_b ^ outcome.click_r
}

/// Integer tallies of a run; merging is plain addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTally {
    pub k0: u64,
    pub err0: u64,
    pub k10: u64,
    pub k11: u64,
    pub k2: u64,
    /// Rounds where both parties chose code mode (and, for four phases, the same basis).
    pub sent_code: u64,
    pub sent_vac: u64,
    /// Rounds with both parties at μ1 (resp. μ2), before postselection.
    pub sent_mu1: u64,
    pub sent_mu2: u64,
    /// ... and those that passed the phase postselection.
    pub slice_mu1: u64,
    pub slice_mu2: u64,
    /// Code rounds with one click, split by outcome.
    pub code_correct: u64,
    pub code_error: u64,
}

impl RawTally {
    fn add(&mut self, o: &RoundOutcome, half_slice: f64) {
        let matched_code = o.mode_a == Mode::Code && o.mode_b == Mode::Code && o.basis_a == o.basis_b;
        if matched_code {
            self.sent_code += 1;
        }
        let in_slice = || u64::from(phase_slice_distance(o.theta_a, o.theta_b) <= half_slice);
        match (o.mode_a, o.mode_b) {
            (Mode::DecoyVac, Mode::DecoyVac) => self.sent_vac += 1,
            (Mode::DecoyMu1, Mode::DecoyMu1) => {
                self.sent_mu1 += 1;
                self.slice_mu1 += in_slice();
            }
            (Mode::DecoyMu2, Mode::DecoyMu2) => {
                self.sent_mu2 += 1;
                self.slice_mu2 += in_slice();
            }
            _ => {}
        }
        match o.category {
            Category::Code0 => {
                self.k0 += 1;
                if o.kappa_a != bob_bit(o) {
                    self.err0 += 1;
                    self.code_error += 1;
                } else {
                    self.code_correct += 1;
                }
            }
            Category::Decoy10 => self.k10 += 1,
            Category::Decoy11 => self.k11 += 1,
            Category::Decoy2 => self.k2 += 1,
            Category::Discarded => {}
        }
    }

    fn merge(mut self, o: &RawTally) -> RawTally {
        self.k0 += o.k0;
        self.err0 += o.err0;
        self.k10 += o.k10;
        self.k11 += o.k11;
        self.k2 += o.k2;
        self.sent_code += o.sent_code;
        self.sent_vac += o.sent_vac;
        self.sent_mu1 += o.sent_mu1;
        self.sent_mu2 += o.sent_mu2;
        self.slice_mu1 += o.slice_mu1;
        self.slice_mu2 += o.slice_mu2;
        self.code_correct += o.code_correct;
        self.code_error += o.code_error;
        self
    }
}

/// Result of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTally {
    pub counts: ObservedCounts,
    pub raw: RawTally,
    pub n_rounds: u64,
    pub rng_seed: u64,
    pub sampling_model: SamplingModel,
}

fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

fn finish(raw: RawTally, n_rounds: u64, seed: u64, model: SamplingModel) -> SimTally {
    let c = |x: u64| x as f64;
    SimTally {
        counts: ObservedCounts::new(c(raw.k0), c(raw.k10), c(raw.k11), c(raw.k2), c(raw.err0)),
        raw,
        n_rounds,
        rng_seed: seed,
        sampling_model: model,
    }
}

/// Simulates `n_rounds` rounds, sharded over the rayon pool.
pub fn simulate(
    params: &ProtocolParams,
    config: &ExperimentConfig,
    point: &ChannelPoint,
    n_rounds: u64,
    seed: u64,
    model: SamplingModel,
) -> Result<SimTally> {
    params.ensure_valid()?;
    let rm = RoundModel::new(params, point, config, model);
    let shards = n_rounds.div_ceil(SHARD_ROUNDS);
    let raw = (0..shards)
        .into_par_iter()
        .map(|k| run_shard(&rm, seed, k, n_rounds, None::<&mut Vec<u8>>).expect("no trace sink"))
        .collect::<Vec<_>>()
        .iter()
        .fold(RawTally::default(), |acc, t| acc.merge(t));
    Ok(finish(raw, n_rounds, seed, model))
}

/// Like [`simulate`], additionally writing one trace record per round to `trace`.
/// Runs on the calling thread.
pub fn simulate_traced<W: Write>(
    params: &ProtocolParams,
    config: &ExperimentConfig,
    point: &ChannelPoint,
    n_rounds: u64,
    seed: u64,
    model: SamplingModel,
    mut trace: W,
) -> Result<SimTally> {
    params.ensure_valid()?;
    let rm = RoundModel::new(params, point, config, model);
    let mut raw = RawTally::default();
    for k in 0..n_rounds.div_ceil(SHARD_ROUNDS) {
        raw = raw.merge(&run_shard(&rm, seed, k, n_rounds, Some(&mut trace))?);
    }
    trace.flush()?;
    Ok(finish(raw, n_rounds, seed, model))
}

fn run_shard<W: Write>(
    rm: &RoundModel,
    seed: u64,
    shard: u64,
    n_rounds: u64,
    mut trace: Option<W>,
) -> Result<RawTally> {
    let mut rng = shard_rng(seed, shard);
    let start = shard * SHARD_ROUNDS;
    let end = (start + SHARD_ROUNDS).min(n_rounds);
    let half_slice = 0.5 * rm.delta;
    let mut t = RawTally::default();
    for _ in start..end {
        let o = rm.sample(&mut rng);
        t.add(&o, half_slice);
        if let Some(w) = trace.as_mut() {
            w.write_all(&o.to_record())?;
        }
    }
    Ok(t)
}

/// Draws a single round; exposed for inspection and tests.
pub fn sample_round<R: Rng>(
    params: &ProtocolParams,
    point: &ChannelPoint,
    config: &ExperimentConfig,
    model: SamplingModel,
    rng: &mut R,
) -> RoundOutcome {
    RoundModel::new(params, point, config, model).sample(rng)
}

/// Code-mode-only run: both parties always send code pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodeTally {
    pub rounds: u64,
    pub correct: u64,
    pub error: u64,
    pub double: u64,
}

/// Samples `n_rounds` code rounds (matched bases), counting single clicks
/// that yield a correct or a wrong bit, and double clicks.
pub fn simulate_code_rounds(
    params: &ProtocolParams,
    config: &ExperimentConfig,
    point: &ChannelPoint,
    n_rounds: u64,
    seed: u64,
    model: SamplingModel,
) -> Result<CodeTally> {
    params.ensure_valid()?;
    let mut code_only = *params;
    code_only.p0 = 1.0;
    let mut cfg = *config;
    cfg.variant = Variant::TwoPhase;
    let rm = RoundModel::new(&code_only, point, &cfg, model);
    let shards = n_rounds.div_ceil(SHARD_ROUNDS);
    let parts: Vec<CodeTally> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = shard_rng(seed, k);
            let start = k * SHARD_ROUNDS;
            let end = (start + SHARD_ROUNDS).min(n_rounds);
            let mut t = CodeTally {
                rounds: end - start,
                correct: 0,
                error: 0,
                double: 0,
            };
            for _ in start..end {
                let o = rm.sample(&mut rng);
                match (o.click_l, o.click_r) {
                    (true, true) => t.double += 1,
                    (false, false) => {}
                    _ if o.kappa_a == bob_bit(&o) => t.correct += 1,
                    _ => t.error += 1,
                }
            }
            t
        })
        .collect();
    Ok(parts.iter().fold(
        CodeTally {
            rounds: 0,
            correct: 0,
            error: 0,
            double: 0,
        },
        |a, b| CodeTally {
            rounds: a.rounds + b.rounds,
            correct: a.correct + b.correct,
            error: a.error + b.error,
            double: a.double + b.double,
        },
    ))
}

/// Reads a trace written by [`simulate_traced`] back into
/// `(mode_a, mode_b, bits, clicks, θa, θb, δb)` tuples.
pub fn read_trace(bytes: &[u8]) -> Vec<(u8, u8, u8, u8, f64, f64, f64)> {
    bytes
        .chunks_exact(TRACE_RECORD_BYTES)
        .map(|r| {
            let f = |i: usize| f64::from_le_bytes(r[i..i + 8].try_into().expect("8 bytes"));
            (r[0], r[1], r[2], r[3], f(4), f(12), f(20))
        })
        .collect()
}
