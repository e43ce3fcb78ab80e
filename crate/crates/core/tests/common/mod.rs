#![allow(dead_code)]

use serde::Deserialize;
use tfqkd::ProtocolParams;

#[derive(Debug, Deserialize)]
pub struct LambdaCase {
    #[serde(flatten)]
    pub params: ProtocolParams,
    pub lambda_two_phase: f64,
    pub lambda_four_phase: f64,
}

#[derive(Debug, Deserialize)]
pub struct PipelineExpect {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub e_bit: f64,
    pub f: f64,
    pub e_ph: f64,
    pub g: f64,
    pub lambda_: f64,
    pub gamma: f64,
}

#[derive(Debug, Deserialize)]
pub struct PipelineCase {
    pub params: ProtocolParams,
    pub distance_km: f64,
    pub n_tot: f64,
    pub two_phase: PipelineExpect,
    pub four_phase: PipelineExpect,
}

pub fn lambda_cases() -> Vec<LambdaCase> {
    serde_json::from_str(include_str!("../data/lambda_oracle.json")).expect("lambda fixture parses")
}

pub fn pipeline_case() -> PipelineCase {
    serde_json::from_str(include_str!("../data/pipeline_oracle.json")).expect("pipeline fixture parses")
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}
