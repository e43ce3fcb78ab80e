//! Budgeted Nelder–Mead maximiser with adaptive coefficients.
//!
//! The objective may return `−∞` to reject a point. The search stops only
//! when the evaluation budget is spent: whenever the simplex collapses it is
//! rebuilt around the best vertex, so a run with a larger budget replays the
//! smaller run exactly and then keeps going.

/// Settings of one budgeted run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Rebuild the simplex once its diameter drops below this.
    pub x_tol: f64,
    /// ... or once the vertex values agree to this relative spread.
    pub f_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            initial_step: 0.5,
            x_tol: 1e-7,
            f_tol: 1e-10,
            max_evals: 4000,
        }
    }
}

/// Best point of a run and how the best value evolved.
#[derive(Debug, Clone, PartialEq)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// `(evaluation index, best value)` each time the best improved.
    pub improvements: Vec<(usize, f64)>,
}

struct Counted<F> {
    f: F,
    evals: usize,
    max_evals: usize,
    best_x: Vec<f64>,
    best: f64,
    improvements: Vec<(usize, f64)>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.evals >= self.max_evals {
            return None;
        }
        self.evals += 1;
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if v > self.best || self.best_x.is_empty() {
            if v > self.best {
                self.improvements.push((self.evals, v));
            }
            self.best = v;
            self.best_x = x.to_vec();
        }
        Some(v)
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
}

impl NelderMead {
    /// Maximises `f` starting from `x0`.
    pub fn maximize<F: FnMut(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> NmOutcome {
        let n = x0.len();
        let mut obj = Counted {
            f,
            evals: 0,
            max_evals: self.max_evals,
            best_x: Vec::new(),
            best: f64::NEG_INFINITY,
            improvements: Vec::new(),
        };
        if n == 0 {
            let value = obj.eval(x0).unwrap_or(f64::NEG_INFINITY);
            return NmOutcome {
                x: Vec::new(),
                value,
                evals: obj.evals,
                improvements: obj.improvements,
            };
        }
        let nf = n as f64;
        let (alpha, beta, gamma, shrink) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

        let mut center = x0.to_vec();
        let mut step = self.initial_step;
        'outer: loop {
            // Build a simplex around `center`; vertices are kept sorted best first.
            let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let mut v = center.clone();
                if i > 0 {
                    v[i - 1] += step;
                }
                let Some(fv) = obj.eval(&v) else { break 'outer };
                simplex.push((v, fv));
            }
            loop {
                simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
                let best = simplex[0].1;
                let worst = simplex[n].1;
                let diameter = simplex[1..]
                    .iter()
                    .map(|(v, _)| {
                        v.iter()
                            .zip(&simplex[0].0)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max);
                let flat = best.is_finite()
                    && worst.is_finite()
                    && (best - worst).abs() <= self.f_tol * best.abs().max(1e-300);
                let stuck = !best.is_finite();
                if diameter < self.x_tol || flat || stuck {
                    center = obj.best_x.clone();
                    // A collapse with no finite vertex means the start is rejected
                    // everywhere nearby; widen instead of narrowing.
                    step = if stuck {
                        (step * 2.0).min(4.0)
                    } else {
                        self.initial_step
                    };
                    continue 'outer;
                }

                let mut centroid = vec![0.0; n];
                for (v, _) in &simplex[..n] {
                    for (c, x) in centroid.iter_mut().zip(v) {
                        *c += x / nf;
                    }
                }
                let worst_v = simplex[n].0.clone();
                let xr = lerp(&centroid, &worst_v, -alpha);
                let Some(fr) = obj.eval(&xr) else { break 'outer };
                if fr > simplex[0].1 {
                    let xe = lerp(&centroid, &worst_v, -alpha * beta);
                    let Some(fe) = obj.eval(&xe) else { break 'outer };
                    simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
                    continue;
                }
                if fr > simplex[n - 1].1 {
                    simplex[n] = (xr, fr);
                    continue;
                }
                let outside = fr > worst;
                let xc = if outside {
                    lerp(&centroid, &worst_v, -alpha * gamma)
                } else {
                    lerp(&centroid, &worst_v, gamma)
                };
                let Some(fc) = obj.eval(&xc) else { break 'outer };
                if (outside && fc >= fr) || (!outside && fc > worst) {
                    simplex[n] = (xc, fc);
                    continue;
                }
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let v = lerp(&anchor, &vertex.0, shrink);
                    let Some(fv) = obj.eval(&v) else { break 'outer };
                    *vertex = (v, fv);
                }
            }
        }
        NmOutcome {
            x: obj.best_x,
            value: obj.best,
            evals: obj.evals,
            improvements: obj.improvements,
        }
    }
}
