//! Finite-difference gradient checking at 64-bit precision, using the
//! fourth-order central stencil `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`.
//!
//! The checked function must be differentiable at the given point. Kinks
//! such as `|x|` at zero or ReLU at zero produce meaningless comparisons.

use crate::error::{ChimeError, Result};

use super::{Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// (parameter index, flat entry index) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

fn eval<F>(f: &F, params: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out).data()[0];
    if !v.is_finite() {
        return Err(ChimeError::Numeric(format!("non-finite function value {v}")));
    }
    Ok(v)
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `eps` for every entry of every tensor in `params`.
///
/// Relative error per entry is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(ChimeError::Argument(format!("eps must be positive, got {eps}")));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(ChimeError::Numeric("non-finite parameter".into()));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| tape.leaf(p.clone().with_grad()))
        .collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).data()[0].is_finite() {
        return Err(ChimeError::Numeric("non-finite function value".into()));
    }
    let grads = tape.backward(out)?;

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            let mut at = |delta: f64| {
                work[pi].data_mut()[j] = orig + delta;
                eval(&f, &work)
            };
            let (p1, m1, p2, m2) = (at(eps)?, at(-eps)?, at(2.0 * eps)?, at(-2.0 * eps)?);
            work[pi].data_mut()[j] = orig;

            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let a = analytic.map_or(0.0, |g| g[j]);
            if !a.is_finite() {
                return Err(ChimeError::Numeric(format!("non-finite gradient at param {pi}[{j}]")));
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.entries += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, j);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
