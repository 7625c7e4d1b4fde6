//! Central finite-difference verification of tape gradients.

use std::fmt;

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Perturbation applied on each side of a coordinate.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator. Gradients smaller than
    /// this are compared in absolute terms, since finite differences cannot
    /// resolve them relative to the function's rounding noise.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<6} {:<28} rel={:.3e} abs={:.3e}",
                if p.passed { "ok" } else { "FAIL" },
                p.name,
                p.max_rel_err,
                p.max_abs_err
            )?;
        }
        Ok(())
    }
}

/// Relative error between an analytic and a numeric derivative. Two exact
/// zeros compare as 0.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(f: &F, values: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
    let root = f(&mut tape, &vars)?;
    tape.value(root).item()
}

/// Compares the tape gradient of the scalar function `f` against central
/// differences for every coordinate of every named parameter.
///
/// `f` receives one leaf per entry of `params`, in order, and must return a
/// single-element node.
pub fn finite_diff_check<F>(
    f: F,
    params: &[(String, Tensor)],
    options: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if options.step <= 0.0 {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let mut values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();

    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut report = GradCheckReport {
        params: Vec::with_capacity(params.len()),
        tolerance: options.tolerance,
    };
    for (p, (name, _)) in params.iter().enumerate() {
        let analytic = grads
            .get(vars[p])
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; values[p].len()]);
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for k in 0..values[p].len() {
            let original = values[p].data()[k];
            values[p].data_mut()[k] = original + options.step;
            let plus = evaluate(&f, &values)?;
            values[p].data_mut()[k] = original - options.step;
            let minus = evaluate(&f, &values)?;
            values[p].data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * options.step);
            max_abs = max_abs.max((analytic[k] - numeric).abs());
            max_rel = max_rel.max(relative_error(analytic[k], numeric, options.floor));
        }
        report.params.push(ParamCheck {
            name: name.clone(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel <= options.tolerance,
        });
    }
    Ok(report)
}
