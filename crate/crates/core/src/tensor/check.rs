use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::error::invalid;
use crate::{Error, Result};

/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences with step `h` and returns the maximum relative error.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_difference_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(x), h)
}

/// Multi-input form of [`finite_difference_check`]; every coordinate of every
/// input is perturbed.
pub fn finite_difference_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(invalid!("finite-difference step must be positive, got {h}"));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item().ok_or(Error::NonScalarRoot(tape.value(out).len()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var)?;
        for i in 0..inputs[which].len() {
            let orig = inputs[which].data()[i];
            work[which].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[which].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}
