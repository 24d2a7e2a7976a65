//! Central finite-difference gradient verification.

use rand::seq::index::sample;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::{stream_rng, Stream};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so that gradients which are zero
/// analytically are compared in absolute terms instead of dividing by ~0.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Coordinates probed per input when the input is larger than this.
pub const MAX_PROBES_PER_INPUT: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// `(input index, flat coordinate)` of the worst probe.
    pub worst: Option<(usize, usize)>,
    /// Set when the function itself failed; the check then counts as failed.
    pub error: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.error.is_none() && self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare the tape gradient of the scalar built by `f` against central
/// differences. Every coordinate is probed for small inputs; larger inputs get
/// a seeded random subset of [`MAX_PROBES_PER_INPUT`] coordinates.
pub fn grad_check<F>(name: &str, inputs: &[Tensor], seed: u64, f: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    match run(inputs, seed, &f) {
        Ok((max_rel_error, coords_checked, worst)) => GradCheckReport {
            name: name.to_string(),
            max_rel_error,
            coords_checked,
            worst,
            error: None,
        },
        Err(e) => GradCheckReport {
            name: name.to_string(),
            max_rel_error: f64::INFINITY,
            coords_checked: 0,
            worst: None,
            error: Some(e.to_string()),
        },
    }
}

fn eval<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    Ok(tape.value(root).item())
}

type Outcome = (f64, usize, Option<(usize, usize)>);

fn run<F>(inputs: &[Tensor], seed: u64, f: &F) -> Result<Outcome>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut max_err = 0.0f64;
    let mut worst = None;
    let mut checked = 0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (idx, var) in vars.iter().enumerate() {
        let zeros;
        let analytic = match grads.get(*var) {
            Some(g) => g,
            None => {
                zeros = Tensor::zeros(inputs[idx].shape());
                &zeros
            }
        };
        let len = inputs[idx].len();
        let coords: Vec<usize> = if len <= MAX_PROBES_PER_INPUT {
            (0..len).collect()
        } else {
            let mut rng = stream_rng(seed, Stream::GradCheck, &[idx as u64]);
            let mut c = sample(&mut rng, len, MAX_PROBES_PER_INPUT).into_vec();
            c.sort_unstable();
            c
        };
        for c in coords {
            let orig = inputs[idx].data()[c];
            work[idx].data_mut()[c] = orig + FD_STEP;
            let plus = eval(&work, f)?;
            work[idx].data_mut()[c] = orig - FD_STEP;
            let minus = eval(&work, f)?;
            work[idx].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(analytic.data()[c], numeric);
            checked += 1;
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some((idx, c));
            }
        }
    }
    Ok((max_err, checked, worst))
}
