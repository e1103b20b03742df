//! Dormand-Prince 5(4) with PI step-size control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub first_step: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_step: 1e-3, first_step: 1e-5 }
    }
}

/// Smallest step before giving up.
pub const MIN_STEP: f64 = 1e-12;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `x' = rhs(t, x)` from `t0` to `t1`, calling `accept(t, x)` at
/// the start point and every accepted step.
///
/// A failing right-hand side inside a trial step counts as a rejection; the
/// error is returned only once the step has shrunk below [`MIN_STEP`].
/// Returns the number of accepted steps.
pub fn integrate<F, G>(mut rhs: F, t0: f64, t1: f64, x0: &[f64], ctl: &StepControl, mut accept: G) -> Result<usize>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = x0.len();
    let mut t = t0;
    let mut x = x0.to_vec();
    accept(t, &x)?;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = rhs(t, &x)?;
    let mut h = ctl.first_step.min(ctl.max_step);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0;
    let mut stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut last_failure: Option<Error> = None;
    while t < t1 {
        let finishing = t + h >= t1;
        if finishing {
            h = t1 - t;
        }
        let mut failed = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                stage[i] = x[i] + h * acc;
            }
            match rhs(t + C[s] * h, &stage) {
                Ok(v) => k[s] = v,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        let err = if failed.is_some() {
            f64::INFINITY
        } else {
            // Stage 7 is evaluated at the fifth-order solution.
            x_new.copy_from_slice(&stage);
            let mut sum = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for j in 0..7 {
                    e += E[j] * k[j][i];
                }
                let sc = ctl.abs_tol + ctl.rel_tol * x[i].abs().max(x_new[i].abs());
                sum += (h * e / sc).powi(2);
            }
            (sum / n as f64).sqrt()
        };
        if err <= 1.0 {
            t = if finishing { t1 } else { t + h };
            std::mem::swap(&mut x, &mut x_new);
            k.swap(0, 6);
            steps += 1;
            accept(t, &x)?;
            let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.17) * err_prev.powf(0.04) };
            h *= fac.clamp(0.2, 5.0);
            err_prev = err.max(1e-4);
            last_failure = None;
        } else {
            if let Some(e) = failed {
                last_failure = Some(e);
                h *= 0.25;
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
            if h < MIN_STEP {
                return Err(last_failure.unwrap_or(Error::StepSizeUnderflow { t }));
            }
        }
        h = h.min(ctl.max_step);
    }
    Ok(steps)
}
