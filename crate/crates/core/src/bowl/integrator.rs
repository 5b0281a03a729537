//! Dormand–Prince 5(4) explicit pair with per-step error control.

use crate::error::{LabError, Result};

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
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub const DIM: usize = 3;
pub type State = [f64; DIM];

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub tol: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Further caps the step at `relative_step·|t|`.
    pub relative_step: f64,
}

impl StepControl {
    fn cap(&self, t: f64) -> f64 {
        self.max_step.min(self.relative_step * t.abs()).max(self.min_step)
    }
}

/// One attempted step; `Ok(None)` when the error estimate rejects it.
fn attempt<F>(rhs: &F, t: f64, y: &State, k1: &State, h: f64, tol: f64) -> Result<Option<(State, State, f64)>>
where
    F: Fn(f64, &State) -> Result<State>,
{
    let mut k = [[0.0; DIM]; 7];
    k[0] = *k1;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for d in 0..DIM {
                ys[d] += h * A[s][j] * kj[d];
            }
        }
        k[s] = rhs(t + C[s] * h, &ys)?;
    }
    let mut y5 = *y;
    let mut err: f64 = 0.0;
    for d in 0..DIM {
        let (mut hi, mut lo) = (0.0, 0.0);
        for s in 0..7 {
            hi += B5[s] * k[s][d];
            lo += B4[s] * k[s][d];
        }
        y5[d] += h * hi;
        let scale = tol * (1.0 + y[d].abs().max(y5[d].abs()));
        err = err.max((h * (hi - lo)).abs() / scale);
    }
    Ok((err <= 1.0).then_some((y5, k[6], err)))
}

/// Integrates from `(t0, y0)` until `stop` returns true, calling `accept`
/// on every accepted node (including the initial one).
pub fn integrate<F, S, A>(
    rhs: F,
    t0: f64,
    y0: State,
    first_step: f64,
    control: StepControl,
    stop: S,
    mut accept: A,
) -> Result<()>
where
    F: Fn(f64, &State) -> Result<State>,
    S: Fn(f64, &State) -> bool,
    A: FnMut(f64, &State) -> Result<()>,
{
    let (mut t, mut y) = (t0, y0);
    let mut k1 = rhs(t, &y)?;
    accept(t, &y)?;
    let mut h = first_step.clamp(control.min_step, control.cap(t));
    while !stop(t, &y) {
        let outcome = attempt(&rhs, t, &y, &k1, h, control.tol);
        let factor = match outcome {
            Ok(Some((y_new, k_last, err))) => {
                t += h;
                y = y_new;
                k1 = k_last;
                accept(t, &y)?;
                (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0)
            }
            Ok(None) => 0.5,
            // a trial stage left the admissible region: retry with a shorter step
            Err(_) if h > control.min_step => 0.25,
            Err(e) => return Err(e),
        };
        if factor < 1.0 && h <= control.min_step {
            return Err(LabError::StepUnderflow { r: t, u: y[0], u_r: y[1] });
        }
        h = (h * factor).clamp(control.min_step, control.cap(t));
    }
    Ok(())
}

/// Classical RK4 with `steps` equal substeps; used for short local
/// re-integrations where step control is unnecessary.
pub fn rk4<F>(rhs: F, t0: f64, y0: State, t1: f64, steps: usize) -> Result<State>
where
    F: Fn(f64, &State) -> Result<State>,
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    let mut t = t0;
    let add = |y: &State, k: &State, c: f64| -> State {
        let mut out = *y;
        for d in 0..DIM {
            out[d] += c * k[d];
        }
        out
    };
    for _ in 0..steps {
        let k1 = rhs(t, &y)?;
        let k2 = rhs(t + 0.5 * h, &add(&y, &k1, 0.5 * h))?;
        let k3 = rhs(t + 0.5 * h, &add(&y, &k2, 0.5 * h))?;
        let k4 = rhs(t + h, &add(&y, &k3, h))?;
        for d in 0..DIM {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        t += h;
    }
    Ok(y)
}
