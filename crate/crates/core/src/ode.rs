//! Adaptive time integration of the patch dynamics.
//!
//! Uses the Dormand–Prince embedded Runge–Kutta 4(5) pair with standard
//! step-size control and a steady-state early exit: integration stops once
//! the max-norm of the vector field drops below [`STEADY_STATE_TOL`].

use crate::error::{Error, Result};
use crate::model::Model;

pub const REL_TOL: f64 = 1e-8;
pub const ABS_TOL: f64 = 1e-10;
pub const STEADY_STATE_TOL: f64 = 1e-10;

const MAX_STEPS: usize = 5_000_000;

/// A sampled solution path: one state vector per accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

// Dormand–Prince 4(5) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th- and 4th-order weights, applied to k1..k7.
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate the dynamics from `u0` to `t_end` (or to steady state,
/// whichever comes first). `dt_hint` seeds the adaptive step size.
pub fn integrate(
    model: &Model,
    harvest: &[f64],
    u0: &[f64],
    t_end: f64,
    dt_hint: f64,
) -> Result<Trajectory> {
    model.validate_harvest(harvest)?;
    let n = model.n();
    if u0.len() != n {
        return Err(Error::invalid(format!(
            "initial state has {} entries, expected {n}",
            u0.len()
        )));
    }
    if u0.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::invalid("initial state must be finite and nonnegative"));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::invalid(format!("t_end must be positive, got {t_end}")));
    }

    let mut t = 0.0;
    let mut y = u0.to_vec();
    let mut h = if dt_hint.is_finite() && dt_hint > 0.0 {
        dt_hint.min(t_end)
    } else {
        (t_end / 100.0).min(1e-2)
    };

    let mut k: [Vec<f64>; 7] = Default::default();
    for stage in k.iter_mut() {
        *stage = vec![0.0; n];
    }
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    model.rhs_into(harvest, &y, &mut k[0]);

    let mut times = vec![0.0];
    let mut states = vec![y.clone()];

    if max_abs(&k[0]) < STEADY_STATE_TOL {
        return Ok(Trajectory { times, states });
    }

    for _ in 0..MAX_STEPS {
        // within rounding of the end time counts as done
        if t >= t_end - 1e-12 * t_end.max(1.0) {
            break;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::numerical(format!(
                "step size collapsed at t = {t}"
            )));
        }
        h = h.min(t_end - t);

        // stages 2..6
        let tableau: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, row) in tableau.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &a) in row.iter().enumerate() {
                    acc += a * k[j][i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            model.rhs_into(harvest, &y_stage, &mut k[s + 1]);
        }
        // 5th-order solution; its slope (FSAL) is stage 7
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &b) in B5.iter().enumerate() {
                acc += b * k[j][i];
            }
            y_new[i] = y[i] + h * acc;
        }
        model.rhs_into(harvest, &y_new, &mut k[6]);

        // scaled error estimate
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, &d) in ERR.iter().enumerate() {
                e += d * k[j][i];
            }
            e *= h;
            let scale = ABS_TOL + REL_TOL * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }

        if !err.is_finite() {
            h *= 0.2;
            model.rhs_into(harvest, &y, &mut k[0]);
            continue;
        }

        if err <= 1.0 {
            t += h;
            let mut clipped = false;
            for i in 0..n {
                if y_new[i] < 0.0 {
                    y_new[i] = 0.0;
                    clipped = true;
                }
            }
            y.copy_from_slice(&y_new);
            if clipped {
                model.rhs_into(harvest, &y, &mut k[6]);
            }
            k.swap(0, 6); // FSAL: slope at the accepted state becomes stage 1
            times.push(t);
            states.push(y.clone());
            if max_abs(&k[0]) < STEADY_STATE_TOL {
                break;
            }
        }

        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
    }

    Ok(Trajectory { times, states })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}
