//! Adaptive Dormand–Prince 5(4) integration of complex-valued systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Step-size control settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_min: f64,
    /// Initial step; chosen from the right-hand side when `None`.
    pub h_init: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 2_000_000,
            h_min: 1e-14,
            h_init: None,
        }
    }
}

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
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `t0`, recording `y` at each of `outputs`.
///
/// `outputs` must be non-decreasing and not below `t0`. The callback
/// `on_output` runs at every output time and may abort the run.
pub fn integrate<F, G>(
    rhs: F,
    t0: f64,
    y0: &[Complex64],
    outputs: &[f64],
    opts: &OdeOptions,
    mut on_output: G,
) -> Result<()>
where
    F: Fn(f64, &[Complex64], &mut [Complex64]),
    G: FnMut(usize, f64, &[Complex64]) -> Result<()>,
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); dim]; 7];
    let mut stage = vec![Complex64::default(); dim];
    let mut y_new = vec![Complex64::default(); dim];
    rhs(t, &y, &mut k[0]);

    let mut h = opts.h_init.unwrap_or_else(|| {
        let scale = y.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let rate = k[0].iter().map(|v| v.norm()).fold(0.0, f64::max);
        if rate > 0.0 {
            0.01 * scale / rate
        } else {
            1e-3
        }
    });
    let mut steps = 0usize;

    for (idx, &target) in outputs.iter().enumerate() {
        if target < t {
            return Err(Error::invalid("times", "output times must be non-decreasing"));
        }
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::IntegrationFailure {
                    t,
                    step: h,
                    steps,
                    reason: "step budget exhausted".into(),
                });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };

            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (r, a) in A[s][..s].iter().enumerate() {
                        if *a != 0.0 {
                            acc += k[r][i] * (hs * a);
                        }
                    }
                    stage[i] = acc;
                }
                rhs(t + C[s] * hs, &stage, &mut k[s]);
            }
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut next = y[i];
                let mut e = Complex64::default();
                for s in 0..7 {
                    next += k[s][i] * (hs * B[s]);
                    e += k[s][i] * (hs * E[s]);
                }
                y_new[i] = next;
                let sc = opts.atol + opts.rtol * y[i].norm().max(next.norm());
                err = err.max(e.norm() / sc);
            }
            steps += 1;
            if !err.is_finite() {
                return Err(Error::IntegrationFailure {
                    t,
                    step: hs,
                    steps,
                    reason: "non-finite state".into(),
                });
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                std::mem::swap(&mut y, &mut y_new);
                // FSAL: the last stage is the derivative at the new point.
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                // Keep the natural step for the next interval.
                h = h.max(hs * factor.min(1.0));
            } else {
                h = hs * factor;
            }
            if h < opts.h_min {
                return Err(Error::IntegrationFailure {
                    t,
                    step: h,
                    steps,
                    reason: "step size underflow".into(),
                });
            }
        }
        on_output(idx, t, &y)?;
    }
    Ok(())
}
