//! Monod growth and decay of the photosynthetic culture in the anode chamber.
//!
//! ```text
//! dx/dt = (k1 - k2) x
//! dN/dt = -k1 x / Y_xN,      k1 = mu_max N / (K_N + N)
//! ```
//!
//! Integrated with an adaptive Dormand–Prince 5(4) pair. The system is
//! non-stiff at the reference rates (time constants of hours), so an explicit
//! pair is enough.

use crate::error::{Error, Result};
use crate::params::ModelParameters;

/// Culture state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthState {
    /// Time, s.
    pub t: f64,
    /// Cell concentration, g/m³.
    pub x: f64,
    /// Nutrient concentration, g/m³.
    pub n: f64,
}

impl GrowthState {
    pub fn initial(params: &ModelParameters) -> Self {
        Self {
            t: 0.0,
            x: params.x0,
            n: params.n0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthTrajectory {
    /// Accepted states, starting with the initial condition.
    pub states: Vec<GrowthState>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl GrowthTrajectory {
    pub fn last(&self) -> GrowthState {
        *self
            .states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Monod specific growth rate `k1`, 1/s.
pub fn monod_rate(n: f64, params: &ModelParameters) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::Domain(format!(
            "nutrient concentration {n} must be non-negative"
        )));
    }
    Ok(monod(n, params))
}

fn monod(n: f64, params: &ModelParameters) -> f64 {
    params.mu_max * n / (params.k_n + n)
}

/// Right-hand side `(dx/dt, dN/dt)`.
pub fn ode_rhs(state: &GrowthState, params: &ModelParameters) -> (f64, f64) {
    derivative([state.x, state.n], params).into()
}

fn derivative(y: [f64; 2], params: &ModelParameters) -> [f64; 2] {
    // Trial stages may dip marginally below zero near exhaustion.
    let k1 = monod(y[1].max(0.0), params);
    [(k1 - params.k2) * y[0], -k1 * y[0] / params.y_xn]
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the node
// coefficients are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the 5th-order solution and the
/// embedded error estimate.
fn dopri_step(y: [f64; 2], h: f64, params: &ModelParameters) -> ([f64; 2], [f64; 2]) {
    let mut k = [[0.0; 2]; 7];
    k[0] = derivative(y, params);
    for s in 1..7 {
        let mut ys = y;
        for (j, kj) in k.iter().enumerate().take(s) {
            ys[0] += h * A[s][j] * kj[0];
            ys[1] += h * A[s][j] * kj[1];
        }
        k[s] = derivative(ys, params);
    }
    let mut y5 = y;
    let mut err = [0.0; 2];
    for s in 0..7 {
        y5[0] += h * B5[s] * k[s][0];
        y5[1] += h * B5[s] * k[s][1];
        err[0] += h * (B5[s] - B4[s]) * k[s][0];
        err[1] += h * (B5[s] - B4[s]) * k[s][1];
    }
    (y5, err)
}

fn error_norm(y: [f64; 2], y_new: [f64; 2], err: [f64; 2], tol: Tolerances) -> f64 {
    let mut sum = 0.0;
    for i in 0..2 {
        let scale = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
        sum += (err[i] / scale).powi(2);
    }
    (sum / 2.0).sqrt()
}

/// Integrates the growth ODEs from `initial` to `t_end`.
pub fn integrate_growth(
    initial: GrowthState,
    t_end: f64,
    params: &ModelParameters,
    tol: Tolerances,
) -> Result<GrowthTrajectory> {
    if !(t_end > initial.t) {
        return Err(Error::Domain(format!(
            "t_end = {t_end} must exceed the initial time {}",
            initial.t
        )));
    }
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::Domain("tolerances must be positive".into()));
    }
    if initial.x < 0.0 || initial.n < 0.0 {
        return Err(Error::Domain(format!(
            "initial state (x = {}, N = {}) must be non-negative",
            initial.x, initial.n
        )));
    }

    let mut t = initial.t;
    let mut y = [initial.x, initial.n];
    let mut states = vec![initial];
    let mut accepted = 0;
    let mut rejected = 0;

    let span = t_end - t;
    let mut h = initial_step(y, span, params, tol);

    while t < t_end {
        let min_step = 16.0 * f64::EPSILON * t.abs().max(span);
        if h < min_step {
            return Err(Error::StepUnderflow { t });
        }
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };
        let (mut y_new, err) = dopri_step(y, h_try, params);
        let norm = error_norm(y, y_new, err, tol);

        if norm <= 1.0 {
            let mut negative = None;
            for (i, name) in [(0, "x"), (1, "N")] {
                if y_new[i] < 0.0 {
                    if y_new[i] >= -tol.abs {
                        y_new[i] = 0.0;
                    } else {
                        negative = Some((name, y_new[i]));
                    }
                }
            }
            if let Some((variable, value)) = negative {
                // Shrink and retry; only a step that cannot shrink further fails.
                rejected += 1;
                h = 0.5 * h_try;
                if h < min_step {
                    return Err(Error::NegativeState { variable, value, t });
                }
                continue;
            }
            t = if last { t_end } else { t + h_try };
            y = y_new;
            states.push(GrowthState {
                t,
                x: y[0],
                n: y[1],
            });
            accepted += 1;
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = h_try * factor;
        } else {
            rejected += 1;
            h = h_try * (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
        }
    }

    Ok(GrowthTrajectory {
        states,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

fn initial_step(y: [f64; 2], span: f64, params: &ModelParameters, tol: Tolerances) -> f64 {
    let f0 = derivative(y, params);
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..2 {
        let scale = tol.abs + tol.rel * y[i].abs();
        d0 += (y[i] / scale).powi(2);
        d1 += (f0[i] / scale).powi(2);
    }
    let (d0, d1) = ((d0 / 2.0).sqrt(), (d1 / 2.0).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    h.min(span)
}

/// State after advancing `dwell` seconds from `from`; `dwell == 0` returns
/// `from` unchanged.
pub fn advance(
    from: GrowthState,
    dwell: f64,
    params: &ModelParameters,
    tol: Tolerances,
) -> Result<GrowthState> {
    if dwell == 0.0 {
        return Ok(from);
    }
    if !(dwell > 0.0) {
        return Err(Error::Domain(format!("dwell {dwell} must be non-negative")));
    }
    Ok(integrate_growth(from, from.t + dwell, params, tol)?.last())
}

/// Writes a trajectory as CSV `t_s,x_g_per_m3,n_g_per_m3`.
pub fn trajectory_csv(trajectory: &GrowthTrajectory) -> String {
    let mut out = String::from("t_s,x_g_per_m3,n_g_per_m3\n");
    for s in &trajectory.states {
        out.push_str(&format!(
            "{},{},{}\n",
            crate::format::sci(s.t),
            crate::format::sci(s.x),
            crate::format::sci(s.n)
        ));
    }
    out
}
