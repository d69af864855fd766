//! Steady-state electrochemistry of the cell.
//!
//! The anode activation overpotential is whatever is left of the standard
//! potential after the ohmic drop across both resistances,
//!
//! ```text
//! eta = E0 - i (R_ext + R_int)
//! ```
//!
//! and the current must also satisfy Butler–Volmer kinetics at the anode,
//!
//! ```text
//! i = A_E j0 [exp(c1 eta) - exp(-c2 eta)],   c1 = alpha n F / RT,  c2 = (1 - alpha) n F / RT
//! ```
//!
//! with the exchange current density driven by the photon flux absorbed by
//! the culture,
//!
//! ```text
//! j0 = K n F (L0 C_f A_s Q eta_eff x / (N_Av x_max))^alpha
//! ```
//!
//! Concentration losses have no separate term; they live inside `K`.

use crate::error::{Error, Result};
use crate::estimation::FittedRateProfile;
use crate::format::sci;
use crate::growth::{self, GrowthState, Tolerances};
use crate::numeric::brent_root;
use crate::params::ModelParameters;

/// Exponent arguments are clamped to this magnitude.
pub const EXP_ARG_LIMIT: f64 = 700.0;

fn guarded_exp(z: f64) -> f64 {
    z.clamp(-EXP_ARG_LIMIT, EXP_ARG_LIMIT).exp()
}

/// One steady operating point of the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationPoint {
    /// External load, Ω.
    pub r_ext: f64,
    /// Cell current, A.
    pub i: f64,
    /// Cell voltage, V.
    pub v: f64,
    /// Current density, A/m².
    pub j: f64,
    /// Power density, W/m².
    pub p: f64,
    /// Characteristic rate constant used, 1/m².
    pub k: f64,
    /// Anode activation overpotential, V.
    pub eta_act: f64,
    /// Cell concentration the point was evaluated at, g/m³.
    pub x_at_eval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingProblem {
    pub r_ext: f64,
    pub k: f64,
    pub x: f64,
    pub params: ModelParameters,
}

impl OperatingProblem {
    pub fn new(r_ext: f64, k: f64, x: f64, params: ModelParameters) -> Result<Self> {
        if !(r_ext.is_finite() && r_ext > 0.0) {
            return Err(Error::validation(
                "r_ext",
                format!("{r_ext} must be positive"),
            ));
        }
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::validation("K", format!("{k} must be non-negative")));
        }
        if !(x >= 0.0 && x <= params.x_max) {
            return Err(Error::validation(
                "x",
                format!("{x} must lie in [0, x_max = {}]", params.x_max),
            ));
        }
        Ok(Self {
            r_ext,
            k,
            x,
            params,
        })
    }

    pub fn total_resistance(&self) -> f64 {
        self.r_ext + self.params.r_int
    }

    /// Short-circuit-of-kinetics bound `E0 / (R_ext + R_int)`, A.
    pub fn current_upper_bound(&self) -> f64 {
        self.params.e0 / self.total_resistance()
    }

    pub fn exchange_current_density(&self) -> f64 {
        exchange_current_density(self.k, self.x, &self.params)
    }
}

/// Absorbed photon flux per cell, normalized by Avogadro's number and the
/// maximum density: the lumped anode reactant term.
pub fn photon_flux_term(x: f64, params: &ModelParameters) -> f64 {
    params.l0 * params.c_f * params.a_s * params.q * params.eta_eff * x
        / (params.constants.n_av * params.x_max)
}

/// Exchange current density `j0`, A/m².
pub fn exchange_current_density(k: f64, x: f64, params: &ModelParameters) -> f64 {
    debug_assert!(k >= 0.0 && x >= 0.0);
    if k == 0.0 {
        return 0.0;
    }
    k * params.n * params.constants.f * photon_flux_term(x, params).powf(params.alpha)
}

/// Anodic and cathodic Butler–Volmer coefficients `(c1, c2)`, 1/V.
pub fn transfer_coefficients(params: &ModelParameters) -> (f64, f64) {
    let nf_rt = params.n * params.constants.f_over_rt();
    (params.alpha * nf_rt, (1.0 - params.alpha) * nf_rt)
}

fn residual_with(i: f64, problem: &OperatingProblem, a_e_j0: f64, c1: f64, c2: f64) -> f64 {
    let eta = problem.params.e0 - i * problem.total_resistance();
    a_e_j0 * (guarded_exp(c1 * eta) - guarded_exp(-c2 * eta)) - i
}

/// Butler–Volmer residual `f(i)`, A. Zero at the operating current.
pub fn bv_residual(i: f64, problem: &OperatingProblem) -> f64 {
    let (c1, c2) = transfer_coefficients(&problem.params);
    let a_e_j0 = problem.params.a_e * problem.exchange_current_density();
    residual_with(i, problem, a_e_j0, c1, c2)
}

/// Solves for the steady operating current.
///
/// `f` is strictly decreasing on `[0, E0 / R_tot]` with `f(0) >= 0` and
/// `f(E0 / R_tot) < 0`, so the root is unique and bracketed. Brent's method
/// is used rather than Newton: `c2` is large enough that `f` is very steep
/// close to `eta = 0`.
pub fn solve_operating_point(problem: &OperatingProblem) -> Result<PolarizationPoint> {
    let params = &problem.params;
    if !(params.e0 > 0.0) {
        return Err(Error::NoRoot { e0: params.e0 });
    }
    let r_tot = problem.total_resistance();
    let upper = problem.current_upper_bound();
    let (c1, c2) = transfer_coefficients(params);
    let a_e_j0 = params.a_e * problem.exchange_current_density();

    let current = if a_e_j0 == 0.0 {
        0.0
    } else {
        let f = |i: f64| residual_with(i, problem, a_e_j0, c1, c2);
        let f_lo = f(0.0);
        let f_hi = f(upper);
        if f_hi >= 0.0 {
            // eta at the upper end is zero up to rounding; the root is there.
            upper
        } else {
            brent_root(f, 0.0, upper, f_lo, f_hi, 0.0).clamp(0.0, upper)
        }
    };

    let v = current * problem.r_ext;
    Ok(PolarizationPoint {
        r_ext: problem.r_ext,
        i: current,
        v,
        j: current / params.a_e,
        p: v * current / params.a_e,
        k: problem.k,
        eta_act: (params.e0 - current * r_tot).clamp(0.0, params.e0),
        x_at_eval: problem.x,
    })
}

/// Where the per-load rate constant comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum KSource {
    Constant(f64),
    Profile(FittedRateProfile),
}

impl KSource {
    pub fn k_at(&self, r_ext: f64) -> f64 {
        match self {
            KSource::Constant(k) => *k,
            KSource::Profile(profile) => profile.interpolate(r_ext),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            KSource::Constant(k) => format!("constant K = {}", sci(*k)),
            KSource::Profile(p) => format!(
                "fitted profile ({} entries, log-log interpolation)",
                p.entries.len()
            ),
        }
    }
}

/// Solves one point per load, in order. Before each point the culture is
/// advanced by `dwell` seconds from the previous point's state; the first
/// point starts from `(x0, N0)`.
pub fn polarization_sweep(
    loads: &[f64],
    k_source: &KSource,
    params: &ModelParameters,
    dwell: f64,
) -> Result<Vec<PolarizationPoint>> {
    if loads.is_empty() {
        return Err(Error::Domain("at least one load is required".into()));
    }
    if !(dwell >= 0.0 && dwell.is_finite()) {
        return Err(Error::Domain(format!("dwell {dwell} must be non-negative")));
    }
    let schedule = growth_schedule(loads.len(), params, dwell)?;
    loads
        .iter()
        .zip(schedule)
        .enumerate()
        .map(|(index, (&r_ext, state))| {
            OperatingProblem::new(r_ext, k_source.k_at(r_ext), state.x, *params)
                .and_then(|problem| solve_operating_point(&problem))
                .map_err(|e| Error::AtLoad {
                    index,
                    r_ext,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Culture state seen by each of `count` successive operating points.
pub fn growth_schedule(
    count: usize,
    params: &ModelParameters,
    dwell: f64,
) -> Result<Vec<GrowthState>> {
    let mut state = GrowthState::initial(params);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        state = growth::advance(state, dwell, params, Tolerances::default())?;
        out.push(state);
    }
    Ok(out)
}

/// `(j, p)` pairs, p = v i / A_E.
pub fn power_curve(points: &[PolarizationPoint], params: &ModelParameters) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|pt| (pt.i / params.a_e, pt.v * pt.i / params.a_e))
        .collect()
}

pub const POLARIZATION_HEADER: &str =
    "r_ext_ohm,i_amp,v_volt,j_a_per_m2,p_w_per_m2,k_per_m2,eta_act_volt,x_g_per_m3";

pub fn polarization_csv(points: &[PolarizationPoint]) -> String {
    let mut out = String::from(POLARIZATION_HEADER);
    out.push('\n');
    for p in points {
        let row = [p.r_ext, p.i, p.v, p.j, p.p, p.k, p.eta_act, p.x_at_eval]
            .map(sci)
            .join(",");
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn power_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("j_a_per_m2,p_w_per_m2\n");
    for &(j, p) in curve {
        out.push_str(&format!("{},{}\n", sci(j), sci(p)));
    }
    out
}
