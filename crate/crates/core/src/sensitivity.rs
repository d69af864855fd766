//! One-at-a-time design sweeps over electrode area, light intensity, initial
//! cell concentration and illuminated area.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::electrochem::{
    polarization_sweep, solve_operating_point, KSource, OperatingProblem, PolarizationPoint,
};
use crate::error::{Error, Result};
use crate::params::ModelParameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    ElectrodeArea,
    LightIntensity,
    InitialCells,
    IlluminatedArea,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 4] = [
        SweepParameter::ElectrodeArea,
        SweepParameter::LightIntensity,
        SweepParameter::InitialCells,
        SweepParameter::IlluminatedArea,
    ];

    /// Parameter-file key.
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::ElectrodeArea => "A_E",
            SweepParameter::LightIntensity => "L0",
            SweepParameter::InitialCells => "x0",
            SweepParameter::IlluminatedArea => "A_s",
        }
    }

    pub fn get(self, params: &ModelParameters) -> f64 {
        params
            .get(self.key())
            .expect("sweep keys are parameter keys")
    }

    /// Copy of `base` with this parameter replaced.
    pub fn apply(self, base: &ModelParameters, value: f64) -> Result<ModelParameters> {
        let mut p = *base;
        p.set(self.key(), value);
        p.validate()?;
        Ok(p)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.key() == s).ok_or_else(|| {
            Error::validation(
                "param",
                format!("unknown sweep parameter `{s}`; expected one of A_E, L0, x0, A_s"),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub loads: Vec<f64>,
    pub k_source: KSource,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::validation(
                "values",
                "at least one value is required",
            ));
        }
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::validation("values", format!("{v} must be positive")));
        }
        if self.loads.is_empty() {
            return Err(Error::validation("loads", "at least one load is required"));
        }
        Ok(())
    }
}

/// One polarization curve per swept value, in value order. `base` is never
/// modified; the only difference between curves is the swept parameter.
/// Changing `x0` restarts the growth integration from the new initial
/// condition.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &ModelParameters,
    dwell: f64,
) -> Result<Vec<(f64, Vec<PolarizationPoint>)>> {
    spec.validate()?;
    spec.values
        .iter()
        .map(|&value| sweep_one(spec, base, dwell, value))
        .collect()
}

/// Same as [`run_sweep`] with curves computed on `workers` threads. The
/// result is identical to the sequential one.
pub fn run_sweep_parallel(
    spec: &SweepSpec,
    base: &ModelParameters,
    dwell: f64,
    workers: usize,
) -> Result<Vec<(f64, Vec<PolarizationPoint>)>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("worker pool: {e}")))?;
    pool.install(|| {
        spec.values
            .par_iter()
            .map(|&value| sweep_one(spec, base, dwell, value))
            .collect()
    })
}

fn sweep_one(
    spec: &SweepSpec,
    base: &ModelParameters,
    dwell: f64,
    value: f64,
) -> Result<(f64, Vec<PolarizationPoint>)> {
    let tag = |e: Error| Error::Sweep {
        parameter: spec.parameter.key(),
        value,
        source: Box::new(e),
    };
    let params = spec.parameter.apply(base, value).map_err(tag)?;
    let curve = polarization_sweep(&spec.loads, &spec.k_source, &params, dwell).map_err(tag)?;
    Ok((value, curve))
}

/// Central-difference elasticity `d ln g / d ln theta` of a positive model
/// output `g` with respect to `parameter`, using the points
/// `theta (1 ± rel_step)`.
pub fn elasticity<G>(
    base: &ModelParameters,
    parameter: SweepParameter,
    rel_step: f64,
    mut output: G,
) -> Result<f64>
where
    G: FnMut(&ModelParameters) -> Result<f64>,
{
    if !(rel_step > 0.0 && rel_step <= 0.5) {
        return Err(Error::Domain(format!(
            "rel_step {rel_step} must lie in (0, 0.5]"
        )));
    }
    let theta = parameter.get(base);
    let up = output(&parameter.apply(base, theta * (1.0 + rel_step))?)?;
    let down = output(&parameter.apply(base, theta * (1.0 - rel_step))?)?;
    if !(up > 0.0 && down > 0.0) {
        return Err(Error::Domain(format!(
            "elasticity of {parameter} needs a positive output, got {down} and {up}"
        )));
    }
    Ok((up.ln() - down.ln()) / ((1.0 + rel_step).ln() - (1.0 - rel_step).ln()))
}

/// Elasticities of the solved current at one operating point, for the four
/// design parameters, sorted by magnitude (largest first).
pub fn rank_sensitivities(
    base: &ModelParameters,
    k: f64,
    load: f64,
    rel_step: f64,
) -> Result<Vec<(SweepParameter, f64)>> {
    let current = |p: &ModelParameters| -> Result<f64> {
        let problem = OperatingProblem::new(load, k, p.x0, *p)?;
        Ok(solve_operating_point(&problem)?.i)
    };
    let mut ranked = SweepParameter::ALL
        .into_iter()
        .map(|param| Ok((param, elasticity(base, param, rel_step, current)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    Ok(ranked)
}
