//! Lumped bio-electrochemical model of a micro photosynthetic power cell.
//!
//! * [`params`]: model parameters, physical constants, parameter files
//! * [`dataset`]: measured v–i datasets with train/test labels
//! * [`growth`]: Monod growth/decay ODEs and their adaptive integration
//! * [`electrochem`]: exchange current density, Butler–Volmer operating
//!   point, polarization sweeps
//! * [`estimation`]: per-load fits of the characteristic rate constant `K`,
//!   interpolation to held-out loads, regime segmentation
//! * [`sensitivity`]: design-parameter sweeps and elasticities

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod electrochem;
pub mod error;
pub mod estimation;
pub mod format;
pub mod growth;
pub mod numeric;
pub mod params;
pub mod sensitivity;

pub use dataset::{ExperimentalDataset, Record, Split};
pub use electrochem::{
    bv_residual, exchange_current_density, polarization_sweep, power_curve, solve_operating_point,
    KSource, OperatingProblem, PolarizationPoint,
};
pub use error::{Error, Result};
pub use estimation::{
    fit_dataset, fit_point_k, interpolate_k, segment_regimes, validate, FitReport,
    FittedRateProfile, ProfileEntry, RegimeSplit,
};
pub use growth::{
    integrate_growth, monod_rate, ode_rhs, GrowthState, GrowthTrajectory, Tolerances,
};
pub use params::{load_parameters, standard_cell_potential, ModelParameters, PhysicalConstants};
pub use sensitivity::{
    rank_sensitivities, run_sweep, run_sweep_parallel, SweepParameter, SweepSpec,
};
