//! Blood-glucose dynamics under moderate aerobic exercise in type 1 diabetes.
//!
//! The crate couples a heart-rate driven exercise extension of insulin-dependent
//! glucose utilization to a small glucose-insulin backbone, replays clinical
//! exercise protocols, and identifies both the metabolic exercise gain and a
//! first-order-plus-dead-time disturbance model by prediction-error fitting.
//!
//! Every model is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the command line uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards

pub mod error;
pub mod estimation;
pub mod exercise;
pub mod fopdt;
pub mod host;
pub mod io;
pub mod metrics;
pub mod ode;
pub mod params;
pub mod scalar;
pub mod scenario;
pub mod signal;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
pub use estimation::{fit_beta, fit_fopdt, pem_fit, Bound, FitReport};
pub use exercise::{ExerciseState, Phase};
pub use fopdt::{bode, estimate_delay, fopdt_step_response, BodePoint, FopdtModel};
pub use host::{HostParams, MetabolicState};
pub use metrics::{fit_metric, population_quartiles, rmse, AccuracyReport, Quartiles};
pub use params::{validate_patient, PatientParams};
pub use scalar::Scalar;
pub use scenario::{BasalSegment, CarbIntake, HrInput, ScenarioSpec};
pub use signal::{resample_uniform, TimeSeries, Unit};
pub use sim::{run_population, run_scenario, EventKind, SimResult, Simulator};

pub type Series = TimeSeries<f64>;
pub type Patient = PatientParams<f64>;
pub type Host = HostParams<f64>;
pub type Scenario = ScenarioSpec<f64>;
pub type Fopdt = FopdtModel<f64>;
pub type Fit = FitReport<f64>;
pub type Accuracy = AccuracyReport<f64>;
pub type Sim = Simulator<f64>;

pub type Series32 = TimeSeries<f32>;
pub type Patient32 = PatientParams<f32>;
pub type Fopdt32 = FopdtModel<f32>;
