//! Prediction-error identification of the exercise gain `beta` and of the
//! first-order-plus-dead-time model.

pub mod nelder_mead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fopdt::{fopdt_step_response, FopdtModel};
use crate::host::HostParams;
use crate::params::PatientParams;
use crate::scalar::Scalar;
use crate::scenario::{HrInput, ScenarioSpec};
use crate::signal::TimeSeries;
use crate::sim::Simulator;

pub use nelder_mead::SimplexOptions;

/// Starting value of `beta`, 1/bpm.
pub const BETA_INITIAL: f64 = 0.005;
pub const BETA_BOUNDS: (f64, f64) = (1e-4, 0.5);
/// `(K, T)` starting point.
pub const FOPDT_INITIAL: (f64, f64) = (1.0, 60.0);
/// K is bounded away from zero by a tiny margin; the model needs K > 0.
pub const GAIN_BOUNDS: (f64, f64) = (1e-6, 20.0);
pub const TIME_CONSTANT_BOUNDS: (f64, f64) = (5.0, 1000.0);

/// Box constraint on one named parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound<S> {
    pub name: String,
    pub lower: S,
    pub upper: S,
}

impl<S: Scalar> Bound<S> {
    pub fn new(name: impl Into<String>, lower: S, upper: S) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }

    fn contains(&self, x: S) -> bool {
        x >= self.lower && x <= self.upper
    }

    fn at_bound(&self, x: S) -> bool {
        let tol = S::lit(1e-6) * (self.upper - self.lower);
        (x - self.lower).abs() <= tol || (self.upper - x).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport<S> {
    pub names: Vec<String>,
    pub xi_hat: Vec<S>,
    /// Mean squared prediction error at `xi_hat`.
    pub cost: S,
    pub initial_cost: S,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Parameters that ended on (or within 1e-6 of the range of) a bound.
    pub bounds_hit: Vec<String>,
}

impl<S: Scalar> FitReport<S> {
    pub fn get(&self, name: &str) -> Option<S> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.xi_hat[i])
    }
}

/// Mean squared prediction error between `y` and `y_hat` on a shared grid.
pub fn mean_squared_error<S: Scalar>(y: &TimeSeries<S>, y_hat: &TimeSeries<S>) -> Result<S> {
    y.ensure_same_grid(y_hat)?;
    let sum = y
        .values()
        .iter()
        .zip(y_hat.values())
        .fold(S::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(sum / S::from_usize_lossy(y.len()))
}

/// Minimizes the mean squared prediction error of `predict(xi)` against `y`
/// over the box `bounds`, starting from `xi0`.
///
/// Errors from `predict` at `xi0` are returned; at later trial points they
/// count as an infinite cost.
pub fn pem_fit<S, F>(
    predict: F,
    y: &TimeSeries<S>,
    xi0: &[S],
    bounds: &[Bound<S>],
) -> Result<FitReport<S>>
where
    S: Scalar,
    F: Fn(&[S]) -> Result<TimeSeries<S>>,
{
    pem_fit_with(predict, y, xi0, bounds, &SimplexOptions::default())
}

pub fn pem_fit_with<S, F>(
    predict: F,
    y: &TimeSeries<S>,
    xi0: &[S],
    bounds: &[Bound<S>],
    opts: &SimplexOptions<S>,
) -> Result<FitReport<S>>
where
    S: Scalar,
    F: Fn(&[S]) -> Result<TimeSeries<S>>,
{
    if xi0.len() != bounds.len() || xi0.is_empty() {
        return Err(Error::OutOfBounds(format!(
            "{} initial values for {} bounds",
            xi0.len(),
            bounds.len()
        )));
    }
    for (x, b) in xi0.iter().zip(bounds) {
        if !(b.lower <= b.upper) {
            return Err(Error::OutOfBounds(format!(
                "empty interval for `{}`",
                b.name
            )));
        }
        if !b.contains(*x) {
            return Err(Error::OutOfBounds(format!(
                "`{}` = {} not in [{}, {}]",
                b.name, x, b.lower, b.upper
            )));
        }
    }
    let initial_cost = mean_squared_error(y, &predict(xi0)?)?;
    if !initial_cost.is_finite() {
        return Err(Error::NonFiniteInitialCost);
    }
    let cost = |xi: &[S]| {
        predict(xi)
            .and_then(|y_hat| mean_squared_error(y, &y_hat))
            .unwrap_or(S::infinity())
    };
    let lower: Vec<S> = bounds.iter().map(|b| b.lower).collect();
    let upper: Vec<S> = bounds.iter().map(|b| b.upper).collect();
    let r = nelder_mead::minimize(cost, xi0, &lower, &upper, opts);
    let bounds_hit = bounds
        .iter()
        .zip(&r.x)
        .filter(|(b, &x)| b.at_bound(x))
        .map(|(b, _)| b.name.clone())
        .collect();
    Ok(FitReport {
        names: bounds.iter().map(|b| b.name.clone()).collect(),
        xi_hat: r.x,
        cost: r.fx.min(initial_cost),
        initial_cost,
        iterations: r.iterations,
        evaluations: r.evaluations,
        converged: r.converged,
        bounds_hit,
    })
}

/// Fits the heart-rate gain `beta` of `patient` so the simulated scenario
/// reproduces `y_bg`, which must lie inside the exercise window.
///
/// `hr`, when given, replaces the scenario's heart-rate drive with the measured
/// absolute heart rate.
pub fn fit_beta<S: Scalar>(
    y_bg: &TimeSeries<S>,
    hr: Option<&TimeSeries<S>>,
    patient: &PatientParams<S>,
    host: &HostParams<S>,
    scenario: &ScenarioSpec<S>,
) -> Result<FitReport<S>> {
    fit_beta_with(&Simulator::default(), y_bg, hr, patient, host, scenario)
}

pub fn fit_beta_with<S: Scalar>(
    sim: &Simulator<S>,
    y_bg: &TimeSeries<S>,
    hr: Option<&TimeSeries<S>>,
    patient: &PatientParams<S>,
    host: &HostParams<S>,
    scenario: &ScenarioSpec<S>,
) -> Result<FitReport<S>> {
    let tol = y_bg.dt() * S::lit(1e-6);
    if y_bg.t0() < scenario.exercise_start - tol || y_bg.end_time() > scenario.exercise_end + tol {
        return Err(Error::InvalidSignal(format!(
            "glucose data [{}, {}] must lie within the exercise window [{}, {}]",
            y_bg.t0(),
            y_bg.end_time(),
            scenario.exercise_start,
            scenario.exercise_end
        )));
    }
    let mut scenario = scenario.clone();
    if let Some(hr) = hr {
        scenario.hr_input = HrInput::Series(hr.clone());
    }
    let predict = |xi: &[S]| sim.bg_on_grid(&patient.with_beta(xi[0]), host, &scenario, y_bg);
    pem_fit(
        predict,
        y_bg,
        &[S::lit(BETA_INITIAL)],
        &[Bound::new(
            "beta",
            S::lit(BETA_BOUNDS.0),
            S::lit(BETA_BOUNDS.1),
        )],
    )
}

/// Fits `(K, T)` of a first-order-plus-dead-time model with known dead time `tau`
/// to `y_ref`, the glucose deviation from its pre-exercise baseline, for a
/// heart-rate pulse of `u_amp` bpm over `session = (t_on, t_off)`.
pub fn fit_fopdt<S: Scalar>(
    y_ref: &TimeSeries<S>,
    tau: S,
    u_amp: S,
    session: (S, S),
) -> Result<FitReport<S>> {
    if !(u_amp > S::zero()) || !u_amp.is_finite() {
        return Err(Error::UnidentifiableGain(u_amp.as_f64()));
    }
    if !(tau >= S::zero()) {
        return Err(Error::InvalidParameter {
            field: "tau",
            reason: format!("must be >= 0, got {tau}"),
        });
    }
    let (t_on, t_off) = session;
    let predict = |xi: &[S]| {
        let model = FopdtModel {
            gain: xi[0],
            time_constant: xi[1],
            delay: tau,
        };
        fopdt_step_response(&model, u_amp, t_on, t_off, y_ref)
    };
    pem_fit(
        predict,
        y_ref,
        &[S::lit(FOPDT_INITIAL.0), S::lit(FOPDT_INITIAL.1)],
        &[
            Bound::new("K", S::lit(GAIN_BOUNDS.0), S::lit(GAIN_BOUNDS.1)),
            Bound::new(
                "T",
                S::lit(TIME_CONSTANT_BOUNDS.0),
                S::lit(TIME_CONSTANT_BOUNDS.1),
            ),
        ],
    )
}
