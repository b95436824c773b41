//! Exercise physiology: heart-rate deviation, the delayed/slow exercise signals
//! `h`, `theta`, `phi`, `w`, and glucose utilization with and without activity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PatientParams;
use crate::scalar::Scalar;

/// Where a scenario stands relative to the exercise session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Phase {
    #[default]
    PreExercise,
    Exercising,
    PostExercise,
}

/// Exercise-driven quantities of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExerciseState<S> {
    /// Delayed heart-rate deviation, bpm.
    pub h: S,
    /// Slow insulin-sensitivity state, in `[0, 1)`.
    pub theta: S,
    /// Instantaneous saturation of the heart-rate deviation, in `[0, 1)`.
    pub phi: S,
    /// Michaelis-constant modulation signal, bpm.
    pub w: S,
    pub phase: Phase,
    /// Minutes since the end of exercise; meaningful in `PostExercise` only.
    pub t_since_end: S,
    /// Heart-rate deviation at the end of exercise, bpm.
    pub u_end: S,
}

impl<S: Scalar> ExerciseState<S> {
    /// Resting initial condition `h = theta = phi = w = 0`.
    pub fn rest() -> Self {
        Self {
            h: S::zero(),
            theta: S::zero(),
            phi: S::zero(),
            w: S::zero(),
            phase: Phase::PreExercise,
            t_since_end: S::zero(),
            u_end: S::zero(),
        }
    }
}

/// Heart-rate deviation above baseline, clamped at zero.
pub fn hr_deviation<S: Scalar>(hr: S, hr_baseline: S) -> S {
    (hr - hr_baseline).max(S::zero())
}

/// `phi = u / (1 + u)` with `u` in bpm.
pub fn phi<S: Scalar>(u_hr: S) -> S {
    u_hr / (S::one() + u_hr)
}

/// Piecewise `w`: zero before exercise, the current deviation during it,
/// and an exponential decay from the end-of-exercise deviation afterwards.
pub fn exercise_w<S: Scalar>(phase: Phase, u_hr: S, u_end: S, t_since_end: S, kappa: S) -> S {
    match phase {
        Phase::PreExercise => S::zero(),
        Phase::Exercising => u_hr,
        Phase::PostExercise => u_end * (-kappa * t_since_end).exp(),
    }
}

/// Right-hand sides of the `h` and `theta` equations for deviation `u_hr`.
pub fn exercise_derivs<S: Scalar>(h: S, theta: S, u_hr: S, params: &PatientParams<S>) -> (S, S) {
    let dh = -(h - u_hr) / params.tau_h;
    let f = phi(u_hr);
    let dtheta = -(f + params.tau_theta.recip()) * theta + f;
    (dh, dtheta)
}

/// Advances the exercise state by `dt` minutes with `u_hr` held constant over the step.
///
/// Both linear equations are integrated exactly under that zero-order hold, so the
/// result does not depend on how a constant-input interval is split into steps.
/// `phase` is the phase in force during the step; entering `PostExercise` from
/// `Exercising` restarts the post-exercise clock.
pub fn step_exercise_state<S: Scalar>(
    state: &ExerciseState<S>,
    u_hr: S,
    phase: Phase,
    dt: S,
    params: &PatientParams<S>,
) -> Result<ExerciseState<S>> {
    if u_hr < S::zero() || !u_hr.is_finite() {
        return Err(Error::NegativeHrDeviation(u_hr.as_f64()));
    }
    if !(dt > S::zero()) {
        return Err(Error::InvalidParameter {
            field: "dt",
            reason: format!("must be > 0, got {dt}"),
        });
    }
    let mut next = *state;
    let h_decay = (-dt / params.tau_h).exp();
    next.h = u_hr + (state.h - u_hr) * h_decay;

    let f = phi(u_hr);
    let rate = f + params.tau_theta.recip();
    let theta_eq = f / rate;
    next.theta = theta_eq + (state.theta - theta_eq) * (-rate * dt).exp();
    next.phi = f;

    match (state.phase, phase) {
        (_, Phase::Exercising) => {
            next.u_end = u_hr;
            next.t_since_end = S::zero();
        }
        (Phase::PostExercise, Phase::PostExercise) => next.t_since_end = state.t_since_end + dt,
        (_, Phase::PostExercise) => next.t_since_end = dt,
        (_, Phase::PreExercise) => next.t_since_end = S::zero(),
    }
    next.phase = phase;
    next.w = exercise_w(phase, u_hr, next.u_end, next.t_since_end, params.kappa);
    Ok(next)
}

/// Insulin-dependent utilization at rest, mg/kg/min.
///
/// The rate is floored at zero when insulin action is so far below basal that the
/// numerator would turn negative.
pub fn uid_nominal<S: Scalar>(g: S, x: S, params: &PatientParams<S>) -> Result<S> {
    let den = params.km0 + g;
    if !(den > S::zero()) {
        return Err(Error::Singularity(den.as_f64()));
    }
    let num = (params.vm0 + params.vmx * x).max(S::zero());
    Ok(num * g / den)
}

/// Insulin-dependent utilization with the activity terms `beta*h`, `gamma*theta`
/// and `epsilon*w`, mg/kg/min.
pub fn uid_exercise<S: Scalar>(
    g: S,
    x: S,
    ex: &ExerciseState<S>,
    params: &PatientParams<S>,
) -> Result<S> {
    let ew = params.epsilon * ex.w;
    if ew >= S::one() {
        return Err(Error::DenominatorCollapse(ew.as_f64()));
    }
    let den = params.km0 * (S::one() - ew) + g;
    if !(den > S::zero()) {
        return Err(Error::Singularity(den.as_f64()));
    }
    let num = params.vm0 * (S::one() + params.beta * ex.h)
        + params.vmx * (S::one() + params.gamma * ex.theta) * x;
    Ok(num.max(S::zero()) * g / den)
}

/// `dX/dt = -p2U * X + p2U * (I - Ib)`.
pub fn insulin_action_deriv<S: Scalar>(x: S, i: S, ib: S, p2u: S) -> S {
    -p2u * x + p2u * (i - ib)
}
