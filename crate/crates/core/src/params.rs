//! Per-subject physiological constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest heart-rate deviation above baseline the model admits, in bpm.
///
/// Bounds `w` and therefore the product `epsilon * w` that shrinks the
/// Michaelis constant of insulin-dependent utilization.
pub const MAX_HR_DEVIATION_BPM: f64 = 90.0;

/// Utilization, insulin-action and exercise constants of one subject.
///
/// Keys in configuration files carry their unit as a suffix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientParams<S> {
    /// Insulin-independent part of the maximal utilization rate, mg/kg/min.
    #[serde(rename = "vm0_mg_per_kg_min")]
    pub vm0: S,
    /// Insulin sensitivity, mg/kg/min per pmol/l.
    #[serde(rename = "vmx_mg_per_kg_min_per_pmol_l")]
    pub vmx: S,
    /// Michaelis constant of utilization, mg/kg.
    #[serde(rename = "km0_mg_per_kg")]
    pub km0: S,
    /// Rate constant of insulin action, 1/min.
    #[serde(rename = "p2u_per_min")]
    pub p2u: S,
    /// Gain of the fast heart-rate driven clearance term, 1/bpm.
    #[serde(rename = "beta_per_bpm")]
    pub beta: S,
    /// Maximal relative increase of insulin sensitivity, in (1, 2).
    #[serde(rename = "gamma")]
    pub gamma: S,
    /// Scaling of the exercise-driven reduction of the Michaelis constant.
    #[serde(rename = "epsilon")]
    pub epsilon: S,
    /// Time constant of the delayed heart-rate deviation, min.
    #[serde(rename = "tau_h_min")]
    pub tau_h: S,
    /// Post-exercise decay rate of `w`, 1/min.
    #[serde(rename = "kappa_per_min")]
    pub kappa: S,
    /// Slow decay time constant of the insulin-sensitivity state, min.
    #[serde(rename = "tau_theta_min")]
    pub tau_theta: S,
    /// Basal plasma insulin, pmol/l.
    #[serde(rename = "ib_pmol_l")]
    pub ib: S,
    /// Resting heart rate before exercise, bpm.
    #[serde(rename = "hrb_bpm")]
    pub hrb: S,
}

impl<S: Scalar> PatientParams<S> {
    /// Nominal exercise constants (gamma 1.2, epsilon 0.01, tau_h 10 min,
    /// kappa 0.1151 1/min, tau_theta 180 min) with beta 0.052 1/bpm, on top of
    /// literature-magnitude utilization constants for an average adult.
    pub fn nominal() -> Self {
        Self {
            vm0: S::lit(2.5),
            vmx: S::lit(0.047),
            km0: S::lit(225.59),
            p2u: S::lit(0.0331),
            beta: S::lit(0.052),
            gamma: S::lit(1.2),
            epsilon: S::lit(0.01),
            tau_h: S::lit(10.0),
            kappa: S::lit(0.1151),
            tau_theta: S::lit(180.0),
            ib: S::lit(60.0),
            hrb: S::lit(90.0),
        }
    }

    pub fn with_beta(mut self, beta: S) -> Self {
        self.beta = beta;
        self
    }

    fn positive_fields(&self) -> [(&'static str, S); 12] {
        [
            ("vm0", self.vm0),
            ("vmx", self.vmx),
            ("km0", self.km0),
            ("p2u", self.p2u),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("tau_h", self.tau_h),
            ("kappa", self.kappa),
            ("tau_theta", self.tau_theta),
            ("ib", self.ib),
            ("hrb", self.hrb),
        ]
    }
}

/// Returns `params` unchanged when every constant is finite and strictly positive,
/// `1 < gamma < 2`, and `epsilon * MAX_HR_DEVIATION_BPM < 1`.
pub fn validate_patient<S: Scalar>(params: PatientParams<S>) -> Result<PatientParams<S>> {
    for (field, value) in params.positive_fields() {
        if !(value > S::zero()) || !value.is_finite() {
            return Err(Error::NonPositive {
                field,
                value: value.as_f64(),
            });
        }
    }
    if !(params.gamma > S::one() && params.gamma < S::lit(2.0)) {
        return Err(Error::GammaOutOfRange(params.gamma.as_f64()));
    }
    if params.epsilon * S::lit(MAX_HR_DEVIATION_BPM) >= S::one() {
        return Err(Error::InvalidParameter {
            field: "epsilon",
            reason: format!(
                "epsilon * {MAX_HR_DEVIATION_BPM} bpm must stay below 1, got {}",
                params.epsilon
            ),
        });
    }
    Ok(params)
}
