//! Minimal glucose-insulin backbone hosting insulin-dependent utilization.
//!
//! This is a placeholder for a full metabolic simulator: two glucose compartments
//! (plasma `gp`, peripheral `gt`), a two-compartment gut chain fed by carbohydrate
//! impulses, a two-depot subcutaneous insulin chain draining into plasma insulin,
//! linear insulin suppression of endogenous glucose production and a constant
//! insulin-independent uptake. Every constant lives in [`HostParams`] so a
//! reference parameter set can be dropped in later.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exercise::{self, ExerciseState, Phase};
use crate::params::PatientParams;
use crate::scalar::Scalar;

/// pmol of insulin per international unit.
pub const PMOL_PER_UNIT: f64 = 6000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostParams<S> {
    /// Glucose distribution volume, dl/kg.
    #[serde(rename = "v_g_dl_per_kg")]
    pub v_g: S,
    /// Body weight, kg.
    #[serde(rename = "bw_kg")]
    pub bw: S,
    /// Constant insulin-independent uptake (brain, erythrocytes), mg/kg/min.
    #[serde(rename = "f_cns_mg_per_kg_min")]
    pub f_cns: S,
    /// Basal endogenous glucose production, mg/kg/min. Overridden by the basal
    /// calibration when a scenario is run for a target fasting glucose.
    #[serde(rename = "egp_b_mg_per_kg_min")]
    pub egp_b: S,
    /// Suppression of production per pmol/l of insulin above basal, mg/kg/min per pmol/l.
    #[serde(rename = "k_egp_mg_per_kg_min_per_pmol_l")]
    pub k_egp: S,
    #[serde(rename = "k_gut1_per_min")]
    pub k_gut1: S,
    #[serde(rename = "k_gut2_per_min")]
    pub k_gut2: S,
    /// Fraction of ingested carbohydrate reaching the circulation.
    #[serde(rename = "f_abs")]
    pub f_abs: S,
    #[serde(rename = "k_sc1_per_min")]
    pub k_sc1: S,
    #[serde(rename = "k_sc2_per_min")]
    pub k_sc2: S,
    /// Plasma insulin clearance, 1/min.
    #[serde(rename = "k_cl_per_min")]
    pub k_cl: S,
    /// Insulin distribution volume, l/kg.
    #[serde(rename = "v_i_l_per_kg")]
    pub v_i: S,
    /// Plasma to periphery glucose transfer, 1/min.
    #[serde(rename = "k_12_per_min")]
    pub k_12: S,
    /// Periphery to plasma glucose transfer, 1/min.
    #[serde(rename = "k_21_per_min")]
    pub k_21: S,
}

impl<S: Scalar> HostParams<S> {
    /// Literature-magnitude placeholder constants for a 70 kg adult.
    pub fn placeholder() -> Self {
        Self {
            v_g: S::lit(1.88),
            bw: S::lit(70.0),
            f_cns: S::lit(1.0),
            egp_b: S::lit(2.1),
            k_egp: S::lit(0.01),
            k_gut1: S::lit(0.046),
            k_gut2: S::lit(0.057),
            f_abs: S::lit(0.9),
            k_sc1: S::lit(0.02),
            k_sc2: S::lit(0.015),
            k_cl: S::lit(0.16),
            v_i: S::lit(0.05),
            k_12: S::lit(0.065),
            k_21: S::lit(0.079),
        }
    }

    pub fn validate(self) -> Result<Self> {
        let fields = [
            ("v_g", self.v_g),
            ("bw", self.bw),
            ("f_cns", self.f_cns),
            ("egp_b", self.egp_b),
            ("k_egp", self.k_egp),
            ("k_gut1", self.k_gut1),
            ("k_gut2", self.k_gut2),
            ("f_abs", self.f_abs),
            ("k_sc1", self.k_sc1),
            ("k_sc2", self.k_sc2),
            ("k_cl", self.k_cl),
            ("v_i", self.v_i),
            ("k_12", self.k_12),
            ("k_21", self.k_21),
        ];
        for (field, value) in fields {
            if !(value > S::zero()) || !value.is_finite() {
                return Err(Error::NonPositive {
                    field,
                    value: value.as_f64(),
                });
            }
        }
        if self.f_abs > S::one() {
            return Err(Error::InvalidParameter {
                field: "f_abs",
                reason: format!("must lie in (0, 1], got {}", self.f_abs),
            });
        }
        Ok(self)
    }

    /// Plasma insulin concentration step produced by one unit, pmol/l per U.
    pub fn insulin_per_unit(&self) -> S {
        S::lit(PMOL_PER_UNIT) / (self.v_i * self.bw)
    }

    /// Infusion rate (U/min) that holds plasma insulin at `ib` in steady state.
    pub fn nominal_basal_rate(&self, ib: S) -> S {
        self.k_cl * ib / self.insulin_per_unit()
    }
}

/// Full metabolic state of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetabolicState<S> {
    /// Plasma glucose mass, mg/kg.
    pub gp: S,
    /// Peripheral glucose mass, mg/kg.
    pub gt: S,
    /// Gut compartments, grams of carbohydrate.
    pub q1: S,
    pub q2: S,
    /// Subcutaneous insulin depots, U.
    pub s1: S,
    pub s2: S,
    /// Plasma insulin, pmol/l.
    pub i: S,
    /// Insulin action, pmol/l (deviation from basal, may be negative).
    pub x: S,
    pub ex: ExerciseState<S>,
}

impl<S: Scalar> MetabolicState<S> {
    pub const DIM: usize = 10;

    /// Blood glucose concentration, mg/dl.
    pub fn bg(&self, host: &HostParams<S>) -> S {
        self.gp / host.v_g
    }

    /// Packs the continuous states: `gp, gt, q1, q2, s1, s2, i, x, h, theta`.
    pub fn to_vec(&self) -> Vec<S> {
        vec![
            self.gp,
            self.gt,
            self.q1,
            self.q2,
            self.s1,
            self.s2,
            self.i,
            self.x,
            self.ex.h,
            self.ex.theta,
        ]
    }

    /// Inverse of [`to_vec`](Self::to_vec); the discrete exercise fields come from `ex`.
    pub fn from_slice(y: &[S], ex: ExerciseState<S>) -> Self {
        Self {
            gp: y[0],
            gt: y[1],
            q1: y[2],
            q2: y[3],
            s1: y[4],
            s2: y[5],
            i: y[6],
            x: y[7],
            ex: ExerciseState {
                h: y[8],
                theta: y[9],
                ..ex
            },
        }
    }
}

/// Time derivative of every continuous state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetabolicDeriv<S> {
    pub gp: S,
    pub gt: S,
    pub q1: S,
    pub q2: S,
    pub s1: S,
    pub s2: S,
    pub i: S,
    pub x: S,
    pub h: S,
    pub theta: S,
}

impl<S: Scalar> MetabolicDeriv<S> {
    pub fn write_into(&self, dy: &mut [S]) {
        let v = [
            self.gp, self.gt, self.q1, self.q2, self.s1, self.s2, self.i, self.x, self.h,
            self.theta,
        ];
        dy[..v.len()].copy_from_slice(&v);
    }
}

/// Exogenous drives held constant between events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivInputs<S> {
    /// Subcutaneous insulin infusion, U/min.
    pub basal_rate: S,
    /// Heart-rate deviation above baseline, bpm.
    pub u_hr: S,
    pub phase: Phase,
}

/// Glucose rate of appearance from the gut, mg/kg/min.
pub fn meal_ra<S: Scalar>(state: &MetabolicState<S>, host: &HostParams<S>) -> S {
    host.f_abs * host.k_gut2 * state.q2 * S::lit(1000.0) / host.bw
}

/// Derivatives of the subcutaneous depots and plasma insulin: `(ds1, ds2, dI)`.
pub fn plasma_insulin_deriv<S: Scalar>(
    state: &MetabolicState<S>,
    basal_rate: S,
    host: &HostParams<S>,
) -> (S, S, S) {
    let ds1 = basal_rate - host.k_sc1 * state.s1;
    let ds2 = host.k_sc1 * state.s1 - host.k_sc2 * state.s2;
    let di = host.k_sc2 * state.s2 * host.insulin_per_unit() - host.k_cl * state.i;
    (ds1, ds2, di)
}

/// Plasma glucose mass (mg/kg) at which insulin-independent uptake runs at half
/// of `f_cns`. Far below any physiological value; keeps `G_p` from crossing zero.
pub const CNS_HALF_SATURATION_MG_PER_KG: f64 = 1.0;

/// Insulin-independent (brain and erythrocyte) uptake, mg/kg/min.
pub fn cns_uptake<S: Scalar>(gp: S, host: &HostParams<S>) -> S {
    let gp = gp.max(S::zero());
    host.f_cns * gp / (gp + S::lit(CNS_HALF_SATURATION_MG_PER_KG))
}

/// Endogenous glucose production, mg/kg/min: basal minus linear insulin
/// suppression, never negative. Independent of glucose in this backbone.
pub fn egp<S: Scalar>(i: S, ib: S, host: &HostParams<S>) -> S {
    (host.egp_b - host.k_egp * (i - ib)).max(S::zero())
}

/// Right-hand side of the complete model.
pub fn metabolic_deriv<S: Scalar>(
    state: &MetabolicState<S>,
    inputs: &DerivInputs<S>,
    patient: &PatientParams<S>,
    host: &HostParams<S>,
) -> Result<MetabolicDeriv<S>> {
    let ex = ExerciseState {
        phi: exercise::phi(inputs.u_hr),
        w: exercise::exercise_w(
            inputs.phase,
            inputs.u_hr,
            state.ex.u_end,
            state.ex.t_since_end,
            patient.kappa,
        ),
        phase: inputs.phase,
        ..state.ex
    };
    let uid = exercise::uid_exercise(state.gt, state.x, &ex, patient)?;
    let ra = meal_ra(state, host);
    let production = egp(state.i, patient.ib, host);
    let (s1, s2, i) = plasma_insulin_deriv(state, inputs.basal_rate, host);
    let (h, theta) = exercise::exercise_derivs(ex.h, ex.theta, inputs.u_hr, patient);
    Ok(MetabolicDeriv {
        gp: production + ra - cns_uptake(state.gp, host) - host.k_12 * state.gp
            + host.k_21 * state.gt,
        gt: host.k_12 * state.gp - host.k_21 * state.gt - uid,
        q1: -host.k_gut1 * state.q1,
        q2: host.k_gut1 * state.q1 - host.k_gut2 * state.q2,
        s1,
        s2,
        i,
        x: exercise::insulin_action_deriv(state.x, state.i, patient.ib, patient.p2u),
        h,
        theta,
    })
}

/// Fasting steady state at a target glucose concentration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasalState<S> {
    pub state: MetabolicState<S>,
    /// Host parameters with `egp_b` set to the production that balances the
    /// basal uptake at the target glucose.
    pub host: HostParams<S>,
    /// Infusion rate holding plasma insulin at `ib`, U/min.
    pub basal_rate: S,
}

/// Solves the resting, fasting equilibrium with `bg = target_bg` mg/dl and `I = Ib`.
///
/// Peripheral glucose is the unique root of `k12*gp = k21*gt + Uid(gt, 0)`; the right
/// side is strictly increasing in `gt`, so bisection on `[0, k12*gp/k21]` converges.
/// Basal production then closes the plasma balance.
pub fn basal_state<S: Scalar>(
    patient: &PatientParams<S>,
    host: &HostParams<S>,
    target_bg: S,
) -> Result<BasalState<S>> {
    if !(target_bg > S::zero()) || !target_bg.is_finite() {
        return Err(Error::NonPositive {
            field: "fasting_bg",
            value: target_bg.as_f64(),
        });
    }
    let gp = target_bg * host.v_g;
    let inflow = host.k_12 * gp;
    let residual = |gt: S| -> Result<S> {
        Ok(inflow - host.k_21 * gt - exercise::uid_nominal(gt, S::zero(), patient)?)
    };
    let (mut lo, mut hi) = (S::zero(), inflow / host.k_21);
    for _ in 0..200 {
        let mid = (lo + hi) / S::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid)? > S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gt = (lo + hi) / S::lit(2.0);
    let uid = exercise::uid_nominal(gt, S::zero(), patient)?;
    let mut host = *host;
    let cns = cns_uptake(gp, &host);
    host.egp_b = cns + inflow - host.k_21 * gt;
    debug_assert!((host.egp_b - cns - uid).abs() <= S::lit(1e-6) * (S::one() + uid));

    let basal_rate = host.nominal_basal_rate(patient.ib);
    let state = MetabolicState {
        gp,
        gt,
        q1: S::zero(),
        q2: S::zero(),
        s1: basal_rate / host.k_sc1,
        s2: basal_rate / host.k_sc2,
        i: patient.ib,
        x: S::zero(),
        ex: ExerciseState::rest(),
    };
    Ok(BasalState {
        state,
        host,
        basal_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, OdeSystem};

    type H = HostParams<f64>;
    type P = PatientParams<f64>;

    fn basal() -> BasalState<f64> {
        basal_state(&P::nominal(), &H::placeholder(), 125.0).unwrap()
    }

    fn rest_inputs(b: &BasalState<f64>) -> DerivInputs<f64> {
        DerivInputs {
            basal_rate: b.basal_rate,
            u_hr: 0.0,
            phase: Phase::PreExercise,
        }
    }

    /// Gut chain plus an accumulator of the appearance rate.
    struct Gut(H);

    impl OdeSystem<f64> for Gut {
        fn dim(&self) -> usize {
            3
        }
        fn deriv(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            let s = MetabolicState {
                q1: y[0],
                q2: y[1],
                ..basal().state
            };
            dy[0] = -self.0.k_gut1 * y[0];
            dy[1] = self.0.k_gut1 * y[0] - self.0.k_gut2 * y[1];
            dy[2] = meal_ra(&s, &self.0);
            Ok(())
        }
    }

    #[test]
    fn empty_gut_has_no_appearance() {
        assert_eq!(meal_ra(&basal().state, &H::placeholder()), 0.0);
    }

    #[test]
    fn meal_appearance_conserves_mass() {
        let host = H::placeholder();
        let tr = integrate(&mut Gut(host), &[45.0, 0.0, 0.0], 0.0, 2000.0, 0.5, &[]).unwrap();
        let total = tr.last().1[2];
        assert!((total - 0.9 * 45_000.0 / 70.0).abs() < 1e-3, "{total}");
        assert!((total - 578.6).abs() < 0.05);
    }

    #[test]
    fn appearance_is_linear_in_dose() {
        let host = H::placeholder();
        let two = integrate(&mut Gut(host), &[40.0, 0.0, 0.0], 0.0, 300.0, 0.5, &[]).unwrap();
        let one = integrate(&mut Gut(host), &[20.0, 0.0, 0.0], 0.0, 300.0, 0.5, &[]).unwrap();
        for (a, b) in two.states.iter().zip(&one.states) {
            assert!((a[2] - 2.0 * b[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn basal_insulin_is_an_equilibrium() {
        let b = basal();
        let (a, c, d) = plasma_insulin_deriv(&b.state, b.basal_rate, &b.host);
        assert!(a.abs() < 1e-15 && c.abs() < 1e-15 && d.abs() < 1e-12);
        assert_eq!(b.state.i, 60.0);
    }

    /// Insulin chain alone: s1, s2, I under a constant infusion.
    struct Chain {
        host: H,
        rate: f64,
    }

    impl OdeSystem<f64> for Chain {
        fn dim(&self) -> usize {
            3
        }
        fn deriv(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            let s = MetabolicState {
                s1: y[0],
                s2: y[1],
                i: y[2],
                ..basal().state
            };
            let (a, b, c) = plasma_insulin_deriv(&s, self.rate, &self.host);
            dy.copy_from_slice(&[a, b, c]);
            Ok(())
        }
    }

    #[test]
    fn doubling_basal_doubles_insulin() {
        let b = basal();
        let y0 = [b.state.s1, b.state.s2, b.state.i];
        let mut sys = Chain {
            host: b.host,
            rate: 2.0 * b.basal_rate,
        };
        let tr = integrate(&mut sys, &y0, 0.0, 3000.0, 1.0, &[]).unwrap();
        assert!((tr.last().1[2] - 120.0).abs() < 1e-6);
    }

    #[test]
    fn bolus_response_matches_three_exponential_closed_form() {
        let host = H::placeholder();
        let (a, b, c) = (host.k_sc1, host.k_sc2, host.k_cl);
        let gain = host.insulin_per_unit();
        // unit impulse through three first-order stages with distinct rates
        let oracle = |t: f64| {
            gain * a
                * b
                * ((-a * t).exp() / ((b - a) * (c - a))
                    + (-b * t).exp() / ((a - b) * (c - b))
                    + (-c * t).exp() / ((a - c) * (b - c)))
        };
        let mut sys = Chain { host, rate: 0.0 };
        let tr = integrate(&mut sys, &[1.0, 0.0, 0.0], 0.0, 600.0, 0.25, &[]).unwrap();
        let mut peak_t = 0.0;
        let mut peak = 0.0;
        let mut rising = true;
        for (t, y) in tr.times.iter().zip(&tr.states) {
            assert!((y[2] - oracle(*t)).abs() < 1e-6);
            if y[2] > peak {
                assert!(rising, "second rise at t={t}");
                peak = y[2];
                peak_t = *t;
            } else if *t > 0.0 {
                rising = false;
            }
        }
        let oracle_peak = (0..=2400)
            .map(|k| k as f64 * 0.25)
            .max_by(|x, y| oracle(*x).total_cmp(&oracle(*y)))
            .unwrap();
        assert_eq!(peak_t, oracle_peak);
    }

    #[test]
    fn egp_cases() {
        let host = H::placeholder();
        assert_eq!(egp(60.0, 60.0, &host), host.egp_b);
        assert_eq!(egp(1e6, 60.0, &host), 0.0);
        let half = egp(60.0 + host.egp_b / (2.0 * host.k_egp), 60.0, &host);
        assert!((half - host.egp_b / 2.0).abs() < 1e-12);
    }

    #[test]
    fn basal_state_is_stationary() {
        let b = basal();
        assert!((b.state.bg(&b.host) - 125.0).abs() < 1e-6);
        let d = metabolic_deriv(&b.state, &rest_inputs(&b), &P::nominal(), &b.host).unwrap();
        let mut dy = [0.0; 10];
        d.write_into(&mut dy);
        assert!(dy.iter().all(|v| v.abs() < 1e-9), "{dy:?}");
    }

    #[test]
    fn exercise_drains_peripheral_glucose() {
        let b = basal();
        let p = P::nominal();
        let mut s = b.state;
        s.ex.h = 5.0;
        let inputs = DerivInputs {
            u_hr: 52.0,
            phase: Phase::Exercising,
            ..rest_inputs(&b)
        };
        let d = metabolic_deriv(&s, &inputs, &p, &b.host).unwrap();
        assert!(d.gt < 0.0);
        assert!(d.h > 0.0 && d.theta > 0.0);
    }

    #[test]
    fn glucose_mass_balance_is_exact() {
        let b = basal();
        let p = P::nominal();
        let s = MetabolicState {
            q2: 12.0,
            i: 140.0,
            x: 30.0,
            gp: 200.0,
            gt: 150.0,
            ..b.state
        };
        let inputs = DerivInputs {
            u_hr: 30.0,
            phase: Phase::Exercising,
            ..rest_inputs(&b)
        };
        let d = metabolic_deriv(&s, &inputs, &p, &b.host).unwrap();
        let ex = ExerciseState { w: 30.0, ..s.ex };
        let uid = exercise::uid_exercise(s.gt, s.x, &ex, &p).unwrap();
        let inflow = egp(s.i, p.ib, &b.host) + meal_ra(&s, &b.host);
        let outflow = cns_uptake(s.gp, &b.host) + uid;
        assert!((d.gp + d.gt - (inflow - outflow)).abs() < 1e-12);
    }

    #[test]
    fn host_validation() {
        assert!(H::placeholder().validate().is_ok());
        assert!(H {
            f_abs: 1.5,
            ..H::placeholder()
        }
        .validate()
        .is_err());
        assert!(matches!(
            H {
                k_cl: 0.0,
                ..H::placeholder()
            }
            .validate(),
            Err(Error::NonPositive { field: "k_cl", .. })
        ));
    }
}
