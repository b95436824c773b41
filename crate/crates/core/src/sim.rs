//! Scenario replay on top of the metabolic model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exercise::{hr_deviation, ExerciseState, Phase};
use crate::host::{basal_state, metabolic_deriv, DerivInputs, HostParams, MetabolicState};
use crate::ode::{integrate, OdeSystem};
use crate::params::{validate_patient, PatientParams};
use crate::scalar::Scalar;
use crate::scenario::{HrInput, ScenarioSpec};
use crate::signal::{TimeSeries, Unit};

/// Protocol markers recorded in a [`SimResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ExerciseStart,
    ExerciseEnd,
    Bolus,
    Meal,
    Carbs,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ExerciseStart => "exercise_start",
            EventKind::ExerciseEnd => "exercise_end",
            EventKind::Bolus => "bolus",
            EventKind::Meal => "meal",
            EventKind::Carbs => "carbs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult<S> {
    /// Blood glucose on the output grid, mg/dl.
    pub bg: TimeSeries<S>,
    /// Model state at every `bg` sample.
    pub states: Vec<MetabolicState<S>>,
    pub events: Vec<(S, EventKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action<S> {
    ExerciseStart,
    ExerciseEnd,
    Bolus(S),
    Meal(S),
    Carbs(S),
    Basal(S),
    Sample,
}

impl<S> Action<S> {
    /// Tie-break order for simultaneous events.
    fn rank(&self) -> u8 {
        match self {
            Action::Basal(_) => 0,
            Action::ExerciseStart => 1,
            Action::ExerciseEnd => 2,
            Action::Bolus(_) => 3,
            Action::Meal(_) => 4,
            Action::Carbs(_) => 5,
            Action::Sample => 6,
        }
    }

    fn kind(&self) -> Option<EventKind> {
        match self {
            Action::ExerciseStart => Some(EventKind::ExerciseStart),
            Action::ExerciseEnd => Some(EventKind::ExerciseEnd),
            Action::Bolus(_) => Some(EventKind::Bolus),
            Action::Meal(_) => Some(EventKind::Meal),
            Action::Carbs(_) => Some(EventKind::Carbs),
            Action::Basal(_) | Action::Sample => None,
        }
    }
}

struct ScenarioSystem<'a, S> {
    patient: &'a PatientParams<S>,
    host: HostParams<S>,
    hr: &'a HrInput<S>,
    nominal_basal: S,
    actions: Vec<Action<S>>,
    phase: Phase,
    basal_fraction: S,
    t_start: S,
    t_end: S,
    /// Deviation at the end of exercise, seeding the post-exercise decay of `w`.
    u_end: S,
}

const IDX_Q1: usize = 2;
const IDX_S1: usize = 4;

impl<S: Scalar> ScenarioSystem<'_, S> {
    fn u_hr(&self, phase: Phase, t: S) -> S {
        match self.hr {
            HrInput::Step { amplitude } => match phase {
                Phase::Exercising => *amplitude,
                _ => S::zero(),
            },
            HrInput::Series(series) => hr_deviation(series.value_at(t), self.patient.hrb),
        }
    }

    fn phase_at(&self, t: S) -> Phase {
        if t < self.t_start {
            Phase::PreExercise
        } else if t < self.t_end {
            Phase::Exercising
        } else {
            Phase::PostExercise
        }
    }

    /// Discrete exercise fields at `t`, using the post-event convention at event times.
    fn exercise_at(&self, t: S) -> ExerciseState<S> {
        let phase = self.phase_at(t);
        ExerciseState {
            phase,
            u_end: self.u_end,
            t_since_end: match phase {
                Phase::PostExercise => t - self.t_end,
                _ => S::zero(),
            },
            ..ExerciseState::rest()
        }
    }

    fn state_at(&self, t: S, y: &[S]) -> MetabolicState<S> {
        let mut s = MetabolicState::from_slice(y, self.exercise_at(t));
        let u = self.u_hr(s.ex.phase, t);
        s.ex.phi = crate::exercise::phi(u);
        s.ex.w = crate::exercise::exercise_w(
            s.ex.phase,
            u,
            s.ex.u_end,
            s.ex.t_since_end,
            self.patient.kappa,
        );
        s
    }
}

impl<S: Scalar> OdeSystem<S> for ScenarioSystem<'_, S> {
    fn dim(&self) -> usize {
        MetabolicState::<S>::DIM
    }

    fn deriv(&self, t: S, y: &[S], dy: &mut [S]) -> Result<()> {
        let state = MetabolicState::from_slice(y, self.exercise_at(t));
        let inputs = DerivInputs {
            basal_rate: self.nominal_basal * self.basal_fraction,
            u_hr: self.u_hr(self.phase, t),
            phase: self.phase,
        };
        metabolic_deriv(&state, &inputs, self.patient, &self.host)?.write_into(dy);
        Ok(())
    }

    fn on_event(&mut self, index: usize, _t: S, y: &mut [S]) {
        match self.actions[index] {
            Action::ExerciseStart => self.phase = Phase::Exercising,
            Action::ExerciseEnd => self.phase = Phase::PostExercise,
            Action::Bolus(units) => y[IDX_S1] = y[IDX_S1] + units,
            Action::Meal(grams) | Action::Carbs(grams) => y[IDX_Q1] = y[IDX_Q1] + grams,
            Action::Basal(fraction) => self.basal_fraction = fraction,
            Action::Sample => {}
        }
    }
}

/// Fixed-step scenario runner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulator<S> {
    /// Integration step, min.
    pub dt_internal: S,
    /// Spacing of the returned glucose trace, min.
    pub output_dt: S,
}

impl<S: Scalar> Default for Simulator<S> {
    fn default() -> Self {
        Self {
            dt_internal: S::lit(0.5),
            output_dt: S::lit(5.0),
        }
    }
}

impl<S: Scalar> Simulator<S> {
    pub fn new(dt_internal: S) -> Self {
        Self {
            dt_internal,
            ..Self::default()
        }
    }

    /// Runs `scenario` from its fasting steady state and samples glucose every
    /// `output_dt` minutes over the whole duration.
    pub fn run_scenario(
        &self,
        patient: &PatientParams<S>,
        host: &HostParams<S>,
        scenario: &ScenarioSpec<S>,
    ) -> Result<SimResult<S>> {
        if !(self.output_dt > S::zero()) {
            return Err(Error::InvalidParameter {
                field: "output_dt",
                reason: "must be > 0".into(),
            });
        }
        let n = (scenario.duration / self.output_dt + S::lit(1e-9))
            .floor()
            .to_usize()
            .unwrap_or(0)
            + 1;
        let grid: Vec<S> = (0..n)
            .map(|i| S::from_usize_lossy(i) * self.output_dt)
            .collect();
        let (bg, states, events) =
            self.simulate(patient, host, scenario, scenario.duration, &grid)?;
        Ok(SimResult {
            bg: TimeSeries::new(S::zero(), self.output_dt, bg, Unit::MgPerDl)?,
            states,
            events,
        })
    }

    /// Glucose (mg/dl) at each time of `grid`, simulating only as far as its last sample.
    pub fn bg_on_grid(
        &self,
        patient: &PatientParams<S>,
        host: &HostParams<S>,
        scenario: &ScenarioSpec<S>,
        grid: &TimeSeries<S>,
    ) -> Result<TimeSeries<S>> {
        let times: Vec<S> = grid.times().collect();
        let (bg, _, _) = self.simulate(patient, host, scenario, grid.end_time(), &times)?;
        TimeSeries::new(grid.t0(), grid.dt(), bg, Unit::MgPerDl)
    }

    /// Independent runs for each subject, in input order. A failing subject yields
    /// its own error without aborting the others.
    pub fn run_population(
        &self,
        patients: &[PatientParams<S>],
        host: &HostParams<S>,
        scenario: &ScenarioSpec<S>,
    ) -> Result<Vec<Result<SimResult<S>>>> {
        if patients.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        Ok(patients
            .par_iter()
            .map(|p| self.run_scenario(p, host, scenario))
            .collect())
    }

    #[allow(clippy::type_complexity)]
    fn simulate(
        &self,
        patient: &PatientParams<S>,
        host: &HostParams<S>,
        scenario: &ScenarioSpec<S>,
        t_stop: S,
        sample_times: &[S],
    ) -> Result<(Vec<S>, Vec<MetabolicState<S>>, Vec<(S, EventKind)>)> {
        let patient = validate_patient(*patient)?;
        let host = host.validate()?;
        let scenario = scenario.clone().validate()?;
        if !(t_stop > S::zero() && t_stop <= scenario.duration) {
            return Err(Error::InvalidScenario(format!(
                "simulation end {t_stop} outside (0, {}]",
                scenario.duration
            )));
        }
        if sample_times.iter().any(|&t| t < S::zero() || t > t_stop) {
            return Err(Error::InvalidScenario(
                "sample time outside the simulated span".into(),
            ));
        }
        let basal = basal_state(&patient, &host, scenario.fasting_bg)?;

        let mut timeline: Vec<(S, Action<S>)> = vec![
            (scenario.exercise_start, Action::ExerciseStart),
            (scenario.exercise_end, Action::ExerciseEnd),
            (scenario.bolus_time, Action::Bolus(scenario.bolus_units)),
            (scenario.meal_time, Action::Meal(scenario.meal_grams)),
        ];
        for c in &scenario.carb_intakes {
            timeline.push((c.time, Action::Carbs(c.grams)));
        }
        for seg in &scenario.basal_schedule {
            timeline.push((seg.start, Action::Basal(seg.fraction)));
            timeline.push((seg.end, Action::Basal(S::one())));
        }
        timeline.retain(|(t, _)| *t <= t_stop);
        timeline.extend(sample_times.iter().map(|&t| (t, Action::Sample)));
        timeline.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.rank().cmp(&b.1.rank()))
        });
        // A segment ending where the next starts must not reset the new fraction.
        dedup_basal(&mut timeline, &scenario);

        let event_times: Vec<S> = timeline.iter().map(|(t, _)| *t).collect();
        let log: Vec<(S, EventKind)> = timeline
            .iter()
            .filter_map(|(t, a)| a.kind().map(|k| (*t, k)))
            .collect();

        let mut sys = ScenarioSystem {
            patient: &patient,
            host: basal.host,
            hr: &scenario.hr_input,
            nominal_basal: basal.basal_rate,
            actions: timeline.iter().map(|(_, a)| *a).collect(),
            phase: Phase::PreExercise,
            basal_fraction: S::one(),
            t_start: scenario.exercise_start,
            t_end: scenario.exercise_end,
            u_end: match &scenario.hr_input {
                HrInput::Step { amplitude } => *amplitude,
                HrInput::Series(hr) => {
                    hr_deviation(hr.value_at(scenario.exercise_end), patient.hrb)
                }
            },
        };

        let traj = integrate(
            &mut sys,
            &basal.state.to_vec(),
            S::zero(),
            t_stop,
            self.dt_internal,
            &event_times,
        )?;
        let states: Vec<MetabolicState<S>> = sample_times
            .iter()
            .map(|&t| sys.state_at(t, &traj.state_at(t)))
            .collect();
        let bg = states.iter().map(|s| s.bg(&basal.host)).collect();
        Ok((bg, states, log))
    }
}

fn dedup_basal<S: Scalar>(timeline: &mut Vec<(S, Action<S>)>, scenario: &ScenarioSpec<S>) {
    timeline.retain(|(t, a)| match a {
        Action::Basal(f) if *f == S::one() => scenario.basal_fraction_at(*t) == S::one(),
        _ => true,
    });
    for (t, a) in timeline.iter_mut() {
        if let Action::Basal(f) = a {
            *f = scenario.basal_fraction_at(*t);
        }
    }
}

/// [`Simulator::run_scenario`] with the default 0.5 min step and 5 min output grid.
pub fn run_scenario<S: Scalar>(
    patient: &PatientParams<S>,
    host: &HostParams<S>,
    scenario: &ScenarioSpec<S>,
) -> Result<SimResult<S>> {
    Simulator::default().run_scenario(patient, host, scenario)
}

/// [`Simulator::run_population`] with default settings.
pub fn run_population<S: Scalar>(
    patients: &[PatientParams<S>],
    host: &HostParams<S>,
    scenario: &ScenarioSpec<S>,
) -> Result<Vec<Result<SimResult<S>>>> {
    Simulator::default().run_population(patients, host, scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type P = PatientParams<f64>;
    type H = HostParams<f64>;
    type Sc = ScenarioSpec<f64>;

    fn bg_at(r: &SimResult<f64>, t: f64) -> f64 {
        r.bg.value_at(t)
    }

    #[test]
    fn control_arm_events_follow_protocol_order() {
        let r = run_scenario(&P::nominal(), &H::placeholder(), &Sc::control()).unwrap();
        let kinds: Vec<_> = r.events.iter().map(|e| e.1).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::ExerciseStart,
                EventKind::ExerciseEnd,
                EventKind::Bolus,
                EventKind::Meal
            ]
        );
        let times: Vec<_> = r.events.iter().map(|e| e.0).collect();
        assert_eq!(times, vec![60.0, 105.0, 130.0, 135.0]);
        assert_eq!(r.bg.len(), 58);
        assert_eq!(r.bg.end_time(), 285.0);
        assert_eq!(r.states.len(), r.bg.len());
    }

    #[test]
    fn fasting_scenario_stays_flat() {
        let r = run_scenario(&P::nominal(), &H::placeholder(), &Sc::fasting(360.0)).unwrap();
        for &v in r.bg.values() {
            assert!((v - 125.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn halved_basal_keeps_glucose_higher() {
        let p = P::nominal();
        let h = H::placeholder();
        let c = run_scenario(&p, &h, &Sc::control()).unwrap();
        let s = run_scenario(&p, &h, &Sc::strategy1()).unwrap();
        assert!(bg_at(&s, 105.0) > bg_at(&c, 105.0));
        assert_eq!(bg_at(&s, 55.0), bg_at(&c, 55.0));
    }

    #[test]
    fn exercise_lowers_glucose() {
        let r = run_scenario(&P::nominal(), &H::placeholder(), &Sc::control()).unwrap();
        assert!(bg_at(&r, 105.0) < bg_at(&r, 60.0));
        assert_eq!(bg_at(&r, 60.0), 125.0);
    }

    #[test]
    fn meal_enters_gut_exactly_at_meal_time() {
        let sim = Simulator {
            dt_internal: 0.7,
            output_dt: 5.0,
        };
        let mut sc = Sc::control();
        sc.meal_time = 133.3;
        let grid = TimeSeries::new(133.3, 0.05, vec![0.0; 3], Unit::MgPerDl).unwrap();
        let r = sim
            .run_scenario(&P::nominal(), &H::placeholder(), &sc)
            .unwrap();
        assert!(r
            .states
            .iter()
            .all(|s| s.q1 == 0.0 || s.q1 <= sc.meal_grams));
        let at = sim
            .simulate(
                &P::nominal(),
                &H::placeholder(),
                &sc,
                133.4,
                &[133.3, 133.25],
            )
            .unwrap();
        assert_eq!(at.1[0].q1, sc.meal_grams);
        assert_eq!(at.1[1].q1, 0.0);
        assert!(sim
            .bg_on_grid(&P::nominal(), &H::placeholder(), &sc, &grid)
            .is_ok());
    }

    #[test]
    fn larger_beta_gives_larger_drop() {
        let betas = [0.0143, 0.0446, 0.0566, 0.1016, 0.1655];
        let patients: Vec<_> = betas.iter().map(|&b| P::nominal().with_beta(b)).collect();
        let out = run_population(&patients, &H::placeholder(), &Sc::control()).unwrap();
        let drops: Vec<f64> = out
            .iter()
            .map(|r| {
                let r = r.as_ref().unwrap();
                bg_at(r, 60.0) - bg_at(r, 105.0)
            })
            .collect();
        assert!(drops.windows(2).all(|w| w[1] > w[0]), "{drops:?}");
    }

    #[test]
    fn population_is_deterministic_and_ordered() {
        let p = P::nominal();
        let bad = P { gamma: 3.0, ..p };
        let out = run_population(&[p, bad, p], &H::placeholder(), &Sc::control()).unwrap();
        assert!(out[1].is_err());
        assert_eq!(out[0].as_ref().unwrap(), out[2].as_ref().unwrap());
        assert!(matches!(
            run_population::<f64>(&[], &H::placeholder(), &Sc::control()),
            Err(Error::EmptyPopulation)
        ));
    }

    #[test]
    fn hr_series_input_drives_exercise() {
        let p = P::nominal();
        let hr = TimeSeries::from_fn(0.0, 5.0, 58, Unit::Bpm, |t| {
            if (60.0..105.0).contains(&t) {
                142.0
            } else {
                90.0
            }
        })
        .unwrap();
        let mut sc = Sc::control();
        sc.hr_input = HrInput::Series(hr);
        let r = run_scenario(&p, &H::placeholder(), &sc).unwrap();
        assert!(bg_at(&r, 105.0) < 120.0);
        let mid = &r.states[18];
        assert!(mid.ex.h > 0.0 && mid.ex.phase == Phase::Exercising);
    }

    #[test]
    fn grid_refinement_is_converged() {
        let p = P::nominal();
        let h = H::placeholder();
        for sc in [Sc::control(), Sc::strategy1()] {
            let a = Simulator::new(1.0).run_scenario(&p, &h, &sc).unwrap();
            let b = Simulator::new(0.5).run_scenario(&p, &h, &sc).unwrap();
            let sup =
                a.bg.values()
                    .iter()
                    .zip(b.bg.values())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
            assert!(sup < 0.01, "{sup}");
        }
    }

    #[test]
    fn single_precision_run() {
        let r = run_scenario(
            &PatientParams::<f32>::nominal(),
            &HostParams::placeholder(),
            &ScenarioSpec::control(),
        )
        .unwrap();
        assert!((r.bg.values()[0] - 125.0).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn states_stay_non_negative(
            amp in 0.0f64..80.0,
            beta in 0.005f64..0.2,
            meal in 0.0f64..90.0,
            bolus in 0.0f64..6.0,
            frac in 0.2f64..1.0,
            carbs in 0.0f64..30.0,
        ) {
            let p = P::nominal().with_beta(beta);
            let mut sc = Sc::strategy1().with_step(amp);
            sc.meal_grams = meal;
            sc.bolus_units = bolus;
            sc.basal_schedule[0].fraction = frac;
            sc.carb_intakes.push(crate::scenario::CarbIntake { time: 55.0, grams: carbs });
            let r = run_scenario(&p, &H::placeholder(), &sc).unwrap();
            for s in &r.states {
                for v in [s.gp, s.gt, s.q1, s.q2, s.s1, s.s2, s.i, s.ex.h, s.ex.theta, s.ex.w] {
                    prop_assert!(v >= 0.0, "{s:?}");
                }
            }
        }
    }
}
