//! Clinical protocol timelines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{TimeSeries, Unit};

/// Heart-rate drive of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HrInput<S> {
    /// Constant deviation above baseline over the exercise window, bpm.
    Step { amplitude: S },
    /// Measured absolute heart rate, bpm; the deviation is taken against the
    /// subject's baseline at every instant.
    Series(TimeSeries<S>),
}

/// Basal infusion scaled by `fraction` over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasalSegment<S> {
    #[serde(rename = "start_min")]
    pub start: S,
    #[serde(rename = "end_min")]
    pub end: S,
    pub fraction: S,
}

/// Extra oral carbohydrate, e.g. dextrose tablets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbIntake<S> {
    #[serde(rename = "time_min")]
    pub time: S,
    #[serde(rename = "grams")]
    pub grams: S,
}

/// One experimental session. Times in minutes from scenario start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec<S> {
    pub duration: S,
    pub exercise_start: S,
    pub exercise_end: S,
    pub hr_input: HrInput<S>,
    pub meal_time: S,
    pub meal_grams: S,
    pub bolus_time: S,
    pub bolus_units: S,
    pub basal_schedule: Vec<BasalSegment<S>>,
    pub carb_intakes: Vec<CarbIntake<S>>,
    /// Glucose concentration of the fasting steady state at t = 0, mg/dl.
    pub fasting_bg: S,
}

impl<S: Scalar> ScenarioSpec<S> {
    /// Control arm: one fasting hour, 45 min of exercise at a 52 bpm deviation,
    /// 30 min rest, a 47 g meal with its bolus 5 min earlier, then 150 min of follow-up.
    pub fn control() -> Self {
        Self {
            duration: S::lit(285.0),
            exercise_start: S::lit(60.0),
            exercise_end: S::lit(105.0),
            hr_input: HrInput::Step {
                amplitude: S::lit(52.0),
            },
            meal_time: S::lit(135.0),
            meal_grams: S::lit(47.0),
            bolus_time: S::lit(130.0),
            bolus_units: S::lit(2.0),
            basal_schedule: Vec::new(),
            carb_intakes: Vec::new(),
            fasting_bg: S::lit(125.0),
        }
    }

    /// Control arm with the basal infusion halved during exercise.
    pub fn strategy1() -> Self {
        let mut s = Self::control();
        s.basal_schedule = vec![BasalSegment {
            start: s.exercise_start,
            end: s.exercise_end,
            fraction: S::lit(0.5),
        }];
        s
    }

    /// No exercise drive, no meal, no bolus: the fasting state should persist.
    pub fn fasting(duration: S) -> Self {
        Self {
            duration,
            exercise_start: duration / S::lit(3.0),
            exercise_end: duration / S::lit(2.0),
            hr_input: HrInput::Step {
                amplitude: S::zero(),
            },
            meal_time: duration,
            meal_grams: S::zero(),
            bolus_time: duration,
            bolus_units: S::zero(),
            basal_schedule: Vec::new(),
            carb_intakes: Vec::new(),
            fasting_bg: S::lit(125.0),
        }
    }

    pub fn with_step(mut self, amplitude: S) -> Self {
        self.hr_input = HrInput::Step { amplitude };
        self
    }

    /// Basal fraction in force at `t` (1 outside every segment).
    pub fn basal_fraction_at(&self, t: S) -> S {
        self.basal_schedule
            .iter()
            .find(|seg| t >= seg.start && t < seg.end)
            .map_or(S::one(), |seg| seg.fraction)
    }

    pub fn validate(self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        let finite = [
            self.duration,
            self.exercise_start,
            self.exercise_end,
            self.meal_time,
            self.meal_grams,
            self.bolus_time,
            self.bolus_units,
            self.fasting_bg,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite field".into());
        }
        if !(self.duration > S::zero()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.exercise_start >= S::zero()
            && self.exercise_start < self.exercise_end
            && self.exercise_end <= self.duration)
        {
            return bad(format!(
                "need 0 <= exercise_start < exercise_end <= duration, got {} / {} / {}",
                self.exercise_start, self.exercise_end, self.duration
            ));
        }
        if !(self.meal_time > self.exercise_end && self.meal_time <= self.duration) {
            return bad(format!(
                "meal at {} min must follow exercise end ({}) within the scenario",
                self.meal_time, self.exercise_end
            ));
        }
        if !(self.bolus_time >= S::zero() && self.bolus_time <= self.duration) {
            return bad(format!(
                "bolus time {} outside the scenario",
                self.bolus_time
            ));
        }
        if self.meal_grams < S::zero() || self.bolus_units < S::zero() {
            return bad("meal grams and bolus units must be non-negative".into());
        }
        if !(self.fasting_bg > S::zero()) {
            return bad("fasting_bg must be > 0".into());
        }
        match &self.hr_input {
            HrInput::Step { amplitude } if !(*amplitude >= S::zero()) || !amplitude.is_finite() => {
                return bad(format!("step amplitude must be >= 0, got {amplitude}"));
            }
            HrInput::Series(s) if s.unit() != Unit::Bpm => {
                return bad(format!(
                    "heart-rate series must be in bpm, got {}",
                    s.unit()
                ));
            }
            _ => {}
        }
        let mut segs: Vec<_> = self.basal_schedule.clone();
        segs.sort_by(|a, b| {
            a.start
                .partial_cmp(&b.start)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for seg in &segs {
            if !(seg.fraction > S::zero() && seg.fraction <= S::one()) {
                return bad(format!("basal fraction {} outside (0, 1]", seg.fraction));
            }
            if !(seg.start >= S::zero() && seg.start < seg.end && seg.end <= self.duration) {
                return bad(format!(
                    "basal segment [{}, {}) outside the scenario",
                    seg.start, seg.end
                ));
            }
        }
        if segs.windows(2).any(|w| w[1].start < w[0].end) {
            return bad("overlapping basal segments".into());
        }
        for c in &self.carb_intakes {
            if !(c.time >= S::zero() && c.time <= self.duration && c.grams >= S::zero()) {
                return bad(format!(
                    "carbohydrate intake {} g at {} min is invalid",
                    c.grams, c.time
                ));
            }
        }
        Ok(self)
    }
}
