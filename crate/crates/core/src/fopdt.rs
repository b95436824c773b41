//! First-order-plus-dead-time disturbance model of the glucose response to a
//! heart-rate step: `G(s) = -K e^{-s tau} / (T s + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{TimeSeries, Unit};

/// CGM sampling interval that delay estimates are rounded to, min.
pub const CGM_GRID_MIN: f64 = 5.0;
/// Range delay estimates are clipped to, min.
pub const DELAY_CLIP_MIN: (f64, f64) = (5.0, 25.0);
/// Default glucose drop marking the onset of the exercise response, mg/dl.
pub const DEFAULT_DROP_THRESHOLD: f64 = 2.0;

/// `K` in mg/dl per bpm (stored positive; the glucose response is a drop),
/// `T` in min, dead time `tau` in min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FopdtModel<S> {
    #[serde(rename = "k_mg_dl_per_bpm")]
    pub gain: S,
    #[serde(rename = "t_min")]
    pub time_constant: S,
    #[serde(rename = "tau_min")]
    pub delay: S,
}

impl<S: Scalar> FopdtModel<S> {
    pub fn new(gain: S, time_constant: S, delay: S) -> Result<Self> {
        if !(gain > S::zero()) || !gain.is_finite() {
            return Err(Error::NonPositive {
                field: "K",
                value: gain.as_f64(),
            });
        }
        if !(time_constant > S::zero()) || !time_constant.is_finite() {
            return Err(Error::NonPositive {
                field: "T",
                value: time_constant.as_f64(),
            });
        }
        if !(delay >= S::zero()) || !delay.is_finite() {
            return Err(Error::InvalidParameter {
                field: "tau",
                reason: format!("must be >= 0, got {delay}"),
            });
        }
        Ok(Self {
            gain,
            time_constant,
            delay,
        })
    }

    /// Unit-step response of `1 / (T s + 1)` at `s` minutes after the (delayed) step.
    fn rise(&self, s: S) -> S {
        if s > S::zero() {
            S::one() - (-s / self.time_constant).exp()
        } else {
            S::zero()
        }
    }

    /// Glucose deviation (mg/dl) at time `t` for a heart-rate pulse of height `u_amp`
    /// over `[t_on, t_off)`.
    pub fn pulse_response_at(&self, u_amp: S, t_on: S, t_off: S, t: S) -> S {
        let on = self.rise(t - t_on - self.delay);
        let off = self.rise(t - t_off - self.delay);
        -self.gain * u_amp * (on - off)
    }

    /// `|G(jw)|` (linear) and phase in degrees, including the 180 degrees of the sign.
    pub fn frequency_response(&self, omega: S) -> (S, S) {
        let wt = omega * self.time_constant;
        let mag = self.gain / (S::one() + wt * wt).sqrt();
        let to_deg = S::lit(180.0) / S::PI();
        let phase = S::lit(180.0) - omega * self.delay * to_deg - wt.atan() * to_deg;
        (mag, phase)
    }
}

/// Deviation of glucose from baseline on `grid`'s time grid for a heart-rate
/// pulse of `u_amp` bpm switched on at `t_on` and off at `t_off`.
///
/// Zero until `t_on + tau`, then a first-order drop toward `-K u_amp`, and a
/// first-order relaxation back to zero once `t_off + tau` has passed.
pub fn fopdt_step_response<S: Scalar>(
    model: &FopdtModel<S>,
    u_amp: S,
    t_on: S,
    t_off: S,
    grid: &TimeSeries<S>,
) -> Result<TimeSeries<S>> {
    if !(t_on < t_off) {
        return Err(Error::InvalidParameter {
            field: "t_off",
            reason: format!("step must switch off after it switches on ({t_on} >= {t_off})"),
        });
    }
    TimeSeries::from_fn(grid.t0(), grid.dt(), grid.len(), Unit::MgPerDl, |t| {
        model.pulse_response_at(u_amp, t_on, t_off, t)
    })
}

/// Dead time read off a glucose trace around exercise onset.
///
/// The baseline is the mean of the three samples just before `exercise_start`. The
/// delay is the first sample at or after the start whose value reaches
/// `baseline - drop_threshold`, measured from the start, rounded to the 5 min CGM
/// grid and clipped to `[5, 25]` min.
pub fn estimate_delay<S: Scalar>(
    bg: &TimeSeries<S>,
    exercise_start: S,
    drop_threshold: S,
) -> Result<S> {
    let tol = bg.dt() * S::lit(1e-6);
    if bg.t0() > exercise_start - S::lit(15.0) + tol
        || bg.end_time() < exercise_start + S::lit(45.0) - tol
    {
        return Err(Error::InvalidSignal(format!(
            "trace must cover [{}, {}] min, covers [{}, {}]",
            exercise_start - S::lit(15.0),
            exercise_start + S::lit(45.0),
            bg.t0(),
            bg.end_time()
        )));
    }
    let before: Vec<S> = bg
        .iter()
        .filter(|(t, _)| *t < exercise_start - tol)
        .map(|(_, v)| v)
        .collect();
    if before.len() < 3 {
        return Err(Error::InvalidSignal(
            "fewer than three samples before exercise start".into(),
        ));
    }
    let baseline = before[before.len() - 3..]
        .iter()
        .fold(S::zero(), |a, &v| a + v)
        / S::lit(3.0);
    let level = baseline - drop_threshold;
    let onset = bg
        .iter()
        .find(|(t, v)| *t >= exercise_start - tol && *v <= level)
        .map(|(t, _)| t)
        .ok_or_else(|| {
            Error::NoDetectableResponse(format!(
                "glucose never fell {drop_threshold} mg/dl below its {baseline} mg/dl baseline"
            ))
        })?;
    let grid = S::lit(CGM_GRID_MIN);
    let rounded = ((onset - exercise_start) / grid).round() * grid;
    Ok(rounded
        .max(S::lit(DELAY_CLIP_MIN.0))
        .min(S::lit(DELAY_CLIP_MIN.1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodePoint<S> {
    /// rad/min
    pub omega: S,
    pub mag_db: S,
    pub phase_deg: S,
}

/// Magnitude (dB) and unwrapped phase (deg) of the model on `omegas` (rad/min).
pub fn bode<S: Scalar>(model: &FopdtModel<S>, omegas: &[S]) -> Result<Vec<BodePoint<S>>> {
    omegas
        .iter()
        .map(|&omega| {
            if !(omega > S::zero()) || !omega.is_finite() {
                return Err(Error::InvalidParameter {
                    field: "omega",
                    reason: format!("must be > 0, got {omega}"),
                });
            }
            let (mag, phase_deg) = model.frequency_response(omega);
            Ok(BodePoint {
                omega,
                mag_db: S::lit(20.0) * mag.log10(),
                phase_deg,
            })
        })
        .collect()
}

/// `n` frequencies spaced evenly in log scale over `[lo, hi]`.
pub fn log_grid<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            S::lit(10.0).powf(a + (b - a) * S::from_usize_lossy(i) / S::from_usize_lossy(n - 1))
        })
        .collect()
}
