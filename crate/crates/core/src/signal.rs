//! Uniformly sampled signals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Physical unit attached to a [`TimeSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mg/dl")]
    MgPerDl,
    #[serde(rename = "bpm")]
    Bpm,
    #[serde(rename = "pmol/l")]
    PmolPerL,
    #[serde(rename = "mg/kg")]
    MgPerKg,
    #[serde(rename = "dimensionless")]
    Dimensionless,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::MgPerDl => "mg/dl",
            Unit::Bpm => "bpm",
            Unit::PmolPerL => "pmol/l",
            Unit::MgPerKg => "mg/kg",
            Unit::Dimensionless => "dimensionless",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mg/dl" => Ok(Unit::MgPerDl),
            "bpm" => Ok(Unit::Bpm),
            "pmol/l" => Ok(Unit::PmolPerL),
            "mg/kg" => Ok(Unit::MgPerKg),
            "dimensionless" | "" => Ok(Unit::Dimensionless),
            other => Err(format!("unknown unit `{other}`")),
        }
    }
}

/// A uniformly sampled scalar signal anchored at `t0` minutes after scenario start.
///
/// Sample `i` sits at `t0 + i * dt`. At least one sample, all finite, `dt > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<S> {
    t0: S,
    dt: S,
    values: Vec<S>,
    unit: Unit,
}

impl<S: Scalar> TimeSeries<S> {
    pub fn new(t0: S, dt: S, values: Vec<S>, unit: Unit) -> Result<Self> {
        if !(dt > S::zero()) || !dt.is_finite() {
            return Err(Error::InvalidSignal(format!("dt must be > 0, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidSignal("t0 must be finite".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptySignal(
                "a time series needs at least one sample".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
        }
        Ok(Self {
            t0,
            dt,
            values,
            unit,
        })
    }

    /// Samples `f` on `t0, t0 + dt, ...` for `n` points.
    pub fn from_fn(t0: S, dt: S, n: usize, unit: Unit, mut f: impl FnMut(S) -> S) -> Result<Self> {
        let values = (0..n)
            .map(|i| f(t0 + S::from_usize_lossy(i) * dt))
            .collect();
        Self::new(t0, dt, values, unit)
    }

    /// Interpolates irregular `(time, value)` samples onto a uniform grid of spacing `dt`
    /// starting at the first time. Times must be strictly increasing.
    pub fn from_irregular(times: &[S], values: &[S], unit: Unit, dt: S) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidSignal(
                "times and values differ in length".into(),
            ));
        }
        if times.is_empty() {
            return Err(Error::EmptySignal("no samples".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSignal("non-monotone time".into()));
        }
        let t0 = times[0];
        let span = times[times.len() - 1] - t0;
        let n = grid_count(span, dt);
        let mut out = Vec::with_capacity(n);
        let mut j = 0;
        for i in 0..n {
            let t = t0 + S::from_usize_lossy(i) * dt;
            while j + 2 < times.len() && times[j + 1] <= t {
                j += 1;
            }
            out.push(lerp_at(times, values, j, t));
        }
        Self::new(t0, dt, out, unit)
    }

    pub fn t0(&self) -> S {
        self.t0
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: construction rejects empty signals.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> S {
        self.t0 + S::from_usize_lossy(i) * self.dt
    }

    pub fn end_time(&self) -> S {
        self.time_at(self.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = S> + '_ {
        (0..self.len()).map(move |i| self.time_at(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.time_at(i), v))
    }

    /// Linear interpolation, clamped to the end samples outside the covered span.
    pub fn value_at(&self, t: S) -> S {
        let n = self.len();
        if n == 1 || t <= self.t0 {
            return self.values[0];
        }
        let pos = (t - self.t0) / self.dt;
        let i = pos.floor().to_usize().unwrap_or(usize::MAX);
        if i >= n - 1 {
            return self.values[n - 1];
        }
        let frac = pos - S::from_usize_lossy(i);
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    pub fn mean(&self) -> S {
        self.values.iter().fold(S::zero(), |a, &v| a + v) / S::from_usize_lossy(self.len())
    }

    /// Copy with every sample mapped through `f`.
    pub fn map(&self, f: impl FnMut(S) -> S) -> Result<Self> {
        Self::new(
            self.t0,
            self.dt,
            self.values.iter().copied().map(f).collect(),
            self.unit,
        )
    }

    /// Samples whose time lies in `[start, end]` (with a small tolerance on both edges).
    pub fn window(&self, start: S, end: S) -> Result<Self> {
        let tol = self.dt * S::lit(1e-9);
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let t = self.time_at(i);
                t >= start - tol && t <= end + tol
            })
            .collect();
        match (keep.first(), keep.last()) {
            (Some(&a), Some(&b)) => Self::new(
                self.time_at(a),
                self.dt,
                self.values[a..=b].to_vec(),
                self.unit,
            ),
            _ => Err(Error::EmptySignal(format!(
                "no samples in window [{start}, {end}] min"
            ))),
        }
    }

    /// True when both signals sit on the same time grid (same anchor, spacing and length).
    pub fn same_grid(&self, other: &Self) -> bool {
        let tol = self.dt * S::lit(1e-9);
        self.len() == other.len()
            && (self.t0 - other.t0).abs() <= tol
            && (self.dt - other.dt).abs() <= tol
    }

    pub(crate) fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(t0={}, dt={}, n={}) vs (t0={}, dt={}, n={})",
                self.t0,
                self.dt,
                self.len(),
                other.t0,
                other.dt,
                other.len()
            )))
        }
    }
}

/// Resamples `series` onto a grid of spacing `new_dt` by linear interpolation.
///
/// The first sample is kept verbatim; the last one too whenever the span is a multiple
/// of `new_dt`. Returns the input unchanged when `new_dt` equals its spacing.
pub fn resample_uniform<S: Scalar>(series: &TimeSeries<S>, new_dt: S) -> Result<TimeSeries<S>> {
    if !(new_dt > S::zero()) || !new_dt.is_finite() {
        return Err(Error::InvalidSignal(format!(
            "new_dt must be > 0, got {new_dt}"
        )));
    }
    if series.len() < 2 {
        return Err(Error::EmptySignal(
            "resampling needs at least two samples".into(),
        ));
    }
    if new_dt == series.dt {
        return Ok(series.clone());
    }
    let span = series.end_time() - series.t0;
    let n = grid_count(span, new_dt);
    let last = series.len() - 1;
    let values = (0..n)
        .map(|i| {
            let t = series.t0 + S::from_usize_lossy(i) * new_dt;
            if (t - series.end_time()).abs() <= new_dt * S::lit(1e-9) {
                series.values[last]
            } else {
                series.value_at(t)
            }
        })
        .collect();
    TimeSeries::new(series.t0, new_dt, values, series.unit)
}

/// Number of grid points `0, dt, 2dt, ...` fitting in `[0, span]`, tolerant to rounding.
fn grid_count<S: Scalar>(span: S, dt: S) -> usize {
    let steps = (span / dt + S::lit(1e-9)).floor();
    steps.to_usize().unwrap_or(0) + 1
}

fn lerp_at<S: Scalar>(times: &[S], values: &[S], j: usize, t: S) -> S {
    if times.len() == 1 {
        return values[0];
    }
    let (ta, tb) = (times[j], times[j + 1]);
    let frac = ((t - ta) / (tb - ta)).max(S::zero()).min(S::one());
    values[j] + frac * (values[j + 1] - values[j])
}
