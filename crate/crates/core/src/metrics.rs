//! Prediction accuracy and population summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport<S> {
    pub e_fit: S,
    /// mg/dl
    pub e_rms: S,
    pub n: usize,
}

/// Normalized fit `max(0, 1 - ||y_hat - y||_2 / ||y - mean(y)||_2)`.
pub fn fit_metric<S: Scalar>(y: &TimeSeries<S>, y_hat: &TimeSeries<S>) -> Result<S> {
    y.ensure_same_grid(y_hat)?;
    let mean = y.mean();
    let (num, den) = y
        .values()
        .iter()
        .zip(y_hat.values())
        .fold((S::zero(), S::zero()), |(n, d), (&a, &b)| {
            (n + (b - a) * (b - a), d + (a - mean) * (a - mean))
        });
    if den == S::zero() {
        return Err(Error::ZeroVarianceReference);
    }
    Ok((S::one() - num.sqrt() / den.sqrt()).max(S::zero()))
}

/// Root mean square error between two signals on the same grid.
pub fn rmse<S: Scalar>(y: &TimeSeries<S>, y_hat: &TimeSeries<S>) -> Result<S> {
    y.ensure_same_grid(y_hat)?;
    let sum = y
        .values()
        .iter()
        .zip(y_hat.values())
        .fold(S::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok((sum / S::from_usize_lossy(y.len())).sqrt())
}

pub fn accuracy<S: Scalar>(y: &TimeSeries<S>, y_hat: &TimeSeries<S>) -> Result<AccuracyReport<S>> {
    Ok(AccuracyReport {
        e_fit: fit_metric(y, y_hat)?,
        e_rms: rmse(y, y_hat)?,
        n: y.len(),
    })
}

/// Per-sample 25th percentile, median and 75th percentile of a population.
#[derive(Debug, Clone, PartialEq)]
pub struct Quartiles<S> {
    pub q25: TimeSeries<S>,
    pub median: TimeSeries<S>,
    pub q75: TimeSeries<S>,
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// position `p * (n - 1)` in the zero-based order statistics.
pub fn quantile_sorted<S: Scalar>(sorted: &[S], p: S) -> S {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * S::from_usize_lossy(n - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = pos - S::from_usize_lossy(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn population_quartiles<S: Scalar>(traces: &[TimeSeries<S>]) -> Result<Quartiles<S>> {
    let first = traces.first().ok_or(Error::EmptyPopulation)?;
    for t in &traces[1..] {
        first.ensure_same_grid(t)?;
    }
    let mut q25 = Vec::with_capacity(first.len());
    let mut q50 = Vec::with_capacity(first.len());
    let mut q75 = Vec::with_capacity(first.len());
    let mut column = Vec::with_capacity(traces.len());
    for i in 0..first.len() {
        column.clear();
        column.extend(traces.iter().map(|t| t.values()[i]));
        column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        q25.push(quantile_sorted(&column, S::lit(0.25)));
        q50.push(quantile_sorted(&column, S::lit(0.5)));
        q75.push(quantile_sorted(&column, S::lit(0.75)));
    }
    let mk = |v| TimeSeries::new(first.t0(), first.dt(), v, first.unit());
    Ok(Quartiles {
        q25: mk(q25)?,
        median: mk(q50)?,
        q75: mk(q75)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Unit;
    use proptest::prelude::*;

    fn ts(v: Vec<f64>) -> TimeSeries<f64> {
        TimeSeries::new(0.0, 5.0, v, Unit::MgPerDl).unwrap()
    }

    #[test]
    fn fit_identities() {
        let y = ts(vec![120.0, 110.0, 104.0, 98.0, 101.0]);
        assert_eq!(fit_metric(&y, &y).unwrap(), 1.0);
        let mean = ts(vec![y.mean(); 5]);
        assert!(fit_metric(&y, &mean).unwrap().abs() < 1e-15);
        let awful = y.map(|v| -v).unwrap();
        assert_eq!(fit_metric(&y, &awful).unwrap(), 0.0);
    }

    #[test]
    fn constant_reference_has_no_fit() {
        let y = ts(vec![5.0; 4]);
        assert!(matches!(
            fit_metric(&y, &y),
            Err(Error::ZeroVarianceReference)
        ));
    }

    #[test]
    fn rmse_identities() {
        let y = ts(vec![1.0, 2.0, 4.0]);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert!((rmse(&y, &y.map(|v| v + 3.0).unwrap()).unwrap() - 3.0).abs() < 1e-15);
        let other = TimeSeries::new(1.0, 5.0, vec![1.0, 2.0, 4.0], Unit::MgPerDl).unwrap();
        assert!(matches!(rmse(&y, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn quartiles_of_three_constants() {
        let q = population_quartiles(&[ts(vec![20.0; 3]), ts(vec![0.0; 3]), ts(vec![10.0; 3])])
            .unwrap();
        assert_eq!(q.q25.values(), &[5.0; 3]);
        assert_eq!(q.median.values(), &[10.0; 3]);
        assert_eq!(q.q75.values(), &[15.0; 3]);
    }

    #[test]
    fn quartiles_of_single_trace() {
        let t = ts(vec![1.0, 7.0, 3.0]);
        let q = population_quartiles(std::slice::from_ref(&t)).unwrap();
        assert_eq!(q.q25, t);
        assert_eq!(q.median, t);
        assert_eq!(q.q75, t);
        assert!(population_quartiles::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn rmse_is_a_metric(
            a in prop::collection::vec(-200.0f64..200.0, 8),
            b in prop::collection::vec(-200.0f64..200.0, 8),
            c in prop::collection::vec(-200.0f64..200.0, 8),
        ) {
            let (a, b, c) = (ts(a), ts(b), ts(c));
            let ab = rmse(&a, &b).unwrap();
            prop_assert_eq!(ab, rmse(&b, &a).unwrap());
            prop_assert!(ab <= rmse(&a, &c).unwrap() + rmse(&c, &b).unwrap() + 1e-9);
        }

        #[test]
        fn fit_shift_enters_only_through_the_mean(
            y in prop::collection::vec(-200.0f64..200.0, 6),
            yh in prop::collection::vec(-200.0f64..200.0, 6),
            shift in -500.0f64..500.0,
        ) {
            let (y, yh) = (ts(y), ts(yh));
            prop_assume!(y.values().iter().any(|&v| (v - y.values()[0]).abs() > 1e-3));
            let a = fit_metric(&y, &yh).unwrap();
            let b = fit_metric(&y.map(|v| v + shift).unwrap(), &yh.map(|v| v + shift).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn quartiles_are_ordered_and_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..300.0, 5), 1..9),
        ) {
            let traces: Vec<_> = rows.into_iter().map(ts).collect();
            let q = population_quartiles(&traces).unwrap();
            for i in 0..5 {
                prop_assert!(q.q25.values()[i] <= q.median.values()[i]);
                prop_assert!(q.median.values()[i] <= q.q75.values()[i]);
            }
            let mut rev = traces.clone();
            rev.reverse();
            prop_assert_eq!(population_quartiles(&rev).unwrap(), q);
        }
    }
}
