//! Fixed-step classical Runge-Kutta integration with exact event alignment.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A first-order system whose discrete inputs can change at event times.
pub trait OdeSystem<S> {
    fn dim(&self) -> usize;

    /// Writes `dy/dt` at `(t, y)` into `dy`.
    fn deriv(&self, t: S, y: &[S], dy: &mut [S]) -> Result<()>;

    /// Called once at each event time, between steps. May mutate both the
    /// system's discrete inputs and the state (impulses).
    fn on_event(&mut self, _index: usize, _t: S, _y: &mut [S]) {}
}

/// Mesh times and the state at each of them, post-event where an event fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub states: Vec<Vec<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn last(&self) -> (&S, &[S]) {
        let n = self.times.len() - 1;
        (&self.times[n], &self.states[n])
    }

    /// State at `t`: the recorded mesh point when `t` is on the mesh, linear
    /// interpolation between neighbours otherwise. Clamped to the covered span.
    pub fn state_at(&self, t: S) -> Vec<S> {
        let n = self.times.len();
        let idx = self.times.partition_point(|&x| x < t);
        if idx == 0 {
            return self.states[0].clone();
        }
        if idx >= n {
            return self.states[n - 1].clone();
        }
        let tol = S::lit(1e-9) * (S::one() + t.abs());
        if (self.times[idx] - t).abs() <= tol {
            return self.states[idx].clone();
        }
        let (ta, tb) = (self.times[idx - 1], self.times[idx]);
        let frac = (t - ta) / (tb - ta);
        self.states[idx - 1]
            .iter()
            .zip(&self.states[idx])
            .map(|(&a, &b)| a + frac * (b - a))
            .collect()
    }
}

struct Rk4Work<S> {
    k1: Vec<S>,
    k2: Vec<S>,
    k3: Vec<S>,
    k4: Vec<S>,
    tmp: Vec<S>,
}

impl<S: Scalar> Rk4Work<S> {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![S::zero(); n],
            k2: vec![S::zero(); n],
            k3: vec![S::zero(); n],
            k4: vec![S::zero(); n],
            tmp: vec![S::zero(); n],
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn rk4_step<S: Scalar, F: OdeSystem<S> + ?Sized>(
    sys: &F,
    t: S,
    h: S,
    y: &mut [S],
    w: &mut Rk4Work<S>,
) -> Result<()> {
    let two = S::lit(2.0);
    let half = h / two;
    sys.deriv(t, y, &mut w.k1)?;
    for i in 0..y.len() {
        w.tmp[i] = y[i] + half * w.k1[i];
    }
    sys.deriv(t + half, &w.tmp, &mut w.k2)?;
    for i in 0..y.len() {
        w.tmp[i] = y[i] + half * w.k2[i];
    }
    sys.deriv(t + half, &w.tmp, &mut w.k3)?;
    for i in 0..y.len() {
        w.tmp[i] = y[i] + h * w.k3[i];
    }
    sys.deriv(t + h, &w.tmp, &mut w.k4)?;
    let sixth = h / S::lit(6.0);
    for i in 0..y.len() {
        y[i] = y[i] + sixth * (w.k1[i] + two * w.k2[i] + two * w.k3[i] + w.k4[i]);
    }
    Ok(())
}

/// Integrates `sys` from `t_start` to `t_end` with classical RK4 at spacing `dt`.
///
/// The mesh is the uniform grid `t_start + k*dt` merged with every event time, so
/// events always coincide with a mesh point; `on_event` fires there before the
/// next step starts. Events at `t_start` fire before the first step. Events must be
/// sorted and lie in `[t_start, t_end]`.
pub fn integrate<S: Scalar, F: OdeSystem<S> + ?Sized>(
    sys: &mut F,
    y0: &[S],
    t_start: S,
    t_end: S,
    dt: S,
    events: &[S],
) -> Result<Trajectory<S>> {
    if !(dt > S::zero()) || !dt.is_finite() {
        return Err(Error::InvalidParameter {
            field: "dt_internal",
            reason: format!("must be > 0, got {dt}"),
        });
    }
    if !(t_end >= t_start) {
        return Err(Error::InvalidParameter {
            field: "t_span",
            reason: "t_end precedes t_start".into(),
        });
    }
    if y0.len() != sys.dim() {
        return Err(Error::InvalidParameter {
            field: "state0",
            reason: format!("expected {} components, got {}", sys.dim(), y0.len()),
        });
    }
    if events.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter {
            field: "events",
            reason: "not sorted".into(),
        });
    }
    if events.iter().any(|&e| e < t_start || e > t_end) {
        return Err(Error::InvalidParameter {
            field: "events",
            reason: "outside the time span".into(),
        });
    }

    // Mesh points closer than this merge into one.
    let snap = dt * S::lit(1e-9);
    let n_grid = ((t_end - t_start) / dt + S::lit(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0);
    let mut mesh: Vec<S> = (0..=n_grid)
        .map(|k| t_start + S::from_usize_lossy(k) * dt)
        .collect();
    if t_end - mesh[mesh.len() - 1] > snap {
        mesh.push(t_end);
    } else {
        let last = mesh.len() - 1;
        mesh[last] = t_end;
    }
    for &e in events {
        let pos = mesh.partition_point(|&m| m < e);
        let near = |i: usize| mesh.get(i).is_some_and(|&m| (m - e).abs() <= snap);
        if near(pos) {
            mesh[pos] = e;
        } else if pos > 0 && near(pos - 1) {
            mesh[pos - 1] = e;
        } else {
            mesh.insert(pos, e);
        }
    }

    let mut y = y0.to_vec();
    let mut work = Rk4Work::new(y.len());
    let mut next_event = 0;
    let mut times = Vec::with_capacity(mesh.len());
    let mut states = Vec::with_capacity(mesh.len());

    for (k, &t) in mesh.iter().enumerate() {
        if k > 0 {
            let t_prev = mesh[k - 1];
            rk4_step(sys, t_prev, t - t_prev, &mut y, &mut work)?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { t: t.as_f64() });
            }
        }
        while next_event < events.len() && (events[next_event] - t).abs() <= snap {
            sys.on_event(next_event, t, &mut y);
            next_event += 1;
        }
        times.push(t);
        states.push(y.clone());
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl OdeSystem<f64> for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn deriv(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -y[0] / self.0;
            Ok(())
        }
    }

    struct Kick {
        fired: Vec<f64>,
    }

    impl OdeSystem<f64> for Kick {
        fn dim(&self) -> usize {
            1
        }
        fn deriv(&self, _t: f64, _y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = 0.0;
            Ok(())
        }
        fn on_event(&mut self, _i: usize, t: f64, y: &mut [f64]) {
            self.fired.push(t);
            y[0] += 1.0;
        }
    }

    struct Blowup;

    impl OdeSystem<f64> for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn deriv(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[0] * y[0] * 1e200;
            Ok(())
        }
    }

    fn final_value(dt: f64) -> f64 {
        let tr = integrate(&mut Decay(10.0), &[1.0], 0.0, 10.0, dt, &[]).unwrap();
        tr.last().1[0]
    }

    #[test]
    fn exponential_decay_is_accurate() {
        assert!((final_value(0.1) - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let exact = (-1.0f64).exp();
        let e1 = (final_value(1.0) - exact).abs();
        let e2 = (final_value(0.5) - exact).abs();
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.4, "observed order {order}");
    }

    #[test]
    fn zero_field_is_constant() {
        for dt in [0.3, 1.0, 7.0] {
            let tr = integrate(&mut Kick { fired: vec![] }, &[3.5], 0.0, 20.0, dt, &[]).unwrap();
            assert!(tr.states.iter().all(|s| s[0] == 3.5));
        }
    }

    #[test]
    fn events_land_on_mesh_points() {
        let mut sys = Kick { fired: vec![] };
        let tr = integrate(&mut sys, &[0.0], 0.0, 10.0, 0.75, &[2.2, 2.2, 9.99]).unwrap();
        assert_eq!(sys.fired, vec![2.2, 2.2, 9.99]);
        assert!(tr.times.contains(&2.2));
        assert_eq!(tr.state_at(2.2)[0], 2.0);
        assert_eq!(tr.state_at(1.5)[0], 0.0);
        assert_eq!(tr.last().1[0], 3.0);
        assert_eq!(*tr.last().0, 10.0);
    }

    #[test]
    fn divergence_is_reported_with_time() {
        let err = integrate(&mut Blowup, &[1e100], 0.0, 5.0, 1.0, &[]).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn unsorted_events_are_rejected() {
        assert!(integrate(&mut Decay(1.0), &[1.0], 0.0, 5.0, 1.0, &[3.0, 1.0]).is_err());
        assert!(integrate(&mut Decay(1.0), &[1.0], 0.0, 5.0, 1.0, &[6.0]).is_err());
    }
}
