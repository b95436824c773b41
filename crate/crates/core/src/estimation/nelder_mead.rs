//! Derivative-free simplex minimization inside a box.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions<S> {
    /// Relative tolerance on the spread of cost values across the simplex.
    pub ftol: S,
    pub max_iter: usize,
}

impl<S: Scalar> Default for SimplexOptions<S> {
    fn default() -> Self {
        Self {
            ftol: S::lit(1e-8),
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult<S> {
    pub x: Vec<S>,
    pub fx: S,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead with every trial point projected onto `[lower, upper]`.
///
/// A simplex has converged when `2 (f_max - f_min) <= ftol (|f_max| + |f_min|)`,
/// when the spread is below rounding of the starting cost (`eps * f(x0)`), or when
/// its vertices coincide to machine precision. Noise-free problems are therefore
/// driven close to their floating-point floor rather than stopped at a fixed cost.
/// Non-finite costs are treated as `+inf`. After the spread criterion is met the
/// search restarts once from the best vertex with a fresh simplex; it stops for good
/// when a restart no longer improves the best cost by more than `ftol`.
pub fn minimize<S: Scalar>(
    mut f: impl FnMut(&[S]) -> S,
    x0: &[S],
    lower: &[S],
    upper: &[S],
    opts: &SimplexOptions<S>,
) -> SimplexResult<S> {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[S]| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            S::infinity()
        }
    };
    let project = |x: &mut [S]| {
        for i in 0..x.len() {
            x[i] = x[i].max(lower[i]).min(upper[i]);
        }
    };

    let mut best_x = x0.to_vec();
    project(&mut best_x);
    let mut best_f = eval(&best_x);
    let floor = if best_f.is_finite() {
        S::epsilon() * best_f.abs()
    } else {
        S::zero()
    };
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        let mut simplex = initial_simplex(&best_x, lower, upper);
        let mut values: Vec<S> = Vec::with_capacity(n + 1);
        values.push(best_f);
        for v in simplex.iter().skip(1) {
            values.push(eval(v));
        }
        let start_f = best_f;
        let mut local_converged = false;

        while iterations < opts.max_iter {
            order(&mut simplex, &mut values);
            if spread_converged(values[0], values[n], opts.ftol, floor) || collapsed(&simplex) {
                local_converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<S> = (0..n)
                .map(|j| {
                    simplex[..n].iter().fold(S::zero(), |a, v| a + v[j]) / S::from_usize_lossy(n)
                })
                .collect();
            let along = |t: S| -> Vec<S> {
                let mut p: Vec<S> = (0..n)
                    .map(|j| centroid[j] + t * (simplex[n][j] - centroid[j]))
                    .collect();
                project(&mut p);
                p
            };

            let xr = along(-S::one());
            let fr = eval(&xr);
            if fr < values[0] {
                let xe = along(S::lit(-2.0));
                let fe = eval(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc, target) = if fr < values[n] {
                let xc = along(S::lit(-0.5));
                let fc = eval(&xc);
                (xc, fc, fr)
            } else {
                let xc = along(S::lit(0.5));
                let fc = eval(&xc);
                (xc, fc, values[n])
            };
            if fc < target {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for k in 1..=n {
                let mut p: Vec<S> = (0..n)
                    .map(|j| simplex[0][j] + S::lit(0.5) * (simplex[k][j] - simplex[0][j]))
                    .collect();
                project(&mut p);
                values[k] = eval(&p);
                simplex[k] = p;
            }
        }
        order(&mut simplex, &mut values);
        if values[0] <= best_f {
            best_f = values[0];
            best_x = simplex[0].clone();
        }
        if local_converged && spread_converged(best_f, start_f, opts.ftol, floor) {
            converged = true;
            break;
        }
    }

    SimplexResult {
        x: best_x,
        fx: best_f,
        iterations,
        evaluations: evals,
        converged,
    }
}

fn spread_converged<S: Scalar>(lo: S, hi: S, ftol: S, floor: S) -> bool {
    let tiny = S::epsilon() * S::epsilon();
    S::lit(2.0) * (hi - lo) <= ftol * (hi.abs() + lo.abs()) + floor.max(tiny)
}

fn collapsed<S: Scalar>(simplex: &[Vec<S>]) -> bool {
    let best = &simplex[0];
    simplex[1..].iter().all(|v| {
        v.iter()
            .zip(best)
            .all(|(a, b)| (*a - *b).abs() <= S::lit(4.0) * S::epsilon() * a.abs().max(b.abs()))
    })
}

fn initial_simplex<S: Scalar>(x0: &[S], lower: &[S], upper: &[S]) -> Vec<Vec<S>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let range = upper[i] - lower[i];
        let mut step = if x0[i] != S::zero() {
            S::lit(0.1) * x0[i].abs()
        } else {
            S::lit(0.05) * range
        };
        step = step.min(S::lit(0.5) * range);
        let mut v = x0.to_vec();
        v[i] = if x0[i] + step <= upper[i] {
            x0[i] + step
        } else {
            x0[i] - step
        };
        v[i] = v[i].max(lower[i]).min(upper[i]);
        simplex.push(v);
    }
    simplex
}

fn order<S: Scalar>(simplex: &mut [Vec<S>], values: &mut [S]) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s: Vec<Vec<S>> = idx.iter().map(|&i| simplex[i].clone()).collect();
    let v: Vec<S> = idx.iter().map(|&i| values[i]).collect();
    simplex.clone_from_slice(&s);
    values.copy_from_slice(&v);
}
