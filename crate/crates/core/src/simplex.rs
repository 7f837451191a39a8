//! Bounded Nelder–Mead simplex search with Latin-hypercube multistart.
//!
//! Derivative-free reflection/expansion/contraction search on a box, used by
//! the calibration fits. Trial points are projected onto the bounds.
//! Multistart draws its initial points by Latin-hypercube over the box and
//! keeps the best residual; exact ties break toward the lowest start index,
//! so the result is deterministic for a fixed seed at any thread count.

use crate::error::{Error, Result};
use crate::sensitivity::lhs_sample;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Iteration budget per start.
    pub max_iterations: usize,
    /// Converged when the simplex function spread falls below
    /// `ftol_abs + ftol_rel·|f_best|`.
    pub ftol_abs: f64,
    pub ftol_rel: f64,
    /// ... or when every vertex coordinate agrees to this fraction of the
    /// bound width.
    pub xtol_rel: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            ftol_abs: 1e-14,
            ftol_rel: 1e-12,
            xtol_rel: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn clip(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimize `f` on a box from one starting point.
pub fn minimize_bounded<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &SimplexOptions,
) -> Result<SimplexResult> {
    let n = x0.len();
    if n == 0 || bounds.len() != n {
        return Err(Error::validation("dimension mismatch between start and bounds"));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation(format!("invalid bound {i}: [{lo}, {hi}]")));
        }
    }

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| -> f64 {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: start point plus a 5%-of-range step per coordinate,
    // flipped when it would leave the box.
    let mut start = x0.to_vec();
    clip(&mut start, bounds);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = 0.05 * (hi - lo);
        let mut v = start.clone();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;

        // Order vertices by value.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_best = values[best];
        let f_worst = values[worst];
        if (f_worst - f_best).abs() <= opts.ftol_abs + opts.ftol_rel * f_best.abs() {
            converged = true;
            break;
        }
        let x_spread_small = (0..n).all(|i| {
            let width = bounds[i].1 - bounds[i].0;
            let lo = simplex.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
            let hi = simplex.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo <= opts.xtol_rel * width
        });
        if x_spread_small {
            converged = true;
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }

        let point_along = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(&c, &w)| c + coef * (c - w))
                .collect();
            clip(&mut p, bounds);
            p
        };

        let reflected = point_along(ALPHA);
        let f_reflected = eval(&reflected);

        if f_reflected < values[best] {
            let expanded = point_along(GAMMA);
            let f_expanded = eval(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = if f_reflected < values[worst] {
                point_along(RHO)
            } else {
                point_along(-RHO)
            };
            let f_contracted = eval(&contracted);
            if f_contracted < values[worst].min(f_reflected) {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for idx in 0..=n {
                    if idx == best {
                        continue;
                    }
                    for i in 0..n {
                        simplex[idx][i] = best_point[i] + SIGMA * (simplex[idx][i] - best_point[i]);
                    }
                    clip(&mut simplex[idx], bounds);
                    values[idx] = eval(&simplex[idx]);
                }
            }
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Ok(SimplexResult {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        evaluations,
        converged,
    })
}

/// Multistart search: Latin-hypercube starting points, one simplex per start,
/// minimum residual wins with ties broken by the lowest start index.
pub fn multistart<F: Fn(&[f64]) -> f64 + Sync>(
    f: F,
    bounds: &[(f64, f64)],
    n_starts: usize,
    seed: u64,
    opts: &SimplexOptions,
) -> Result<(SimplexResult, Vec<SimplexResult>)> {
    if n_starts == 0 {
        return Err(Error::validation("multistart needs at least one start"));
    }
    let names: Vec<String> = (0..bounds.len()).map(|i| format!("x{i}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let design = lhs_sample(&name_refs, bounds, n_starts.max(2), seed)?;

    let results: Vec<SimplexResult> = design.samples[..n_starts]
        .par_iter()
        .map(|x0| minimize_bounded(&f, x0, bounds, opts))
        .collect::<Result<Vec<_>>>()?;

    let mut best_idx = 0usize;
    for (i, r) in results.iter().enumerate() {
        if r.f < results[best_idx].f {
            best_idx = i;
        }
    }
    if results.iter().all(|r| !r.converged) {
        let b = &results[best_idx];
        return Err(Error::Calibration(format!(
            "no start converged in {} iterations; best residual {:.6e} at {:?}",
            opts.max_iterations, b.f, b.x
        )));
    }
    Ok((results[best_idx].clone(), results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_bowl_minimum() {
        let res = minimize_bounded(
            |x| (x[0] - 1.2).powi(2) + 3.0 * (x[1] + 0.7).powi(2),
            &[0.0, 0.0],
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &SimplexOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert_abs_diff_eq!(res.x[0], 1.2, epsilon = 1e-5);
        assert_abs_diff_eq!(res.x[1], -0.7, epsilon = 1e-5);
    }

    #[test]
    fn respects_bounds_when_minimum_is_outside() {
        let res = minimize_bounded(
            |x| (x[0] - 10.0).powi(2),
            &[0.5],
            &[(0.0, 2.0)],
            &SimplexOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(res.x[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn multistart_finds_global_among_two_basins() {
        // Double well with the deeper basin near x = 2.
        let f = |x: &[f64]| {
            let a = (x[0] + 2.0).powi(2) + 0.5;
            let b = (x[0] - 2.0).powi(2);
            a.min(b)
        };
        let (best, all) = multistart(f, &[(-4.0, 4.0)], 8, 7, &SimplexOptions::default()).unwrap();
        assert_eq!(all.len(), 8);
        assert_abs_diff_eq!(best.x[0], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn multistart_is_deterministic_for_fixed_seed() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
        let bounds = [(0.0, 1.0), (0.0, 1.0)];
        let (a, _) = multistart(f, &bounds, 6, 99, &SimplexOptions::default()).unwrap();
        let (b, _) = multistart(f, &bounds, 6, 99, &SimplexOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.f, b.f);
    }
}
