//! Optimal treatment scheduling by the forward-backward sweep (FBS) method.
//!
//! The problem: choose a deprivation schedule u(t) on [t_tr, t_f] with
//! u_a ≤ u ≤ u_b minimizing
//!
//! ```text
//! J(u) = ∫ (w_S·S + w_R·R + (w_u/2)·u²) dt
//! ```
//!
//! subject to the extended model dynamics. Stationarity of the Hamiltonian
//! gives the projected control `u* = min(u_b, max(u_a, r·F·λ_E/w_u))`, where
//! the adjoint variables λ solve a terminal-value system (λ(t_f) = 0)
//! integrated backward along the current state trajectory.
//!
//! Each sweep iteration integrates the state forward under the current
//! control, the adjoints backward, projects a candidate control, and then
//! takes the greedy convex combination `u_s = (1−s)·u_prev + s·u_cand`,
//! picking the s with the lowest cost among a fixed candidate set. The sweep
//! stops when state, adjoint and control arrays all change by less than a
//! relative 1e-5 between iterations.

use crate::error::{Error, Result};
use crate::model::{ExtendedModel, ModelParams, StateExtended};
use crate::ode::{integrate, linspace, IntegratorConfig, OdeSystem, Trajectory};
use rayon::prelude::*;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

// ---------------------------------------------------------------------------
// Weights, control grid, adjoint state
// ---------------------------------------------------------------------------

/// Cost-functional weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcpWeights {
    /// Penalty on the sensitive population.
    pub w_s: f64,
    /// Penalty on the resistant population.
    pub w_r: f64,
    /// Penalty on the squared control.
    pub w_u: f64,
}

impl Default for OcpWeights {
    fn default() -> Self {
        Self {
            w_s: 1.0,
            w_r: 1.0,
            w_u: 1.0,
        }
    }
}

impl OcpWeights {
    pub fn validate(&self) -> Result<()> {
        let bad: Vec<String> = [("w_s", self.w_s), ("w_r", self.w_r), ("w_u", self.w_u)]
            .iter()
            .filter(|(_, v)| !v.is_finite() || *v <= 0.0)
            .map(|(n, v)| format!("{n} must be > 0, got {v}"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }
}

/// Discretized control on a uniform grid with box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    times: Vec<f64>,
    values: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl ControlGrid {
    /// Uniform grid of `n` nodes over `[t0, t1]` starting at the lower bound
    /// (the feasible "no treatment" initial guess).
    pub fn constant(t0: f64, t1: f64, n: usize, bounds: (f64, f64)) -> Result<Self> {
        let (lower, upper) = bounds;
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::validation(format!(
                "control bounds must satisfy u_a < u_b, got [{lower}, {upper}]"
            )));
        }
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) {
            return Err(Error::validation("control bounds must lie in [0, 1]"));
        }
        if n < 3 {
            return Err(Error::validation("control grid needs at least 3 nodes"));
        }
        if !(t0.is_finite() && t1.is_finite()) || t0 >= t1 {
            return Err(Error::validation(format!("invalid control span [{t0}, {t1}]")));
        }
        Ok(Self {
            times: linspace(t0, t1, n),
            values: vec![lower; n],
            lower,
            upper,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Replace the node values, clamping into the bounds.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(Error::validation(format!(
                "{} control values for {} nodes",
                values.len(),
                self.times.len()
            )));
        }
        self.values.clear();
        self.values
            .extend(values.iter().map(|v| v.clamp(self.lower, self.upper)));
        Ok(())
    }

    /// Piecewise-linear evaluation, constant beyond the endpoints.
    pub fn eval(&self, t: f64) -> f64 {
        eval_linear(&self.times, &self.values, t)
    }
}

/// Piecewise-linear interpolation on a sorted grid, constant outside.
fn eval_linear(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    if t >= *times.last().unwrap() {
        return *values.last().unwrap();
    }
    let hi = times.partition_point(|&x| x <= t);
    let lo = hi - 1;
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    values[lo] + w * (values[hi] - values[lo])
}

/// Adjoint variables paired with (S, R, E, F); all vanish at t_f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointState {
    pub lambda_s: f64,
    pub lambda_r: f64,
    pub lambda_e: f64,
    pub lambda_f: f64,
}

impl AdjointState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda_s, self.lambda_r, self.lambda_e, self.lambda_f]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            lambda_s: v[0],
            lambda_r: v[1],
            lambda_e: v[2],
            lambda_f: v[3],
        }
    }
}

// ---------------------------------------------------------------------------
// Cost, adjoint RHS, projection
// ---------------------------------------------------------------------------

/// Composite Simpson quadrature on a uniform grid; the odd final interval of
/// an even-interval-count grid is handled with the 3/8 rule.
fn simpson_uniform(h: f64, f: &[f64]) -> f64 {
    let n = f.len();
    debug_assert!(n >= 3);
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 4 };
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 <= simpson_end {
        acc += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        i += 2;
    }
    if intervals % 2 != 0 {
        acc += 3.0 * h / 8.0 * (f[n - 4] + 3.0 * f[n - 3] + 3.0 * f[n - 2] + f[n - 1]);
    }
    acc
}

/// Cost functional `J = ∫ (w_S·S + w_R·R + (w_u/2)·u²) dt` over a trajectory
/// with control samples, by composite Simpson on its uniform grid.
pub fn cost(traj: &Trajectory, weights: &OcpWeights) -> Result<f64> {
    weights.validate()?;
    if traj.len() < 3 {
        return Err(Error::domain("cost quadrature needs at least 3 grid nodes"));
    }
    let controls = traj
        .controls()
        .ok_or_else(|| Error::domain("cost requires control samples on the trajectory"))?;
    let times = traj.times();
    let h = times[1] - times[0];
    let span = times[times.len() - 1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-6 * span {
            return Err(Error::domain("cost quadrature requires a uniform grid"));
        }
    }
    let integrand: Vec<f64> = traj
        .states()
        .iter()
        .zip(controls)
        .map(|(y, &u)| weights.w_s * y[0] + weights.w_r * y[1] + 0.5 * weights.w_u * u * u)
        .collect();
    Ok(simpson_uniform(h, &integrand))
}

pub(crate) fn adjoint_derivs(
    p: &ModelParams,
    w: &OcpWeights,
    y: [f64; 4],
    lam: [f64; 4],
    u: f64,
) -> [f64; 4] {
    use crate::model::{hill_term, hill_term_slope};
    let [s, r, e, f] = y;
    let [l1, l2, l3, l4] = lam;
    let growth = p.growth_factor(e);
    let growth_slope = p.growth_factor_slope(e);
    let death = hill_term(p.c, p.a2, p.l, e);
    let adapt = hill_term(p.c, p.a3, p.l, e);
    let death_slope = hill_term_slope(p.c, p.a2, p.l, e);
    let adapt_slope = hill_term_slope(p.c, p.a3, p.l, e);
    let crowding = 1.0 - p.m1 * (s + p.eta * r);

    // dλ/dt = −∂H/∂(S,R,E,F) with H = w_S·S + w_R·R + (w_u/2)u² + λ·f.
    // The adaptation flux −adapt·S → +adapt·S couples λ_S to λ_R with
    // opposite signs.
    let d_s = -w.w_s
        - l1 * (growth * (1.0 - p.m1 * (2.0 * s + p.eta * r)) - death - adapt)
        + l2 * (p.m1 * p.k3 * r - adapt)
        + l4 * p.alpha * f;
    let d_r = -w.w_r + l1 * p.m1 * p.eta * growth * s
        - l2 * p.k3 * (1.0 - p.m1 * (s + 2.0 * p.eta * r))
        + l4 * p.alpha * f;
    let d_e = -l1 * (growth_slope * s * crowding + (death_slope + adapt_slope) * s)
        + l2 * adapt_slope * s
        + l3 * p.mu;
    let d_f =
        -l3 * (1.0 - u) * p.r - l4 * (p.k2 - 2.0 * p.k2 * p.m2 * f - p.alpha * (s + r));
    [d_s, d_r, d_e, d_f]
}

/// Adjoint system right-hand side at one point.
pub fn adjoint_rhs(
    state: &StateExtended,
    adjoint: &AdjointState,
    u: f64,
    params: &ModelParams,
    weights: &OcpWeights,
) -> Result<AdjointState> {
    let y = state.as_array();
    let lam = adjoint.as_array();
    if y.iter().chain(lam.iter()).any(|v| !v.is_finite()) || !u.is_finite() {
        return Err(Error::evaluation("non-finite adjoint-system input"));
    }
    Ok(AdjointState::from_slice(&adjoint_derivs(
        params, weights, y, lam, u,
    )))
}

/// Clamped stationary point `u* = min(u_b, max(u_a, r·F·λ_E/w_u))`.
pub fn project_control(
    lambda_e: f64,
    fat: f64,
    params: &ModelParams,
    w_u: f64,
    bounds: (f64, f64),
) -> Result<f64> {
    if !(w_u.is_finite() && w_u > 0.0) {
        return Err(Error::domain(format!("w_u must be > 0, got {w_u}")));
    }
    if !lambda_e.is_finite() || !fat.is_finite() {
        return Err(Error::evaluation("non-finite projection input"));
    }
    let stationary = params.r * fat * lambda_e / w_u;
    Ok(stationary.max(bounds.0).min(bounds.1))
}

// ---------------------------------------------------------------------------
// Backward adjoint system
// ---------------------------------------------------------------------------

struct AdjointSystem<'a> {
    params: &'a ModelParams,
    weights: &'a OcpWeights,
    forward: &'a Trajectory,
    control_times: &'a [f64],
    control_values: &'a [f64],
}

impl OdeSystem for AdjointSystem<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, lam: &[f64], dldt: &mut [f64]) {
        let t_clamped = t.clamp(self.forward.first_time(), self.forward.last_time());
        let y = self
            .forward
            .sample(t_clamped)
            .expect("adjoint sweep samples inside the forward span");
        let u = eval_linear(self.control_times, self.control_values, t_clamped);
        dldt.copy_from_slice(&adjoint_derivs(
            self.params,
            self.weights,
            [y[0], y[1], y[2], y[3]],
            [lam[0], lam[1], lam[2], lam[3]],
            u,
        ));
    }
}

// ---------------------------------------------------------------------------
// Forward-backward sweep
// ---------------------------------------------------------------------------

/// FBS solver options. The defaults follow the study setup: 2001-node grid,
/// bounds (0, 0.99), relative-error tolerance 1e-5, iteration guard 500, and
/// a line-search candidate set s ∈ {0.05, 0.10, …, 1.0}.
#[derive(Debug, Clone)]
pub struct FbsOptions {
    pub grid_n: usize,
    pub bounds: (f64, f64),
    pub tolerance: f64,
    pub max_iterations: usize,
    pub integrator: IntegratorConfig,
}

impl Default for FbsOptions {
    fn default() -> Self {
        Self {
            grid_n: 2001,
            bounds: (0.0, 0.99),
            tolerance: 1e-5,
            max_iterations: 500,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Convergence report of one sweep run.
#[derive(Debug, Clone)]
pub struct FbsReport {
    /// Accepted iterations (line-search updates).
    pub iterations: usize,
    /// Cost per accepted iterate, starting with the initial guess.
    pub j_history: Vec<f64>,
    /// Chosen line-search weight per iteration.
    pub s_history: Vec<f64>,
    /// Max relative array change per iteration.
    pub rel_err_history: Vec<f64>,
    pub converged: bool,
    pub final_rel_error: f64,
    /// Iterations where every line-search candidate increased J and the
    /// smallest-s candidate was accepted anyway.
    pub stagnation_events: usize,
}

/// Converged (or best-effort) sweep output.
#[derive(Debug, Clone)]
pub struct FbsSolution {
    pub control: ControlGrid,
    /// State trajectory under the final control, with control samples.
    pub trajectory: Trajectory,
    /// Adjoint trajectory (λ_S, λ_R, λ_E, λ_F) on the same grid.
    pub adjoint: Trajectory,
    pub report: FbsReport,
}

const LINE_SEARCH: [f64; 20] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75,
    0.80, 0.85, 0.90, 0.95, 1.0,
];

/// `‖cur − pre‖₁ / max(‖cur‖₁, ε)` on one array.
fn rel_change(cur: &[f64], pre: &[f64]) -> f64 {
    let diff: f64 = cur.iter().zip(pre).map(|(a, b)| (a - b).abs()).sum();
    let norm: f64 = cur.iter().map(|v| v.abs()).sum();
    diff / norm.max(1e-12)
}

fn forward_sweep(
    params: &ModelParams,
    init: &[f64; 4],
    grid: &[f64],
    u: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let system = ExtendedModel {
        params,
        control: |t| eval_linear(grid, u, t),
    };
    integrate(
        &system,
        init,
        (grid[0], grid[grid.len() - 1]),
        config,
        Some(grid),
    )
}

fn backward_sweep(
    params: &ModelParams,
    weights: &OcpWeights,
    forward: &Trajectory,
    grid: &[f64],
    u: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let system = AdjointSystem {
        params,
        weights,
        forward,
        control_times: grid,
        control_values: u,
    };
    let reversed: Vec<f64> = grid.iter().rev().copied().collect();
    // Terminal condition λ(t_f) = 0; the trajectory comes back normalized to
    // increasing time.
    integrate(
        &system,
        &[0.0; 4],
        (grid[grid.len() - 1], grid[0]),
        config,
        Some(&reversed),
    )
}

/// Solve the treatment scheduling problem on `[t_tr, t_f]` from the state at
/// treatment start.
pub fn fbs_solve(
    params: &ModelParams,
    init: &StateExtended,
    t_span: (f64, f64),
    weights: &OcpWeights,
    opts: &FbsOptions,
) -> Result<FbsSolution> {
    params.validate()?;
    weights.validate()?;
    let (t_tr, t_f) = t_span;
    if !(t_tr.is_finite() && t_f.is_finite()) || t_tr >= t_f {
        return Err(Error::validation(format!(
            "treatment span must satisfy t_tr < t_f, got [{t_tr}, {t_f}]"
        )));
    }
    let y0 = init.as_array();
    if y0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("initial state must be finite and non-negative"));
    }

    let mut control = ControlGrid::constant(t_tr, t_f, opts.grid_n, opts.bounds)?;
    let grid = control.times().to_vec();
    let cfg = &opts.integrator;

    let mut u: Vec<f64> = control.values().to_vec();
    let mut state = forward_sweep(params, &y0, &grid, &u, cfg)?;
    let mut state_traj = state.clone().with_controls(u.clone())?;
    let mut adjoint = backward_sweep(params, weights, &state, &grid, &u, cfg)?;
    let mut j_current = cost(&state_traj, weights)?;

    let mut report = FbsReport {
        iterations: 0,
        j_history: vec![j_current],
        s_history: Vec::new(),
        rel_err_history: Vec::new(),
        converged: false,
        final_rel_error: f64::INFINITY,
        stagnation_events: 0,
    };

    for _ in 0..opts.max_iterations {
        // Projection candidate from the optimality condition at each node.
        let candidate: Vec<f64> = (0..grid.len())
            .map(|i| {
                let fat = state.states()[i][3];
                let lambda_e = adjoint.states()[i][2];
                let stationary = params.r * fat * lambda_e / weights.w_u;
                stationary.max(opts.bounds.0).min(opts.bounds.1)
            })
            .collect();

        // Greedy convex combination: evaluate J for every candidate weight
        // concurrently; results are keyed by index, so the argmin (strict
        // less, lowest index wins ties) is order-independent.
        let evals: Vec<(f64, Vec<f64>, Trajectory)> = LINE_SEARCH
            .par_iter()
            .map(|&s| {
                let u_s: Vec<f64> = u
                    .iter()
                    .zip(&candidate)
                    .map(|(&up, &uc)| {
                        ((1.0 - s) * up + s * uc).clamp(opts.bounds.0, opts.bounds.1)
                    })
                    .collect();
                let traj = forward_sweep(params, &y0, &grid, &u_s, cfg)?;
                let with_u = traj.clone().with_controls(u_s.clone())?;
                let j = cost(&with_u, weights)?;
                Ok((j, u_s, traj))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut best = 0usize;
        for (i, e) in evals.iter().enumerate() {
            if e.0 < evals[best].0 {
                best = i;
            }
        }
        // If every candidate made things worse, take the most conservative
        // step and record the stagnation.
        if evals[best].0 > j_current + 1e-12 * j_current.abs().max(1.0) {
            best = 0;
            report.stagnation_events += 1;
        }
        let (j_new, u_new, state_new) = evals[best].clone();
        let s_chosen = LINE_SEARCH[best];

        let adjoint_new = backward_sweep(params, weights, &state_new, &grid, &u_new, cfg)?;

        // Relative change of every state component, adjoint component, and u.
        let mut rel = rel_change(&u_new, &u);
        for comp in 0..4 {
            rel = rel.max(rel_change(
                &state_new.component(comp),
                &state.component(comp),
            ));
            rel = rel.max(rel_change(
                &adjoint_new.component(comp),
                &adjoint.component(comp),
            ));
        }
        if std::env::var_os("FBS_DEBUG").is_some() {
            let mut parts = vec![("u", rel_change(&u_new, &u))];
            let names = ["S", "R", "E", "F", "l1", "l2", "l3", "l4"];
            for comp in 0..4 {
                parts.push((
                    names[comp],
                    rel_change(&state_new.component(comp), &state.component(comp)),
                ));
                parts.push((
                    names[comp + 4],
                    rel_change(&adjoint_new.component(comp), &adjoint.component(comp)),
                ));
            }
            let jmin = evals.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
            let jmax = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
            eprintln!(
                "iter {}: s={s_chosen} J={j_new:.9e} spread=[{jmin:.9e},{jmax:.9e}] rel={parts:?}",
                report.iterations + 1
            );
        }

        u = u_new;
        state = state_new;
        adjoint = adjoint_new;
        j_current = j_new;
        state_traj = state.clone().with_controls(u.clone())?;

        report.iterations += 1;
        report.j_history.push(j_current);
        report.s_history.push(s_chosen);
        report.rel_err_history.push(rel);
        report.final_rel_error = rel;

        if rel < opts.tolerance {
            report.converged = true;
            break;
        }
    }

    control.set_values(&u)?;
    Ok(FbsSolution {
        control,
        trajectory: state_traj,
        adjoint,
        report,
    })
}

// ---------------------------------------------------------------------------
// Report CSV
// ---------------------------------------------------------------------------

/// Write `iter,J,s,rel_err` rows; the initial guess appears as iteration 0
/// with `s = 0` and an undefined relative error.
pub fn write_report_csv<W: Write>(report: &FbsReport, mut w: W) -> Result<()> {
    writeln!(w, "iter,J,s,rel_err")?;
    writeln!(w, "0,{:.8e},0,nan", report.j_history[0])?;
    for i in 0..report.iterations {
        writeln!(
            w,
            "{},{:.8e},{},{:.8e}",
            i + 1,
            report.j_history[i + 1],
            report.s_history[i],
            report.rel_err_history[i]
        )?;
    }
    Ok(())
}

pub fn write_report_csv_file(report: &FbsReport, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_report_csv(report, std::io::BufWriter::new(file))
}

/// Read back `(iter, J, s, rel_err)` rows written by [`write_report_csv`].
pub fn read_report_csv<R: Read>(r: R) -> Result<Vec<(usize, f64, f64, f64)>> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if idx == 0 {
            if line.trim() != "iter,J,s,rel_err" {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad {what}: {e}"),
            })
        };
        out.push((
            parse(fields[0], "iter")? as usize,
            parse(fields[1], "J")?,
            parse(fields[2], "s")?,
            parse(fields[3], "rel_err")?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extended_derivs, Diet, DietInit};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn traj_const(s: f64, r: f64, u: f64, t0: f64, t1: f64, n: usize) -> Trajectory {
        let times = linspace(t0, t1, n);
        let states = vec![vec![s, r, 0.0, 0.0]; n];
        let derivs = vec![vec![0.0; 4]; n];
        Trajectory::new(times, states, derivs)
            .unwrap()
            .with_controls(vec![u; n])
            .unwrap()
    }

    #[test]
    fn cost_examples() {
        let w = OcpWeights::default();
        let zero = traj_const(0.0, 0.0, 0.0, 0.0, 10.0, 101);
        assert_abs_diff_eq!(cost(&zero, &w).unwrap(), 0.0, epsilon = 1e-14);

        let unit_s = traj_const(1.0, 0.0, 0.0, 0.0, 10.0, 101);
        assert_relative_eq!(cost(&unit_s, &w).unwrap(), 10.0, max_relative = 1e-12);

        // u ≡ 0.99 on a 20-day horizon starting at t_tr = 5.
        let u_only = traj_const(0.0, 0.0, 0.99, 5.0, 25.0, 2001);
        assert_relative_eq!(
            cost(&u_only, &w).unwrap(),
            0.5 * 0.99 * 0.99 * 20.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(cost(&u_only, &w).unwrap(), 9.801, max_relative = 1e-12);
    }

    #[test]
    fn cost_rejects_tiny_grids() {
        let w = OcpWeights::default();
        let two = traj_const(1.0, 0.0, 0.0, 0.0, 1.0, 3);
        assert!(cost(&two, &w).is_ok());
        let times = vec![0.0, 1.0];
        let t = Trajectory::new(times, vec![vec![0.0; 4]; 2], vec![vec![0.0; 4]; 2])
            .unwrap()
            .with_controls(vec![0.0; 2])
            .unwrap();
        assert!(matches!(cost(&t, &w), Err(Error::Domain(_))));
    }

    #[test]
    fn simpson_handles_odd_interval_counts() {
        // ∫₀¹ x² dx = 1/3 on a 5-interval grid.
        let n = 6;
        let h = 1.0 / (n - 1) as f64;
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(2)).collect();
        assert_relative_eq!(simpson_uniform(h, &f), 1.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn adjoint_rhs_at_zero_adjoint_is_minus_weights() {
        let p = ModelParams::default();
        let w = OcpWeights::default();
        let state = StateExtended {
            sensitive: 123.0,
            resistant: 4.0,
            estrogen: 88.0,
            fat: 61.0,
        };
        let lam = AdjointState {
            lambda_s: 0.0,
            lambda_r: 0.0,
            lambda_e: 0.0,
            lambda_f: 0.0,
        };
        let d = adjoint_rhs(&state, &lam, 0.4, &p, &w).unwrap();
        assert_eq!(d.lambda_s, -1.0);
        assert_eq!(d.lambda_r, -1.0);
        assert_eq!(d.lambda_e, 0.0);
        assert_eq!(d.lambda_f, 0.0);
    }

    #[test]
    fn adjoint_rhs_at_zero_estrogen_limits() {
        // At E = 0 the Hill slope terms (∝ l·E^(l−1)) vanish and the growth
        // slope becomes k1/a1.
        let p = ModelParams::default();
        let w = OcpWeights::default();
        let state = StateExtended {
            sensitive: 50.0,
            resistant: 10.0,
            estrogen: 0.0,
            fat: 30.0,
        };
        let lam = AdjointState {
            lambda_s: 2.0,
            lambda_r: -1.0,
            lambda_e: 0.5,
            lambda_f: 0.0,
        };
        let d = adjoint_rhs(&state, &lam, 0.0, &p, &w).unwrap();
        let crowding = 1.0 - p.m1 * (50.0 + p.eta * 10.0);
        let expected = -2.0 * (p.k1 / p.a1) * 50.0 * crowding + 0.5 * p.mu;
        assert_relative_eq!(d.lambda_e, expected, max_relative = 1e-12);
    }

    /// Hamiltonian assembled independently from the cost integrand and the
    /// model right-hand side.
    fn hamiltonian(p: &ModelParams, w: &OcpWeights, y: [f64; 4], lam: [f64; 4], u: f64) -> f64 {
        let f = extended_derivs(p, y, u);
        w.w_s * y[0] + w.w_r * y[1] + 0.5 * w.w_u * u * u
            + lam.iter().zip(&f).map(|(l, fi)| l * fi).sum::<f64>()
    }

    #[test]
    fn adjoint_rhs_matches_hamiltonian_gradient() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let p = ModelParams::default();
        let w = OcpWeights {
            w_s: 1.0,
            w_r: 2.0,
            w_u: 0.5,
        };
        for _ in 0..25 {
            let y = [
                rng.gen_range(0.0..1500.0),
                rng.gen_range(0.0..800.0),
                rng.gen_range(0.05..1400.0),
                rng.gen_range(0.5..400.0),
            ];
            let lam = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            ];
            let u = rng.gen_range(0.0..0.99);
            let analytic = adjoint_derivs(&p, &w, y, lam, u);
            for comp in 0..4 {
                let h = (f64::EPSILON.powf(1.0 / 3.0) * y[comp].abs().max(1.0)).max(1e-7);
                let mut hi = y;
                hi[comp] += h;
                let mut lo = y;
                lo[comp] -= h;
                let fd = -(hamiltonian(&p, &w, hi, lam, u) - hamiltonian(&p, &w, lo, lam, u))
                    / (2.0 * h);
                let scale = analytic[comp].abs().max(1e-6);
                assert!(
                    (analytic[comp] - fd).abs() / scale < 1e-5,
                    "component {comp}: analytic {} vs fd {fd}",
                    analytic[comp]
                );
            }
        }
    }

    #[test]
    fn projection_examples() {
        let p = ModelParams::default();
        let bounds = (0.0, 0.99);
        assert_eq!(project_control(0.0, 55.0, &p, 1.0, bounds).unwrap(), 0.0);
        assert_eq!(project_control(-2.0, 55.0, &p, 1.0, bounds).unwrap(), 0.0);
        let interior = project_control(0.003, 10.0, &p, 1.0, bounds).unwrap();
        assert_relative_eq!(interior, 20.8391 * 10.0 * 0.003, max_relative = 1e-12);
        assert_abs_diff_eq!(interior, 0.62517, epsilon = 1e-5);
        // Large multiplier saturates at the upper bound.
        assert_eq!(project_control(10.0, 100.0, &p, 1.0, bounds).unwrap(), 0.99);
        assert!(project_control(0.0, 1.0, &p, 0.0, bounds).is_err());
    }

    #[test]
    fn control_grid_eval_and_bounds() {
        let mut g = ControlGrid::constant(0.0, 1.0, 5, (0.0, 0.99)).unwrap();
        g.set_values(&[0.0, 0.5, 1.5, 0.2, 0.1]).unwrap();
        assert_eq!(g.values()[2], 0.99); // clamped
        assert_relative_eq!(g.eval(0.125), 0.25, max_relative = 1e-12);
        assert_eq!(g.eval(-1.0), 0.0);
        assert_eq!(g.eval(2.0), 0.1);
        assert!(ControlGrid::constant(0.0, 1.0, 5, (0.5, 0.2)).is_err());
    }

    #[test]
    fn expensive_control_switches_treatment_off() {
        // w_u = 1e6 makes treatment so costly the sweep keeps u ≈ 0 and the
        // trajectory matches the untreated run.
        let params = ModelParams::default();
        let init_state = {
            let init = DietInit::baseline(Diet::Cd, &params);
            StateExtended {
                sensitive: 500.0,
                resistant: 0.0,
                estrogen: init.estrogen0,
                fat: 80.0,
            }
        };
        let weights = OcpWeights {
            w_s: 1.0,
            w_r: 1.0,
            w_u: 1e6,
        };
        let opts = FbsOptions {
            grid_n: 401,
            ..Default::default()
        };
        let sol = fbs_solve(&params, &init_state, (10.0, 25.0), &weights, &opts).unwrap();
        assert!(sol.report.converged);
        let u_max = sol.control.values().iter().fold(0.0f64, |m, &v| m.max(v));
        assert!(u_max < 5e-3, "u_max = {u_max}");

        let untreated = forward_sweep(
            &params,
            &init_state.as_array(),
            &sol.control.times().to_vec(),
            &vec![0.0; 401],
            &IntegratorConfig::default(),
        )
        .unwrap();
        for (a, b) in sol.trajectory.states().iter().zip(untreated.states()) {
            for c in 0..4 {
                let rel = (a[c] - b[c]).abs() / b[c].abs().max(1.0);
                assert!(rel < 1e-3, "trajectory deviates from untreated: {rel}");
            }
        }
        // Terminal adjoint condition holds exactly.
        assert_eq!(sol.adjoint.last_state(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn report_csv_round_trip() {
        let report = FbsReport {
            iterations: 2,
            j_history: vec![10.0, 8.0, 7.5],
            s_history: vec![0.5, 1.0],
            rel_err_history: vec![0.1, 1e-6],
            converged: true,
            final_rel_error: 1e-6,
            stagnation_events: 0,
        };
        let mut buf = Vec::new();
        write_report_csv(&report, &mut buf).unwrap();
        let rows = read_report_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].0, 0);
        assert!(rows[0].3.is_nan());
        assert_relative_eq!(rows[2].1, 7.5, max_relative = 1e-10);
    }
}
