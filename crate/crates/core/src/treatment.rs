//! Constant, alternating and externally-scheduled treatment simulations.
//!
//! Treatment starts when the untreated tumor burden `S + ηR` first grows
//! through a quarter of the carrying capacity `1/m1` (located by
//! dense-output bisection to 1e-6 days). The run integrates untreated up to
//! that point and then applies the plan until the final time; alternating
//! plans restart the integration at every phase boundary so switch times are
//! exact. Runs whose plan is effectively no treatment reuse the untreated
//! integration unchanged.
//!
//! Scenario presets bundle the threshold/growth settings explored in the
//! study: I (a2 = 20, a3 = 1, k3 = k1/2) without (I-a) and with (I-b)
//! preexisting resistance, II (a2 = 10, a3 = 1, k3 = k1/2) and III
//! (a2 = a3 = 10, k3 = k1/4).

use crate::error::{Error, Result};
use crate::model::{
    Diet, DietInit, ExtendedModel, ModelParams, ERADICATION_THRESHOLD,
};
use crate::ocp::ControlGrid;
use crate::ode::{integrate, linspace, IntegratorConfig, Trajectory};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// What to do once the tumor becomes detectable.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanKind {
    /// No intervention.
    None,
    /// Constant estrogen-production factor `p ∈ (0, 1]` (`u ≡ 1 − p`).
    Constant { p: f64 },
    /// On/off schedule at deprivation level `u_on`, phases in days; the first
    /// ON phase begins exactly at the treatment start.
    Alternating {
        u_on: f64,
        on_days: f64,
        off_days: f64,
    },
    /// Precomputed control (e.g. an optimal schedule), applied from the
    /// treatment start and evaluated piecewise-linearly.
    External(ControlGrid),
}

/// A plan plus the detection rule that triggers it.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentPlan {
    pub kind: PlanKind,
    /// Fraction of the carrying capacity that counts as detectable.
    pub start_fraction: f64,
}

impl TreatmentPlan {
    pub fn none() -> Self {
        Self {
            kind: PlanKind::None,
            start_fraction: 0.25,
        }
    }

    pub fn constant(p: f64) -> Self {
        Self {
            kind: PlanKind::Constant { p },
            start_fraction: 0.25,
        }
    }

    pub fn alternating(u_on: f64, on_days: f64, off_days: f64) -> Self {
        Self {
            kind: PlanKind::Alternating {
                u_on,
                on_days,
                off_days,
            },
            start_fraction: 0.25,
        }
    }

    pub fn external(control: ControlGrid) -> Self {
        Self {
            kind: PlanKind::External(control),
            start_fraction: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.start_fraction.is_finite() && self.start_fraction > 0.0) {
            bad.push(format!(
                "start_fraction must be > 0, got {}",
                self.start_fraction
            ));
        }
        match &self.kind {
            PlanKind::None | PlanKind::External(_) => {}
            PlanKind::Constant { p } => {
                if !(p.is_finite() && *p > 0.0 && *p <= 1.0) {
                    bad.push(format!("constant plan needs p in (0, 1], got {p}"));
                }
            }
            PlanKind::Alternating {
                u_on,
                on_days,
                off_days,
            } => {
                if !(u_on.is_finite() && (0.0..1.0).contains(u_on)) {
                    bad.push(format!("alternating plan needs u_on in [0, 1), got {u_on}"));
                }
                for (name, v) in [("on_days", *on_days), ("off_days", *off_days)] {
                    if !(v.is_finite() && v > 0.0) {
                        bad.push(format!("{name} must be > 0, got {v}"));
                    }
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }

    /// True when the plan cannot change the untreated dynamics.
    fn is_effectively_untreated(&self) -> bool {
        match &self.kind {
            PlanKind::None => true,
            PlanKind::Constant { p } => *p == 1.0,
            PlanKind::Alternating { u_on, .. } => *u_on == 0.0,
            PlanKind::External(grid) => grid.values().iter().all(|&u| u == 0.0),
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario presets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Ia,
    Ib,
    II,
    III,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Ia => "I-a",
            Scenario::Ib => "I-b",
            Scenario::II => "II",
            Scenario::III => "III",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('_', "-").as_str() {
            "I-A" | "IA" => Ok(Scenario::Ia),
            "I-B" | "IB" => Ok(Scenario::Ib),
            "II" => Ok(Scenario::II),
            "III" => Ok(Scenario::III),
            other => Err(Error::validation(format!(
                "unknown scenario {other:?}, expected I-a, I-b, II or III"
            ))),
        }
    }
}

/// Threshold/growth settings and initial tumor split of one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPreset {
    pub scenario: Scenario,
    pub a2: f64,
    pub a3: f64,
    pub k2: f64,
    /// Resistant growth rate as a fraction of k1.
    pub k3_over_k1: f64,
    pub sensitive0: f64,
    pub resistant0: f64,
}

impl ScenarioPreset {
    pub fn of(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Ia => Self {
                scenario,
                a2: 20.0,
                a3: 1.0,
                k2: 0.045,
                k3_over_k1: 0.5,
                sensitive0: 1.0,
                resistant0: 0.0,
            },
            Scenario::Ib => Self {
                scenario,
                a2: 20.0,
                a3: 1.0,
                k2: 0.045,
                k3_over_k1: 0.5,
                sensitive0: 0.75,
                resistant0: 0.25,
            },
            Scenario::II => Self {
                scenario,
                a2: 10.0,
                a3: 1.0,
                k2: 0.045,
                k3_over_k1: 0.5,
                sensitive0: 1.0,
                resistant0: 0.0,
            },
            Scenario::III => Self {
                scenario,
                a2: 10.0,
                a3: 10.0,
                k2: 0.045,
                k3_over_k1: 0.25,
                sensitive0: 1.0,
                resistant0: 0.0,
            },
        }
    }

    /// Baseline parameters with the preset's overrides applied.
    pub fn params(&self, base: &ModelParams) -> ModelParams {
        ModelParams {
            a2: self.a2,
            a3: self.a3,
            k2: self.k2,
            k3: self.k3_over_k1 * base.k1,
            ..base.clone()
        }
    }

    /// Diet baseline initial conditions with the preset's tumor split.
    pub fn init(&self, diet: Diet, params: &ModelParams) -> DietInit {
        DietInit {
            sensitive0: self.sensitive0,
            resistant0: self.resistant0,
            ..DietInit::baseline(diet, params)
        }
    }
}

// ---------------------------------------------------------------------------
// Treatment start detection
// ---------------------------------------------------------------------------

/// First up-crossing of `S + ηR` through `fraction/m1`, bisected on the
/// dense output to 1e-6 days. `None` when the burden never gets there.
pub fn detect_threshold_crossing(
    traj: &Trajectory,
    m1: f64,
    eta: f64,
    fraction: f64,
) -> Option<f64> {
    let threshold = fraction / m1;
    let burden = |y: &[f64]| y[0] + eta * y[1];
    if burden(&traj.states()[0]) >= threshold {
        return Some(traj.first_time());
    }
    for i in 1..traj.len() {
        if burden(&traj.states()[i]) >= threshold {
            let (mut lo, mut hi) = (traj.times()[i - 1], traj.times()[i]);
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                let y = traj
                    .sample(mid)
                    .expect("bisection stays inside the trajectory span");
                if burden(&y) >= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
    }
    None
}

/// Detection at the default quarter-of-carrying-capacity rule.
pub fn detect_treatment_start(traj: &Trajectory, m1: f64, eta: f64) -> Option<f64> {
    detect_threshold_crossing(traj, m1, eta, 0.25)
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// A treated (or untreated) run over `[0, t_f]`.
#[derive(Debug, Clone)]
pub struct TreatedRun {
    /// Uniform output grid plus the treatment-start and phase-switch nodes;
    /// controls record u(t) at each node (the value of the phase starting
    /// there at switch nodes).
    pub trajectory: Trajectory,
    pub t_tr: Option<f64>,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentSummary {
    pub t_tr: Option<f64>,
    /// `S + R` when treatment starts.
    pub tumor_at_start: Option<f64>,
    pub resistant_at_start: Option<f64>,
    pub final_sensitive: f64,
    pub final_resistant: f64,
    /// Final burden below the inoculum volume (1 mm³).
    pub eradicated: bool,
}

impl TreatmentSummary {
    pub fn from_run(run: &TreatedRun) -> Self {
        let last = run.trajectory.last_state();
        let (tumor_at_start, resistant_at_start) = match run.t_tr {
            Some(t) => {
                let y = run
                    .trajectory
                    .sample(t)
                    .expect("treatment start lies inside the run");
                (Some(y[0] + y[1]), Some(y[1]))
            }
            None => (None, None),
        };
        Self {
            t_tr: run.t_tr,
            tumor_at_start,
            resistant_at_start,
            final_sensitive: last[0],
            final_resistant: last[1],
            eradicated: last[0] + last[1] < ERADICATION_THRESHOLD,
        }
    }

    pub fn final_tumor(&self) -> f64 {
        self.final_sensitive + self.final_resistant
    }
}

/// Untreated run of the extended model on a uniform grid.
pub fn simulate_untreated(
    params: &ModelParams,
    init: &DietInit,
    t_f: f64,
    grid_n: usize,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let grid = linspace(0.0, t_f, grid_n);
    let system = ExtendedModel::untreated(params);
    let traj = integrate(
        &system,
        &init.state_extended().as_array(),
        (0.0, t_f),
        config,
        Some(&grid),
    )?;
    let n = traj.len();
    traj.with_controls(vec![0.0; n])
}

/// Snap extra nodes onto the uniform grid, inserting those that miss.
fn merge_nodes(t_f: f64, grid_n: usize, extras: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = linspace(0.0, t_f, grid_n);
    let tol = 1e-9 * t_f.max(1.0);
    let mut snapped = Vec::with_capacity(extras.len());
    for &x in extras {
        let i = nodes.partition_point(|&v| v < x);
        let before = if i > 0 { Some(nodes[i - 1]) } else { None };
        let after = nodes.get(i).copied();
        let nearest = [before, after]
            .into_iter()
            .flatten()
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()));
        match nearest {
            Some(v) if (v - x).abs() <= tol => snapped.push(v),
            _ => {
                nodes.insert(i, x);
                snapped.push(x);
            }
        }
    }
    (nodes, snapped)
}

/// Run the model untreated until the start rule fires, then under the plan
/// until `t_f`.
pub fn simulate_treated(
    params: &ModelParams,
    init: &DietInit,
    plan: &TreatmentPlan,
    t_f: f64,
    grid_n: usize,
    config: &IntegratorConfig,
) -> Result<TreatedRun> {
    params.validate()?;
    init.validate()?;
    plan.validate()?;
    if !(t_f.is_finite() && t_f > 0.0) {
        return Err(Error::validation(format!("t_f must be > 0, got {t_f}")));
    }
    if grid_n < 3 {
        return Err(Error::validation("output grid needs at least 3 nodes"));
    }

    let untreated = simulate_untreated(params, init, t_f, grid_n, config)?;
    let t_tr = detect_threshold_crossing(&untreated, params.m1, params.eta, plan.start_fraction);

    if plan.is_effectively_untreated() {
        return Ok(TreatedRun {
            trajectory: untreated,
            t_tr,
        });
    }
    let t_tr = match t_tr {
        Some(t) if t < t_f - 1e-9 => t,
        other => {
            // Never detectable (or only at the horizon): nothing to treat.
            return Ok(TreatedRun {
                trajectory: untreated,
                t_tr: other,
            });
        }
    };

    // Segment boundaries: treatment start plus any phase switches.
    let mut extras = vec![t_tr];
    if let PlanKind::Alternating {
        on_days, off_days, ..
    } = &plan.kind
    {
        let period = on_days + off_days;
        let mut k = 0usize;
        loop {
            let phase_start = t_tr + k as f64 * period;
            let on_end = phase_start + on_days;
            if on_end >= t_f - 1e-9 {
                break;
            }
            extras.push(on_end);
            let off_end = phase_start + period;
            if off_end >= t_f - 1e-9 {
                break;
            }
            extras.push(off_end);
            k += 1;
        }
    }
    let (nodes, snapped) = merge_nodes(t_f, grid_n, &extras);
    let t_tr = snapped[0];

    // Per-segment constant control levels ((start, u) pairs); External keeps
    // one segment evaluated through its grid.
    let mut boundaries: Vec<(f64, Option<f64>)> = Vec::new();
    match &plan.kind {
        PlanKind::Constant { p } => boundaries.push((t_tr, Some(1.0 - p))),
        PlanKind::Alternating { u_on, .. } => {
            for (i, &s) in snapped.iter().enumerate() {
                let level = if i % 2 == 0 { *u_on } else { 0.0 };
                boundaries.push((s, Some(level)));
            }
        }
        PlanKind::External(_) => boundaries.push((t_tr, None)),
        PlanKind::None => unreachable!("handled as untreated"),
    }

    let mut times: Vec<f64> = Vec::with_capacity(nodes.len());
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(nodes.len());
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(nodes.len());
    let mut controls: Vec<f64> = Vec::with_capacity(nodes.len());

    let mut state: Vec<f64> = init.state_extended().as_array().to_vec();

    let run_segment = |a: f64,
                           b: f64,
                           u_fn: &(dyn Fn(f64) -> f64 + Sync),
                           include_start: bool,
                           state: &mut Vec<f64>,
                           times: &mut Vec<f64>,
                           states: &mut Vec<Vec<f64>>,
                           derivs: &mut Vec<Vec<f64>>,
                           controls: &mut Vec<f64>|
     -> Result<()> {
        let seg_nodes: Vec<f64> = nodes
            .iter()
            .copied()
            .filter(|&t| (t > a || (include_start && t >= a)) && t <= b)
            .collect();
        let system = ExtendedModel {
            params,
            control: |t| u_fn(t),
        };
        let traj = integrate(&system, state, (a, b), config, Some(&seg_nodes))?;
        for (i, &t) in traj.times().iter().enumerate() {
            times.push(t);
            states.push(traj.states()[i].clone());
            derivs.push(traj.derivs()[i].clone());
            controls.push(u_fn(t));
        }
        *state = traj.last_state().to_vec();
        Ok(())
    };

    // Untreated lead-in.
    run_segment(
        0.0,
        t_tr,
        &|_| 0.0,
        true,
        &mut state,
        &mut times,
        &mut states,
        &mut derivs,
        &mut controls,
    )?;

    for (idx, &(start, level)) in boundaries.iter().enumerate() {
        let end = boundaries.get(idx + 1).map_or(t_f, |&(s, _)| s);
        if end <= start {
            continue;
        }
        match (&plan.kind, level) {
            (PlanKind::External(grid), _) => {
                run_segment(
                    start,
                    end,
                    &|t| grid.eval(t),
                    false,
                    &mut state,
                    &mut times,
                    &mut states,
                    &mut derivs,
                    &mut controls,
                )?;
            }
            (_, Some(u)) => {
                run_segment(
                    start,
                    end,
                    &move |_| u,
                    false,
                    &mut state,
                    &mut times,
                    &mut states,
                    &mut derivs,
                    &mut controls,
                )?;
            }
            _ => unreachable!(),
        }
    }

    // Switch nodes carry the control of the phase starting there.
    for &(start, level) in &boundaries {
        if let Some(idx) = times.iter().position(|&t| t == start) {
            controls[idx] = match (&plan.kind, level) {
                (PlanKind::External(grid), _) => grid.eval(start),
                (_, Some(u)) => u,
                _ => unreachable!(),
            };
        }
    }

    let trajectory = Trajectory::new(times, states, derivs)?.with_controls(controls)?;
    Ok(TreatedRun {
        trajectory,
        t_tr: Some(t_tr),
    })
}

/// One full scenario run: preset + diet + plan.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub params: ModelParams,
    pub init: DietInit,
    pub run: TreatedRun,
    pub summary: TreatmentSummary,
}

/// Assemble parameters from the preset, simulate the plan, and summarize.
pub fn run_scenario(
    preset: &ScenarioPreset,
    diet: Diet,
    plan: &TreatmentPlan,
    t_f: f64,
    grid_n: usize,
    config: &IntegratorConfig,
) -> Result<ScenarioRun> {
    let params = preset.params(&ModelParams::default());
    let init = preset.init(diet, &params);
    let run = simulate_treated(&params, &init, plan, t_f, grid_n, config)?;
    let summary = TreatmentSummary::from_run(&run);
    Ok(ScenarioRun {
        params,
        init,
        run,
        summary,
    })
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

/// Write `t,S,R,E,F,u` rows at 9 significant digits, one per grid node.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    if traj.dim() != 4 {
        return Err(Error::validation(format!(
            "trajectory CSV needs the 4-component extended state, got dim {}",
            traj.dim()
        )));
    }
    writeln!(w, "t,S,R,E,F,u")?;
    let zeros;
    let controls = match traj.controls() {
        Some(c) => c,
        None => {
            zeros = vec![0.0; traj.len()];
            &zeros
        }
    };
    for (i, &t) in traj.times().iter().enumerate() {
        let y = &traj.states()[i];
        writeln!(
            w,
            "{t:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            y[0], y[1], y[2], y[3], controls[i]
        )?;
    }
    Ok(())
}

pub fn write_trajectory_csv_file(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trajectory_csv(traj, std::io::BufWriter::new(file))
}

/// Rows of a trajectory CSV as written by [`write_trajectory_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRows {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 4]>,
    pub controls: Vec<f64>,
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<TrajectoryRows> {
    let reader = BufReader::new(r);
    let mut rows = TrajectoryRows {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
    };
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if idx == 0 {
            if line.trim() != "t,S,R,E,F,u" {
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
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let mut vals = [0.0; 6];
        for (v, raw) in vals.iter_mut().zip(&fields) {
            *v = raw.parse().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("bad number {raw:?}: {e}"),
            })?;
        }
        rows.times.push(vals[0]);
        rows.states.push([vals[1], vals[2], vals[3], vals[4]]);
        rows.controls.push(vals[5]);
    }
    Ok(rows)
}
