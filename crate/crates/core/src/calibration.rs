//! Two-step least-squares calibration against tumor and fat measurements.
//!
//! Step 1 fits (k1, a1, r̂_CD, r̂_HFD) on the reduced model, where estrogen
//! sits at its steady state E = r̂/μ and each diet's tumor follows
//!
//! ```text
//! dT/dt = k1·E/(a1 + E) · T (1 − m1·T),   T(0) = 1,
//! ```
//!
//! against the six tumor points (three days per diet). The production rates
//! are constrained to the postmenopausal estrogen range via
//! μ·150 ≤ r̂ ≤ μ·1500. Step 2 keeps those four values fixed and fits (r, α)
//! on the full three-variable model per diet, with diet-specific initial
//! conditions E0 = r̂/μ and F0 = r̂/r, against all eight points (six tumor
//! plus the day-15 fat measurements).
//!
//! Both fits minimize an unweighted sum of squared residuals by bounded
//! Nelder–Mead with Latin-hypercube multistart (seeded, deterministic).
//!
//! Note that step 1 constrains only the two per-diet logistic rates
//! k1·E_diet/(a1 + E_diet); the four raw parameters are not separately
//! identifiable from tumor data alone, and which perfect-fit point the
//! multistart returns depends on the seed. The shipped defaults reproduce
//! the published values from the bundled synthetic dataset.

use crate::error::{Error, Result};
use crate::model::{BasicModel, Diet, ModelParams};
use crate::ode::{integrate, IntegratorConfig, OdeSystem};
use crate::simplex::{multistart, SimplexOptions};
use std::io::{Read, Write};
use std::path::Path;

/// Default multistart count.
pub const DEFAULT_STARTS: usize = 10;

// ---------------------------------------------------------------------------
// Measurements
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Tumor,
    Fat,
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quantity::Tumor => "tumor",
            Quantity::Fat => "fat",
        })
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tumor" => Ok(Quantity::Tumor),
            "fat" => Ok(Quantity::Fat),
            other => Err(Error::validation(format!(
                "unknown quantity {other:?}, expected tumor or fat"
            ))),
        }
    }
}

/// One measured volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub diet: Diet,
    /// Measurement day.
    pub day: f64,
    pub quantity: Quantity,
    /// Volume, mm³.
    pub value: f64,
    /// Optional error-bar half-width, mm³.
    pub spread: Option<f64>,
}

/// Parse the measurement CSV (`diet,day,quantity,value,spread`).
pub fn parse_measurements<R: Read>(reader: R) -> Result<Vec<Measurement>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    {
        let headers = csv_reader.position().line();
        let _ = headers;
        let header = csv_reader.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let expected = ["diet", "day", "quantity", "value", "spread"];
        let got: Vec<&str> = header.iter().collect();
        if got != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {expected:?}, got {got:?}"),
            });
        }
    }

    let mut out = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, csv::Position::line),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let field = |i: usize| -> &str { record.get(i).unwrap_or("") };
        let parse_f64 = |i: usize, what: &str| -> Result<f64> {
            field(i).parse().map_err(|e| Error::Parse {
                line,
                message: format!("bad {what} {:?}: {e}", field(i)),
            })
        };

        let diet: Diet = field(0).parse().map_err(|e| Error::Parse {
            line,
            message: format!("{e}"),
        })?;
        let day = parse_f64(1, "day")?;
        let quantity: Quantity = field(2).parse().map_err(|e| Error::Parse {
            line,
            message: format!("{e}"),
        })?;
        let value = parse_f64(3, "value")?;
        let spread = match field(4) {
            "" => None,
            _ => Some(parse_f64(4, "spread")?),
        };

        if day < 0.0 || !day.is_finite() {
            return Err(Error::validation(format!(
                "line {line}: day must be >= 0, got {day}"
            )));
        }
        if value < 0.0 || !value.is_finite() {
            return Err(Error::validation(format!(
                "line {line}: value must be >= 0, got {value}"
            )));
        }
        if let Some(s) = spread {
            if s < 0.0 || !s.is_finite() {
                return Err(Error::validation(format!(
                    "line {line}: spread must be >= 0, got {s}"
                )));
            }
        }
        out.push(Measurement {
            diet,
            day,
            quantity,
            value,
            spread,
        });
    }
    Ok(out)
}

/// Load measurements from a CSV file.
pub fn load_measurements(path: &Path) -> Result<Vec<Measurement>> {
    let file = std::fs::File::open(path)?;
    parse_measurements(std::io::BufReader::new(file))
}

/// Write measurements in the same CSV layout.
pub fn write_measurements_csv<W: Write>(data: &[Measurement], mut w: W) -> Result<()> {
    writeln!(w, "diet,day,quantity,value,spread")?;
    for m in data {
        let spread = m.spread.map_or(String::new(), |s| format!("{s:.8e}"));
        writeln!(w, "{},{},{},{:.8e},{}", m.diet, m.day, m.quantity, m.value, spread)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

/// Steady-state estrogen concentration `r̂/μ` of the reduced model.
pub fn steady_state_estrogen(r_hat: f64, mu: f64) -> Result<f64> {
    if mu <= 0.0 || !mu.is_finite() {
        return Err(Error::domain(format!("mu must be > 0, got {mu}")));
    }
    Ok(r_hat / mu)
}

// ---------------------------------------------------------------------------
// Fit configuration and results
// ---------------------------------------------------------------------------

/// Box constraints of both steps. The r̂ bounds track the postmenopausal
/// estrogen range [150, 1500] pg/g scaled by μ.
#[derive(Debug, Clone)]
pub struct FitBounds {
    pub k1: (f64, f64),
    pub a1: (f64, f64),
    /// Steady-state estrogen range defining μ·E_min ≤ r̂ ≤ μ·E_max.
    pub estrogen_range: (f64, f64),
    pub r: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            k1: (0.01, 5.0),
            a1: (1.0, 1000.0),
            estrogen_range: (150.0, 1500.0),
            r: (0.1, 100.0),
            alpha: (1e-7, 1e-2),
        }
    }
}

/// Step-1 result: shared growth parameters and per-diet production rates.
#[derive(Debug, Clone)]
pub struct Step1Fit {
    pub k1: f64,
    pub a1: f64,
    pub r_hat_cd: f64,
    pub r_hat_hfd: f64,
    pub residual: f64,
    /// Parameters that ended within 1e-6 of a bound (flagged, not fatal).
    pub at_bounds: Vec<String>,
}

/// Step-2 result: production and consumption rates of the full model.
#[derive(Debug, Clone)]
pub struct Step2Fit {
    pub r: f64,
    pub alpha: f64,
    pub residual: f64,
    pub at_bounds: Vec<String>,
}

/// Combined calibration output with the derived initial conditions.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub step1: Step1Fit,
    pub step2: Step2Fit,
    pub e0_cd: f64,
    pub e0_hfd: f64,
    pub f0_cd: f64,
    pub f0_hfd: f64,
}

fn flag_bounds(values: &[(&str, f64, (f64, f64))]) -> Vec<String> {
    values
        .iter()
        .filter(|(_, v, (lo, hi))| {
            let width = hi - lo;
            (v - lo).abs() <= 1e-6 * width || (v - hi).abs() <= 1e-6 * width
        })
        .map(|(n, _, _)| n.to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// Step 1
// ---------------------------------------------------------------------------

struct FixedLogistic {
    growth: f64,
    m1: f64,
}

impl OdeSystem for FixedLogistic {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        dydt[0] = self.growth * y[0] * (1.0 - self.m1 * y[0]);
    }
}

/// Tumor values of the reduced model at the requested days.
fn reduced_tumor_curve(
    growth: f64,
    m1: f64,
    days: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let system = FixedLogistic { growth, m1 };
    let horizon = *days.last().unwrap();
    let traj = integrate(&system, &[1.0], (0.0, horizon), config, Some(days))?;
    Ok(traj.states().iter().map(|y| y[0]).collect())
}

fn tumor_days(data: &[Measurement], diet: Diet) -> Vec<f64> {
    let mut days: Vec<f64> = data
        .iter()
        .filter(|m| m.diet == diet && m.quantity == Quantity::Tumor && m.day > 0.0)
        .map(|m| m.day)
        .collect();
    days.sort_by(f64::total_cmp);
    days.dedup();
    days
}

/// Fit (k1, a1, r̂_CD, r̂_HFD) on the reduced steady-state model.
pub fn fit_step1(
    data: &[Measurement],
    m1: f64,
    mu: f64,
    bounds: &FitBounds,
    n_starts: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<Step1Fit> {
    for diet in Diet::ALL {
        let count = data
            .iter()
            .filter(|m| m.diet == diet && m.quantity == Quantity::Tumor)
            .count();
        if count < 3 {
            return Err(Error::validation(format!(
                "step 1 needs at least 3 tumor points for {diet}, got {count}"
            )));
        }
    }

    let r_hat_bounds = (mu * bounds.estrogen_range.0, mu * bounds.estrogen_range.1);
    let box_bounds = [bounds.k1, bounds.a1, r_hat_bounds, r_hat_bounds];

    let days_cd = tumor_days(data, Diet::Cd);
    let days_hfd = tumor_days(data, Diet::Hfd);

    let objective = |x: &[f64]| -> f64 {
        let (k1, a1, r_cd, r_hfd) = (x[0], x[1], x[2], x[3]);
        let mut ssr = 0.0;
        for (diet, r_hat, days) in [
            (Diet::Cd, r_cd, &days_cd),
            (Diet::Hfd, r_hfd, &days_hfd),
        ] {
            let estrogen = r_hat / mu;
            let growth = k1 * estrogen / (a1 + estrogen);
            let curve = match reduced_tumor_curve(growth, m1, days, config) {
                Ok(c) => c,
                Err(_) => return f64::INFINITY,
            };
            for m in data
                .iter()
                .filter(|m| m.diet == diet && m.quantity == Quantity::Tumor)
            {
                let predicted = match days.iter().position(|&d| d == m.day) {
                    Some(i) => curve[i],
                    None => 1.0, // day 0 measurements match T(0)
                };
                ssr += (predicted - m.value).powi(2);
            }
        }
        ssr
    };

    let opts = SimplexOptions::default();
    let (best, _) = multistart(objective, &box_bounds, n_starts, seed, &opts)?;
    let [k1, a1, r_hat_cd, r_hat_hfd] = [best.x[0], best.x[1], best.x[2], best.x[3]];
    Ok(Step1Fit {
        k1,
        a1,
        r_hat_cd,
        r_hat_hfd,
        residual: best.f,
        at_bounds: flag_bounds(&[
            ("k1", k1, bounds.k1),
            ("a1", a1, bounds.a1),
            ("r_hat_cd", r_hat_cd, r_hat_bounds),
            ("r_hat_hfd", r_hat_hfd, r_hat_bounds),
        ]),
    })
}

// ---------------------------------------------------------------------------
// Step 2
// ---------------------------------------------------------------------------

/// Simulated (tumor at tumor-days, fat at fat-days) values for one diet of
/// the full model with steady-state-derived initial conditions.
fn full_model_curve(
    params: &ModelParams,
    r_hat: f64,
    days: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<[f64; 3]>> {
    let y0 = [1.0, r_hat / params.mu, r_hat / params.r];
    let system = BasicModel { params };
    let horizon = *days.last().unwrap();
    let traj = integrate(&system, &y0, (0.0, horizon), config, Some(days))?;
    Ok(traj
        .states()
        .iter()
        .map(|y| [y[0], y[1], y[2]])
        .collect())
}

/// Fit (r, α) on the full model, keeping the step-1 outputs fixed.
#[allow(clippy::too_many_arguments)]
pub fn fit_step2(
    data: &[Measurement],
    step1: &Step1Fit,
    m1: f64,
    mu: f64,
    bounds: &FitBounds,
    n_starts: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<Step2Fit> {
    for diet in Diet::ALL {
        if !data
            .iter()
            .any(|m| m.diet == diet && m.quantity == Quantity::Fat)
        {
            return Err(Error::validation(format!(
                "step 2 needs a fat measurement for {diet}"
            )));
        }
    }

    let box_bounds = [bounds.r, bounds.alpha];
    let objective = |x: &[f64]| -> f64 {
        let (r, alpha) = (x[0], x[1]);
        let mut ssr = 0.0;
        for (diet, r_hat) in [(Diet::Cd, step1.r_hat_cd), (Diet::Hfd, step1.r_hat_hfd)] {
            let params = ModelParams {
                k1: step1.k1,
                a1: step1.a1,
                m1,
                mu,
                r,
                alpha,
                ..ModelParams::default()
            };
            let mut days: Vec<f64> = data
                .iter()
                .filter(|m| m.diet == diet && m.day > 0.0)
                .map(|m| m.day)
                .collect();
            days.sort_by(f64::total_cmp);
            days.dedup();
            let curve = match full_model_curve(&params, r_hat, &days, config) {
                Ok(c) => c,
                Err(_) => return f64::INFINITY,
            };
            for m in data.iter().filter(|m| m.diet == diet && m.day > 0.0) {
                let idx = days.iter().position(|&d| d == m.day).unwrap();
                let predicted = match m.quantity {
                    Quantity::Tumor => curve[idx][0],
                    Quantity::Fat => curve[idx][2],
                };
                ssr += (predicted - m.value).powi(2);
            }
        }
        ssr
    };

    let opts = SimplexOptions::default();
    let (best, _) = multistart(objective, &box_bounds, n_starts, seed, &opts)?;
    let (r, alpha) = (best.x[0], best.x[1]);
    Ok(Step2Fit {
        r,
        alpha,
        residual: best.f,
        at_bounds: flag_bounds(&[("r", r, bounds.r), ("alpha", alpha, bounds.alpha)]),
    })
}

/// Run both calibration steps and derive the initial conditions.
pub fn calibrate(
    data: &[Measurement],
    m1: f64,
    mu: f64,
    bounds: &FitBounds,
    n_starts: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<CalibrationResult> {
    let step1 = fit_step1(data, m1, mu, bounds, n_starts, seed, config)?;
    let step2 = fit_step2(
        data,
        &step1,
        m1,
        mu,
        bounds,
        n_starts,
        seed.wrapping_add(1),
        config,
    )?;
    Ok(CalibrationResult {
        e0_cd: step1.r_hat_cd / mu,
        e0_hfd: step1.r_hat_hfd / mu,
        f0_cd: step1.r_hat_cd / step2.r,
        f0_hfd: step1.r_hat_hfd / step2.r,
        step1,
        step2,
    })
}

// ---------------------------------------------------------------------------
// Synthetic reference dataset
// ---------------------------------------------------------------------------

/// Forward-simulate the bundled reference dataset: tumor volumes at days 10,
/// 13 and 15 plus the day-15 fat volume, per diet, from the baseline
/// parameters with steady-state initial conditions.
pub fn synthetic_dataset(params: &ModelParams, config: &IntegratorConfig) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let days = [10.0, 13.0, 15.0];
    for diet in Diet::ALL {
        let init = crate::model::DietInit::baseline(diet, params);
        let system = BasicModel { params };
        let traj = integrate(
            &system,
            &init.state_basic().as_array(),
            (0.0, 15.0),
            config,
            Some(&days),
        )?;
        for (i, &day) in days.iter().enumerate() {
            out.push(Measurement {
                diet,
                day,
                quantity: Quantity::Tumor,
                value: traj.states()[i][0],
                spread: None,
            });
        }
        out.push(Measurement {
            diet,
            day: 15.0,
            quantity: Quantity::Fat,
            value: traj.states()[2][2],
            spread: None,
        });
    }
    Ok(out)
}
