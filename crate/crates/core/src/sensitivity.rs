//! Global sensitivity analysis: Latin-hypercube sampling and partial rank
//! correlation coefficients (PRCC).
//!
//! The study samples 13 model parameters uniformly on [½·baseline,
//! 2·baseline], simulates the constant-treatment model once per sample row,
//! records S, R, E, F at the observation days, and computes one PRCC per
//! (parameter, output, day) cell: rank-transform everything, linearly remove
//! the influence of the other parameters from both the target parameter's
//! ranks and the output's ranks, and correlate the residuals. The sign gives
//! the direction of influence, the magnitude its strength.

use crate::error::{Error, Result};
use crate::model::{DietInit, ExtendedModel, ModelParams};
use crate::ode::{integrate, IntegratorConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rayon::prelude::*;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Output variables recorded by the study.
pub const OUTPUT_NAMES: [&str; 4] = ["S", "R", "E", "F"];

// ---------------------------------------------------------------------------
// Latin-hypercube sampling
// ---------------------------------------------------------------------------

/// A stratified uniform design: each column covers its range with every one
/// of the `n` equal-width strata used exactly once, in seeded random order.
#[derive(Debug, Clone)]
pub struct LhsDesign {
    pub names: Vec<String>,
    pub ranges: Vec<(f64, f64)>,
    /// `samples[row][param]`.
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Draw `n` Latin-hypercube samples over per-parameter ranges; deterministic
/// for a fixed seed.
pub fn lhs_sample(
    names: &[&str],
    ranges: &[(f64, f64)],
    n: usize,
    seed: u64,
) -> Result<LhsDesign> {
    if names.len() != ranges.len() {
        return Err(Error::validation("names and ranges disagree in length"));
    }
    if n < 2 {
        return Err(Error::domain("LHS needs at least 2 samples"));
    }
    for (name, &(lo, hi)) in names.iter().zip(ranges) {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::domain(format!(
                "degenerate range [{lo}, {hi}] for parameter {name}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![vec![0.0; ranges.len()]; n];
    for (j, &(lo, hi)) in ranges.iter().enumerate() {
        let width = (hi - lo) / n as f64;
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (row, &stratum) in strata.iter().enumerate() {
            let jitter: f64 = rng.gen();
            samples[row][j] = lo + (stratum as f64 + jitter) * width;
        }
    }
    Ok(LhsDesign {
        names: names.iter().map(|s| s.to_string()).collect(),
        ranges: ranges.to_vec(),
        samples,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Ranks, least squares, PRCC
// ---------------------------------------------------------------------------

/// Fractional ranks (1-based), ties averaged.
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Solve the normal equations of `min ‖Z·beta − y‖²` by Gaussian elimination
/// with partial pivoting. `None` when the system is rank deficient.
fn least_squares_residuals(z: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = z.len();
    let k = z[0].len();
    let mut ztz = vec![vec![0.0; k]; k];
    let mut zty = vec![0.0; k];
    for row in 0..n {
        for a in 0..k {
            zty[a] += z[row][a] * y[row];
            for b in a..k {
                ztz[a][b] += z[row][a] * z[row][b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            ztz[a][b] = ztz[b][a];
        }
    }
    let scale = ztz
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }

    // Elimination on the augmented system.
    let mut a = ztz;
    let mut b = zty;
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None; // rank deficient
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..k {
            let factor = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut beta = vec![0.0; k];
    for col in (0..k).rev() {
        let mut acc = b[col];
        for c in (col + 1)..k {
            acc -= a[col][c] * beta[c];
        }
        beta[col] = acc / a[col][col];
    }

    Some(
        (0..n)
            .map(|row| y[row] - z[row].iter().zip(&beta).map(|(zi, bi)| zi * bi).sum::<f64>())
            .collect(),
    )
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    // A residual vector with (numerically) no variance left carries no
    // rank information; the coefficient is undefined rather than zero.
    let floor = 1e-9 * n;
    if va <= floor || vb <= floor {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Partial rank correlation between parameter column `which` of the design
/// and `outputs`, removing the linear (in ranks) influence of all other
/// columns.
///
/// `Ok(None)` marks an undefined cell (rank-deficient regression or a
/// degenerate, variance-free residual).
pub fn prcc(samples: &[Vec<f64>], outputs: &[f64], which: usize) -> Result<Option<f64>> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::domain("PRCC needs at least 3 samples"));
    }
    if outputs.len() != n {
        return Err(Error::validation(format!(
            "{} outputs for {n} sample rows",
            outputs.len()
        )));
    }
    let k = samples[0].len();
    if which >= k {
        return Err(Error::domain(format!(
            "parameter index {which} out of range for {k} columns"
        )));
    }
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::evaluation("non-finite output in PRCC input"));
    }

    let rank_cols: Vec<Vec<f64>> = (0..k)
        .map(|j| ranks(&samples.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect();
    let rank_out = ranks(outputs);
    let rank_target = &rank_cols[which];

    // Design: intercept plus the ranks of every other parameter.
    let z: Vec<Vec<f64>> = (0..n)
        .map(|row| {
            let mut zr = Vec::with_capacity(k);
            zr.push(1.0);
            for (j, col) in rank_cols.iter().enumerate() {
                if j != which {
                    zr.push(col[row]);
                }
            }
            zr
        })
        .collect();

    let resid_target = match least_squares_residuals(&z, rank_target) {
        Some(r) => r,
        None => return Ok(None),
    };
    let resid_out = match least_squares_residuals(&z, &rank_out) {
        Some(r) => r,
        None => return Ok(None),
    };
    Ok(pearson(&resid_target, &resid_out))
}

// ---------------------------------------------------------------------------
// PRCC study on the constant-treatment model
// ---------------------------------------------------------------------------

/// Parameters varied by the study.
pub const SAMPLED_PARAMS: [&str; 13] = [
    "k1", "a1", "m1", "mu", "r", "alpha", "k2", "m2", "k3", "c", "l", "a3", "p",
];

/// One (parameter, output, day) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PrccCell {
    pub param: String,
    pub output: String,
    pub day: f64,
    /// `None` marks an undefined coefficient (degenerate cell).
    pub prcc: Option<f64>,
}

/// Full study result with reproducibility metadata.
#[derive(Debug, Clone)]
pub struct PrccReport {
    pub cells: Vec<PrccCell>,
    pub baseline: ModelParams,
    pub n_samples: usize,
    /// Rows that simulated successfully and entered every cell.
    pub n_effective: usize,
    pub failures: usize,
    pub seed: u64,
    pub days: Vec<f64>,
}

impl PrccReport {
    pub fn get(&self, param: &str, output: &str, day: f64) -> Option<&PrccCell> {
        self.cells
            .iter()
            .find(|c| c.param == param && c.output == output && c.day == day)
    }
}

fn sampled_value(params: &ModelParams, name: &str) -> f64 {
    match name {
        "k1" => params.k1,
        "a1" => params.a1,
        "m1" => params.m1,
        "mu" => params.mu,
        "r" => params.r,
        "alpha" => params.alpha,
        "k2" => params.k2,
        "m2" => params.m2,
        "k3" => params.k3,
        "c" => params.c,
        "l" => params.l,
        "a3" => params.a3,
        "p" => params.p,
        other => unreachable!("unsampled parameter {other}"),
    }
}

fn apply_sample(base: &ModelParams, row: &[f64]) -> ModelParams {
    let mut p = base.clone();
    for (name, &v) in SAMPLED_PARAMS.iter().zip(row) {
        match *name {
            "k1" => p.k1 = v,
            "a1" => p.a1 = v,
            "m1" => p.m1 = v,
            "mu" => p.mu = v,
            "r" => p.r = v,
            "alpha" => p.alpha = v,
            "k2" => p.k2 = v,
            "m2" => p.m2 = v,
            "k3" => p.k3 = v,
            "c" => p.c = v,
            "l" => p.l = v,
            "a3" => p.a3 = v,
            "p" => p.p = v,
            other => unreachable!("unsampled parameter {other}"),
        }
    }
    p
}

/// Run the LHS-PRCC study for one diet.
///
/// Samples the 13-parameter set on [½, 2]×baseline (the treatment factor `p`
/// capped at 1, the Hill coefficient `l` rounded to integers so exponents
/// stay well-behaved; `a2` is held at baseline where it coincides with
/// `a3`), simulates the constant-treatment model once per row, and builds the
/// PRCC table at the observation days. Rows whose simulation fails are
/// dropped from every cell; more than 5% failures aborts the study.
pub fn run_prcc_study(
    baseline: &ModelParams,
    init: &DietInit,
    days: &[f64],
    n: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Result<PrccReport> {
    baseline.validate()?;
    init.validate()?;
    if days.is_empty() || days.iter().any(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::validation("observation days must be positive"));
    }

    let ranges: Vec<(f64, f64)> = SAMPLED_PARAMS
        .iter()
        .map(|name| {
            let b = sampled_value(baseline, name);
            let hi = if *name == "p" { (2.0 * b).min(1.0) } else { 2.0 * b };
            (0.5 * b, hi)
        })
        .collect();
    let mut design = lhs_sample(&SAMPLED_PARAMS, &ranges, n, seed)?;
    let l_col = SAMPLED_PARAMS.iter().position(|&p| p == "l").unwrap();
    for row in &mut design.samples {
        row[l_col] = row[l_col].round().max(1.0);
    }

    let mut sorted_days = days.to_vec();
    sorted_days.sort_by(f64::total_cmp);
    let horizon = *sorted_days.last().unwrap();

    // One simulation per row; outputs keyed by row index so the aggregation
    // is order-independent under parallel evaluation.
    let row_outputs: Vec<Option<Vec<[f64; 4]>>> = design
        .samples
        .par_iter()
        .map(|row| {
            let params = apply_sample(baseline, row);
            if params.validate().is_err() {
                return None;
            }
            let u = 1.0 - params.p;
            let system = ExtendedModel {
                params: &params,
                control: move |_| u,
            };
            let y0 = init.state_extended().as_array();
            match integrate(&system, &y0, (0.0, horizon), config, Some(&sorted_days)) {
                Ok(traj) => {
                    let per_day: Vec<[f64; 4]> = sorted_days
                        .iter()
                        .map(|&d| {
                            let s = traj.sample(d).ok()?;
                            Some([s[0], s[1], s[2], s[3]])
                        })
                        .collect::<Option<Vec<_>>>()?;
                    Some(per_day)
                }
                Err(_) => None,
            }
        })
        .collect();

    let failures = row_outputs.iter().filter(|o| o.is_none()).count();
    if failures * 20 > n {
        return Err(Error::evaluation(format!(
            "{failures} of {n} LHS simulations failed (> 5%)"
        )));
    }

    let kept: Vec<usize> = (0..n).filter(|&i| row_outputs[i].is_some()).collect();
    let samples: Vec<Vec<f64>> = kept.iter().map(|&i| design.samples[i].clone()).collect();

    let mut cells = Vec::new();
    for (day_idx, &day) in sorted_days.iter().enumerate() {
        for (out_idx, out_name) in OUTPUT_NAMES.iter().enumerate() {
            let outputs: Vec<f64> = kept
                .iter()
                .map(|&i| row_outputs[i].as_ref().unwrap()[day_idx][out_idx])
                .collect();
            for (param_idx, param) in SAMPLED_PARAMS.iter().enumerate() {
                let value = prcc(&samples, &outputs, param_idx)?;
                cells.push(PrccCell {
                    param: param.to_string(),
                    output: out_name.to_string(),
                    day,
                    prcc: value,
                });
            }
        }
    }

    Ok(PrccReport {
        cells,
        baseline: baseline.clone(),
        n_samples: n,
        n_effective: kept.len(),
        failures,
        seed,
        days: sorted_days,
    })
}

// ---------------------------------------------------------------------------
// CSV interface
// ---------------------------------------------------------------------------

/// Write `param,output,day,prcc,n_effective` rows; undefined cells print `nan`.
pub fn write_prcc_csv<W: Write>(report: &PrccReport, mut w: W) -> Result<()> {
    writeln!(w, "param,output,day,prcc,n_effective")?;
    for cell in &report.cells {
        let value = match cell.prcc {
            Some(v) => format!("{v:.8e}"),
            None => "nan".to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            cell.param, cell.output, cell.day, value, report.n_effective
        )?;
    }
    Ok(())
}

pub fn write_prcc_csv_file(report: &PrccReport, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_prcc_csv(report, std::io::BufWriter::new(file))
}

/// Read back a PRCC table written by [`write_prcc_csv`].
pub fn read_prcc_csv<R: Read>(r: R) -> Result<Vec<(PrccCell, usize)>> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if idx == 0 {
            if line.trim() != "param,output,day,prcc,n_effective" {
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
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let day: f64 = fields[2].parse().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad day: {e}"),
        })?;
        let prcc_raw: f64 = fields[3].parse().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad prcc: {e}"),
        })?;
        let n_eff: usize = fields[4].parse().map_err(|e| Error::Parse {
            line: lineno,
            message: format!("bad n_effective: {e}"),
        })?;
        out.push((
            PrccCell {
                param: fields[0].to_string(),
                output: fields[1].to_string(),
                day,
                prcc: if prcc_raw.is_nan() { None } else { Some(prcc_raw) },
            },
            n_eff,
        ));
    }
    Ok(out)
}
