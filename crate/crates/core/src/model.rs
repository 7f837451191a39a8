//! Model parameters, state types and right-hand sides.
//!
//! Two related systems share one implementation. The untreated
//! tumor/estrogen/fat system:
//!
//! ```text
//! dT/dt = k1·E/(a1 + E) · T (1 − m1·T)
//! dE/dt = r·F − μ·E
//! dF/dt = −α·T·F
//! ```
//!
//! and its sensitive/resistant extension under an estrogen-deprivation
//! control u ∈ [0, 1]:
//!
//! ```text
//! dS/dt = k1·E/(a1 + E) · S (1 − m1(S + ηR)) − death(E)·S − adapt(E)·S
//! dR/dt = k3·R (1 − m1(S + ηR)) + adapt(E)·S
//! dE/dt = (1 − u)·r·F − μ·E
//! dF/dt = k2·F (1 − m2·F) − α(S + R)·F
//! ```
//!
//! where `death(E) = c·a2^l/(a2^l + E^l)` and `adapt(E) = c·a3^l/(a3^l + E^l)`
//! are Hill thresholds: sensitive cells die below estrogen level `a2` and
//! convert to resistant below `a3`. Constant treatment with factor `p`
//! (production reduced to `p·r`) is the special case `u = 1 − p`.
//!
//! All states are non-negative; the solution stays non-negative and bounded
//! (tumor burden by `1/m1`, fat by `max(F0, 1/m2)`, estrogen by
//! `max(E0, r·F_max/μ)`). Numerical round-off is absorbed by clamping
//! components in `[−1e-10, 0)` to zero after each accepted step; anything more
//! negative raises [`Error::Integrity`].

use crate::error::{Error, Result};
use crate::ode::OdeSystem;

/// Width of the post-step non-negativity clamp.
pub const NONNEG_CLAMP: f64 = 1e-10;

/// Tumor burden threshold (mm³) below which a tumor counts as eradicated;
/// equal to the initial inoculum volume.
pub const ERADICATION_THRESHOLD: f64 = 1.0;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Rate constants and thresholds of both model variants.
///
/// Defaults are the calibrated/assumed baseline values; `a2`, `a3` and `k3`
/// default to the adaptive-resistance scenario (`a2 = 20`, `a3 = 1`,
/// `k3 = k1/2`) and `p = 1` means no constant treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Maximum tumor growth rate at saturating estrogen, day⁻¹.
    pub k1: f64,
    /// Estrogen level of half-maximum growth, pg/g.
    pub a1: f64,
    /// Inverse tumor carrying capacity, mm⁻³.
    pub m1: f64,
    /// Estrogen washout rate, day⁻¹.
    pub mu: f64,
    /// Estrogen production rate per unit fat volume, pg/g·mm⁻³·day⁻¹.
    pub r: f64,
    /// Fat consumption rate by tumor cells, day⁻¹·mm⁻³.
    pub alpha: f64,
    /// Fat growth rate, day⁻¹.
    pub k2: f64,
    /// Inverse fat carrying capacity, mm⁻³.
    pub m2: f64,
    /// Resistant-cell growth rate, day⁻¹.
    pub k3: f64,
    /// Maximum death/adaptation rate of sensitive cells, day⁻¹.
    pub c: f64,
    /// Hill coefficient of the threshold responses, dimensionless.
    pub l: f64,
    /// Estrogen threshold below which sensitive cells die, pg/g.
    pub a2: f64,
    /// Estrogen threshold below which sensitive cells turn resistant, pg/g.
    pub a3: f64,
    /// Competition intensity of resistant on sensitive cells, dimensionless.
    pub eta: f64,
    /// Constant-treatment factor in (0, 1]; `p = 1` is no treatment.
    pub p: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            k1: 0.586967,
            a1: 59.0927,
            m1: 1.0 / 2000.0,
            mu: 5.94,
            r: 20.8391,
            alpha: 2.21427e-5,
            k2: 0.045,
            m2: 0.002711,
            k3: 0.586967 / 2.0,
            c: 1.0,
            l: 10.0,
            a2: 20.0,
            a3: 1.0,
            eta: 1.0,
            p: 1.0,
        }
    }
}

impl ModelParams {
    /// Check all parameter invariants, reporting every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let nonneg = [
            ("k1", self.k1),
            ("a1", self.a1),
            ("r", self.r),
            ("alpha", self.alpha),
            ("k2", self.k2),
            ("k3", self.k3),
            ("c", self.c),
            ("a2", self.a2),
            ("a3", self.a3),
            ("eta", self.eta),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                violations.push(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("m1", self.m1), ("m2", self.m2), ("mu", self.mu)] {
            if !v.is_finite() || v <= 0.0 {
                violations.push(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !self.p.is_finite() || self.p <= 0.0 || self.p > 1.0 {
            violations.push(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !self.l.is_finite() || self.l < 1.0 {
            violations.push(format!("l must be >= 1, got {}", self.l));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations.join("; ")))
        }
    }

    /// Non-fatal conditions worth surfacing to the user.
    pub fn validity_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.a3 == 0.0 {
            warnings.push(
                "a3 = 0 is degenerate: the adaptation term is 0 for E > 0 and c at E = 0"
                    .to_string(),
            );
        }
        if self.a2 == 0.0 {
            warnings.push(
                "a2 = 0 is degenerate: the death term is 0 for E > 0 and c at E = 0".to_string(),
            );
        }
        let (ok, margin) = carrying_capacity_check(self);
        if !ok {
            warnings.push(format!(
                "k2 < alpha/(m1*eta) (margin {margin:.3e}): the tumor-present equilibrium has \
                 negative fat"
            ));
        }
        warnings
    }

    /// Estrogen-dependent growth factor `k1·E/(a1 + E)`.
    ///
    /// Negative inputs (transient integrator trial states) are treated as 0.
    #[inline]
    pub fn growth_factor(&self, estrogen: f64) -> f64 {
        let e = estrogen.max(0.0);
        self.k1 * e / (self.a1 + e)
    }

    /// Derivative of the growth factor with respect to estrogen,
    /// `k1·a1/(a1 + E)²`.
    #[inline]
    pub fn growth_factor_slope(&self, estrogen: f64) -> f64 {
        let e = estrogen.max(0.0);
        let denom = self.a1 + e;
        self.k1 * self.a1 / (denom * denom)
    }
}

// ---------------------------------------------------------------------------
// Diets and initial conditions
// ---------------------------------------------------------------------------

/// Diet arm of the underlying mouse experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Diet {
    /// Control diet.
    Cd,
    /// High-fat diet.
    Hfd,
}

impl Diet {
    pub const ALL: [Diet; 2] = [Diet::Cd, Diet::Hfd];

    /// Baseline initial estrogen concentration, pg/g.
    pub fn baseline_estrogen(self) -> f64 {
        match self {
            Diet::Cd => 175.143,
            Diet::Hfd => 1293.918,
        }
    }
}

impl std::fmt::Display for Diet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Diet::Cd => "CD",
            Diet::Hfd => "HFD",
        })
    }
}

impl std::str::FromStr for Diet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CD" => Ok(Diet::Cd),
            "HFD" => Ok(Diet::Hfd),
            other => Err(Error::validation(format!(
                "unknown diet {other:?}, expected CD or HFD"
            ))),
        }
    }
}

/// Diet-specific initial conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DietInit {
    pub diet: Diet,
    /// Initial sensitive-cell volume, mm³ (the whole tumor in the basic model).
    pub sensitive0: f64,
    /// Initial resistant-cell volume, mm³.
    pub resistant0: f64,
    /// Initial estrogen concentration, pg/g.
    pub estrogen0: f64,
    /// Initial fat volume, mm³.
    pub fat0: f64,
}

impl DietInit {
    /// Baseline initial conditions for a diet.
    ///
    /// Estrogen starts at the measured level and fat at `μ·E0/r`, the value
    /// that balances estrogen production and washout exactly at t = 0. The
    /// published fat volumes (49.923 and 368.820 mm³) are this quantity
    /// rounded to three decimals.
    pub fn baseline(diet: Diet, params: &ModelParams) -> Self {
        let estrogen0 = diet.baseline_estrogen();
        Self {
            diet,
            sensitive0: 1.0,
            resistant0: 0.0,
            estrogen0,
            fat0: params.mu * estrogen0 / params.r,
        }
    }

    /// Total initial tumor volume, mm³.
    pub fn tumor0(&self) -> f64 {
        self.sensitive0 + self.resistant0
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sensitive0", self.sensitive0),
            ("resistant0", self.resistant0),
            ("estrogen0", self.estrogen0),
            ("fat0", self.fat0),
        ];
        let bad: Vec<String> = fields
            .iter()
            .filter(|(_, v)| !v.is_finite() || *v < 0.0)
            .map(|(n, v)| format!("{n} must be finite and >= 0, got {v}"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }

    /// Initial state of the basic model (tumor = sensitive + resistant).
    pub fn state_basic(&self) -> StateBasic {
        StateBasic {
            tumor: self.tumor0(),
            estrogen: self.estrogen0,
            fat: self.fat0,
        }
    }

    /// Initial state of the extended model.
    pub fn state_extended(&self) -> StateExtended {
        StateExtended {
            sensitive: self.sensitive0,
            resistant: self.resistant0,
            estrogen: self.estrogen0,
            fat: self.fat0,
        }
    }
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// Instantaneous state of the basic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBasic {
    /// Tumor volume, mm³.
    pub tumor: f64,
    /// Estrogen concentration, pg/g.
    pub estrogen: f64,
    /// Fat volume, mm³.
    pub fat: f64,
}

impl StateBasic {
    pub fn as_array(&self) -> [f64; 3] {
        [self.tumor, self.estrogen, self.fat]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            tumor: y[0],
            estrogen: y[1],
            fat: y[2],
        }
    }
}

/// Instantaneous state of the extended (sensitive/resistant) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateExtended {
    /// Sensitive-cell volume, mm³.
    pub sensitive: f64,
    /// Resistant-cell volume, mm³.
    pub resistant: f64,
    /// Estrogen concentration, pg/g.
    pub estrogen: f64,
    /// Fat volume, mm³.
    pub fat: f64,
}

impl StateExtended {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sensitive, self.resistant, self.estrogen, self.fat]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            sensitive: y[0],
            resistant: y[1],
            estrogen: y[2],
            fat: y[3],
        }
    }

    /// Total tumor burden `S + R`, mm³.
    pub fn tumor(&self) -> f64 {
        self.sensitive + self.resistant
    }
}

// ---------------------------------------------------------------------------
// Hill threshold terms
// ---------------------------------------------------------------------------

/// Hill threshold `c·aˡ/(aˡ + eˡ)`, evaluated as `c/(1 + (e/a)ˡ)` so that
/// estrogen levels in the thousands with exponents up to l ≈ 20 cannot
/// overflow. Equals `c` exactly at `e = 0`.
///
/// A zero threshold `a` is degenerate: the term is 0 for `e > 0` and `c` at
/// `e = 0`. Negative `e` (integrator trial states) is treated as 0.
#[inline]
pub fn hill_term(c: f64, a: f64, l: f64, e: f64) -> f64 {
    let e = e.max(0.0);
    if a == 0.0 {
        return if e == 0.0 { c } else { 0.0 };
    }
    if e == 0.0 {
        return c;
    }
    let w = (e / a).powf(l);
    if w.is_infinite() {
        0.0
    } else {
        c / (1.0 + w)
    }
}

/// Magnitude of the Hill term's estrogen derivative,
/// `c·aˡ·l·e^(l−1)/(aˡ + eˡ)²`, evaluated as `(c·l/e)·h·(1−h)` with
/// `h = 1/(1 + (e/a)ˡ)` to avoid overflow.
#[inline]
pub fn hill_term_slope(c: f64, a: f64, l: f64, e: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let e = e.max(0.0);
    if e == 0.0 {
        // l > 1: the e^(l-1) factor vanishes; l = 1: c·a/(a+e)² at e = 0.
        return if l > 1.0 { 0.0 } else { c * l / a };
    }
    let w = (e / a).powf(l);
    if w.is_infinite() {
        return 0.0;
    }
    // h·(1−h) written as w/(1+w)² to stay exact for w near 0.
    (c * l / e) * w / ((1.0 + w) * (1.0 + w))
}

// ---------------------------------------------------------------------------
// Right-hand sides
// ---------------------------------------------------------------------------

#[inline]
pub(crate) fn basic_derivs(p: &ModelParams, y: [f64; 3]) -> [f64; 3] {
    let [tumor, estrogen, fat] = y;
    [
        p.growth_factor(estrogen) * tumor * (1.0 - p.m1 * tumor),
        p.r * fat - p.mu * estrogen,
        -p.alpha * tumor * fat,
    ]
}

#[inline]
pub(crate) fn extended_derivs(p: &ModelParams, y: [f64; 4], u: f64) -> [f64; 4] {
    let [s, r, e, f] = y;
    let death = hill_term(p.c, p.a2, p.l, e);
    let adapt = hill_term(p.c, p.a3, p.l, e);
    let crowding = 1.0 - p.m1 * (s + p.eta * r);
    [
        p.growth_factor(e) * s * crowding - (death + adapt) * s,
        p.k3 * r * crowding + adapt * s,
        (1.0 - u) * p.r * f - p.mu * e,
        p.k2 * f * (1.0 - p.m2 * f) - p.alpha * (s + r) * f,
    ]
}

/// Time derivatives of the basic model.
///
/// Returns (dT/dt, dE/dt, dF/dt) packed in a [`StateBasic`].
pub fn rhs_basic(state: &StateBasic, params: &ModelParams) -> Result<StateBasic> {
    for (name, v) in [
        ("tumor", state.tumor),
        ("estrogen", state.estrogen),
        ("fat", state.fat),
    ] {
        if !v.is_finite() {
            return Err(Error::evaluation(format!("non-finite {name} component: {v}")));
        }
    }
    let d = basic_derivs(params, state.as_array());
    Ok(StateBasic::from_slice(&d))
}

/// Time derivatives of the extended model under deprivation control `u`.
///
/// The constant-treatment model with factor `p` is recovered at `u = 1 − p`.
pub fn rhs_extended(state: &StateExtended, params: &ModelParams, u: f64) -> Result<StateExtended> {
    for (name, v) in [
        ("sensitive", state.sensitive),
        ("resistant", state.resistant),
        ("estrogen", state.estrogen),
        ("fat", state.fat),
    ] {
        if !v.is_finite() {
            return Err(Error::evaluation(format!("non-finite {name} component: {v}")));
        }
    }
    if !u.is_finite() || !(0.0..=1.0).contains(&u) {
        return Err(Error::evaluation(format!(
            "control u must lie in [0, 1], got {u}"
        )));
    }
    let d = extended_derivs(params, state.as_array(), u);
    Ok(StateExtended::from_slice(&d))
}

// ---------------------------------------------------------------------------
// Adipocyte geometry
// ---------------------------------------------------------------------------

/// Measured adipocyte geometry of a tissue cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdipocyteGeometry {
    /// Adipocytes per mm² of section.
    pub count_per_mm2: f64,
    /// Average adipocyte diameter, mm.
    pub diameter_mm: f64,
    /// Tissue cube volume, mm³.
    pub cube_volume_mm3: f64,
}

/// Fat amount in a tissue cube, `n·V^(2/3)/d`: `V^(1/3)/d` cell layers of
/// `V^(1/3)·n` adipocytes each.
///
/// Dimensionally this is a cell count rather than a volume; it is used
/// directly as the fat measurement for the calibration day.
pub fn fat_volume_estimate(geom: &AdipocyteGeometry) -> Result<f64> {
    if !geom.diameter_mm.is_finite() || geom.diameter_mm <= 0.0 {
        return Err(Error::domain(format!(
            "adipocyte diameter must be > 0, got {}",
            geom.diameter_mm
        )));
    }
    if !geom.count_per_mm2.is_finite() || geom.count_per_mm2 < 0.0 {
        return Err(Error::domain(format!(
            "adipocyte count must be >= 0, got {}",
            geom.count_per_mm2
        )));
    }
    if !geom.cube_volume_mm3.is_finite() || geom.cube_volume_mm3 < 0.0 {
        return Err(Error::domain(format!(
            "cube volume must be >= 0, got {}",
            geom.cube_volume_mm3
        )));
    }
    Ok(geom.count_per_mm2 * geom.cube_volume_mm3.powf(2.0 / 3.0) / geom.diameter_mm)
}

/// Feasibility condition `k2 ≥ α/(m1·η)` keeping the fat component of the
/// tumor-present equilibrium non-negative.
///
/// Returns the test result and the margin `k2 − α/(m1·η)`.
pub fn carrying_capacity_check(params: &ModelParams) -> (bool, f64) {
    if params.alpha == 0.0 {
        return (true, params.k2);
    }
    let threshold = params.alpha / (params.m1 * params.eta);
    (params.k2 >= threshold, params.k2 - threshold)
}

// ---------------------------------------------------------------------------
// Non-negativity clamp and integrator systems
// ---------------------------------------------------------------------------

/// Clamp components in `[−1e-10, 0)` to exactly zero; anything more negative
/// is an integrity violation.
pub(crate) fn clamp_nonneg(t: f64, y: &mut [f64]) -> Result<()> {
    for (i, v) in y.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v >= -NONNEG_CLAMP {
                *v = 0.0;
            } else {
                return Err(Error::Integrity(format!(
                    "state component {i} fell to {v:.6e} (< -{NONNEG_CLAMP:e}) at t = {t:.6}"
                )));
            }
        }
    }
    Ok(())
}

/// Basic model as an integrable system.
#[derive(Debug, Clone, Copy)]
pub struct BasicModel<'a> {
    pub params: &'a ModelParams,
}

impl OdeSystem for BasicModel<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        dydt.copy_from_slice(&basic_derivs(self.params, [y[0], y[1], y[2]]));
    }

    fn project(&self, t: f64, y: &mut [f64]) -> Result<()> {
        clamp_nonneg(t, y)
    }
}

/// Extended model under a time-dependent deprivation control.
#[derive(Debug, Clone)]
pub struct ExtendedModel<'a, C: Fn(f64) -> f64> {
    pub params: &'a ModelParams,
    pub control: C,
}

impl<'a> ExtendedModel<'a, fn(f64) -> f64> {
    /// Untreated system (`u ≡ 0`).
    pub fn untreated(params: &'a ModelParams) -> Self {
        Self {
            params,
            control: |_| 0.0,
        }
    }
}

impl<C: Fn(f64) -> f64> OdeSystem for ExtendedModel<'_, C> {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let u = (self.control)(t).clamp(0.0, 1.0);
        dydt.copy_from_slice(&extended_derivs(self.params, [y[0], y[1], y[2], y[3]], u));
    }

    fn project(&self, t: f64, y: &mut [f64]) -> Result<()> {
        clamp_nonneg(t, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn table_params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn defaults_match_published_values() {
        let p = table_params();
        assert_eq!(p.k1, 0.586967);
        assert_eq!(p.a1, 59.0927);
        assert_eq!(p.mu, 5.94);
        assert_eq!(p.m1, 0.0005);
        assert_eq!(p.r, 20.8391);
        assert_eq!(p.alpha, 2.21427e-5);
        assert_eq!(p.k2, 0.045);
        assert_eq!(p.m2, 0.002711);
        assert_eq!(p.c, 1.0);
        assert_eq!(p.l, 10.0);
        assert_eq!(p.eta, 1.0);
        p.validate().unwrap();
    }

    #[test]
    fn baseline_inits_reproduce_published_fat_volumes() {
        let p = table_params();
        let cd = DietInit::baseline(Diet::Cd, &p);
        let hfd = DietInit::baseline(Diet::Hfd, &p);
        // Derived steady-state fat matches the published rounded values to 0.1%.
        assert_relative_eq!(cd.fat0, 49.923, max_relative = 1e-3);
        assert_relative_eq!(hfd.fat0, 368.820, max_relative = 1e-3);
        assert_eq!(cd.estrogen0, 175.143);
        assert_eq!(hfd.estrogen0, 1293.918);
        assert_eq!(cd.tumor0(), 1.0);
    }

    #[test]
    fn rhs_basic_growth_vanishes_without_estrogen() {
        let p = table_params();
        let d = rhs_basic(
            &StateBasic {
                tumor: 1.0,
                estrogen: 0.0,
                fat: 49.923,
            },
            &p,
        )
        .unwrap();
        assert_eq!(d.tumor, 0.0);
    }

    #[test]
    fn rhs_basic_estrogen_balance_at_steady_state_init() {
        let p = table_params();
        let init = DietInit::baseline(Diet::Cd, &p);
        let d = rhs_basic(&init.state_basic(), &p).unwrap();
        // r·F0 = μ·E0 by construction of F0.
        assert_abs_diff_eq!(d.estrogen, 0.0, epsilon = 1e-9);

        // With the rounded published fat volume the balance is only ~1e-3.
        let rounded = StateBasic {
            tumor: 1.0,
            estrogen: 175.143,
            fat: 49.923,
        };
        let d_rounded = rhs_basic(&rounded, &p).unwrap();
        let oracle = 20.8391_f64 * 49.923 - 5.94 * 175.143;
        assert_relative_eq!(d_rounded.estrogen, oracle, max_relative = 1e-12);
        assert!(d_rounded.estrogen.abs() > 1e-4);
    }

    #[test]
    fn rhs_basic_tumor_rate_matches_scalar_evaluation() {
        let p = table_params();
        let state = StateBasic {
            tumor: 1.0,
            estrogen: 175.143,
            fat: 49.923,
        };
        let d = rhs_basic(&state, &p).unwrap();
        let oracle = 0.586967 * 175.143 / (59.0927 + 175.143) * 1.0 * (1.0 - 0.0005 * 1.0);
        assert_relative_eq!(d.tumor, oracle, max_relative = 1e-14);
        assert_abs_diff_eq!(d.tumor, 0.4387, epsilon = 1e-4);
    }

    #[test]
    fn rhs_basic_rejects_non_finite_input() {
        let p = table_params();
        let err = rhs_basic(
            &StateBasic {
                tumor: f64::NAN,
                estrogen: 1.0,
                fat: 1.0,
            },
            &p,
        )
        .unwrap_err();
        assert!(err.to_string().contains("tumor"));
    }

    #[test]
    fn rhs_extended_zero_populations_are_absorbing() {
        let p = table_params();
        let d = rhs_extended(
            &StateExtended {
                sensitive: 0.0,
                resistant: 0.0,
                estrogen: 321.0,
                fat: 55.0,
            },
            &p,
            0.3,
        )
        .unwrap();
        assert_eq!(d.sensitive, 0.0);
        assert_eq!(d.resistant, 0.0);
    }

    #[test]
    fn hill_terms_vanish_at_high_estrogen() {
        // E = 1e12 with a2 = 20, a3 = 1, l = 10.
        assert!(hill_term(1.0, 20.0, 10.0, 1e12) < 1e-90);
        assert!(hill_term(1.0, 1.0, 10.0, 1e12) < 1e-90);
    }

    #[test]
    fn rhs_extended_at_zero_estrogen_matches_hand_evaluation() {
        let p = ModelParams {
            c: 1.0,
            l: 10.0,
            a2: 20.0,
            a3: 1.0,
            ..table_params()
        };
        let state = StateExtended {
            sensitive: 1.0,
            resistant: 0.0,
            estrogen: 0.0,
            fat: 0.0,
        };
        let d = rhs_extended(&state, &p, 0.0).unwrap();
        // Both Hill fractions equal c at E = 0: dS = −2S, dR = +S.
        assert_abs_diff_eq!(d.sensitive, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.resistant, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rhs_extended_rejects_control_outside_unit_interval() {
        let p = table_params();
        let s = StateExtended {
            sensitive: 1.0,
            resistant: 0.0,
            estrogen: 1.0,
            fat: 1.0,
        };
        assert!(rhs_extended(&s, &p, 1.5).is_err());
        assert!(rhs_extended(&s, &p, -0.1).is_err());
        assert!(rhs_extended(&s, &p, f64::NAN).is_err());
    }

    #[test]
    fn constant_treatment_is_control_special_case() {
        // (1−u)·r·F with u = 1−p equals p·r·F to machine precision for the
        // treatment factors used in the study.
        let p = table_params();
        let state = StateExtended {
            sensitive: 12.0,
            resistant: 3.0,
            estrogen: 40.0,
            fat: 100.0,
        };
        for factor in [1.0, 0.025, 0.0125, 0.01, 0.001] {
            let via_control = rhs_extended(&state, &p, 1.0 - factor).unwrap();
            let direct = factor * p.r * state.fat - p.mu * state.estrogen;
            assert_relative_eq!(via_control.estrogen, direct, max_relative = 1e-12);
        }
        // u = 0 is exactly p = 1.
        let untreated = rhs_extended(&state, &p, 0.0).unwrap();
        let direct = 1.0 * p.r * state.fat - p.mu * state.estrogen;
        assert_eq!(untreated.estrogen, direct);
    }

    #[test]
    fn hill_identity_matches_naive_form() {
        // c·aˡ/(aˡ+eˡ) vs c/(1+(e/a)ˡ) on ranges where the naive form is finite.
        let c = 1.0;
        let l = 10.0;
        let mut checked = 0usize;
        for i in 0..60 {
            for j in 0..60 {
                let e = 1e-2 * (1e5_f64).powf(i as f64 / 59.0);
                let a = 1e-2 * (1e5_f64).powf(j as f64 / 59.0);
                let naive = c * a.powf(l) / (a.powf(l) + e.powf(l));
                if naive.is_finite() && a.powf(l).is_finite() && e.powf(l).is_finite() {
                    assert_relative_eq!(hill_term(c, a, l, e), naive, max_relative = 1e-12);
                    checked += 1;
                }
            }
        }
        assert!(checked > 3000);
    }

    #[test]
    fn hill_slope_matches_direct_formula() {
        let (c, l) = (1.3, 10.0);
        for a in [1.0f64, 5.0, 20.0] {
            for e in [1e-3f64, 0.5, 1.0, 7.0, 60.0, 900.0] {
                let direct = c * a.powf(l) * l * e.powf(l - 1.0) / (a.powf(l) + e.powf(l)).powi(2);
                assert_relative_eq!(hill_term_slope(c, a, l, e), direct, max_relative = 1e-8);
            }
        }
        // Vanishes at E = 0 for l > 1 and degrades gracefully at extremes.
        assert_eq!(hill_term_slope(1.0, 5.0, 10.0, 0.0), 0.0);
        assert_eq!(hill_term_slope(1.0, 0.0, 10.0, 3.0), 0.0);
        assert!(hill_term_slope(1.0, 1.0, 10.0, 1e300).abs() < 1e-200);
    }

    #[test]
    fn monotonicity_of_threshold_and_growth_terms() {
        let p = table_params();
        let grid: Vec<f64> = (0..2000).map(|i| i as f64 * 0.75).collect();
        for pair in grid.windows(2) {
            let death_lo = hill_term(p.c, p.a2, p.l, pair[0]);
            let death_hi = hill_term(p.c, p.a2, p.l, pair[1]);
            assert!(death_hi <= death_lo, "death term increased in E");
            assert!(
                p.growth_factor(pair[1]) >= p.growth_factor(pair[0]),
                "growth factor decreased in E"
            );
        }
    }

    #[test]
    fn fat_volume_estimate_examples() {
        let v = fat_volume_estimate(&AdipocyteGeometry {
            count_per_mm2: 10.0,
            diameter_mm: 0.1,
            cube_volume_mm3: 8.0,
        })
        .unwrap();
        assert_relative_eq!(v, 400.0, max_relative = 1e-12);

        let zero_count = fat_volume_estimate(&AdipocyteGeometry {
            count_per_mm2: 0.0,
            diameter_mm: 0.2,
            cube_volume_mm3: 9.0,
        })
        .unwrap();
        assert_eq!(zero_count, 0.0);

        let zero_volume = fat_volume_estimate(&AdipocyteGeometry {
            count_per_mm2: 4.0,
            diameter_mm: 0.2,
            cube_volume_mm3: 0.0,
        })
        .unwrap();
        assert_eq!(zero_volume, 0.0);

        assert!(matches!(
            fat_volume_estimate(&AdipocyteGeometry {
                count_per_mm2: 1.0,
                diameter_mm: 0.0,
                cube_volume_mm3: 1.0,
            }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn carrying_capacity_condition() {
        let p = table_params();
        let (ok, margin) = carrying_capacity_check(&p);
        assert!(ok);
        let threshold = 2.21427e-5 / (0.0005 * 1.0);
        assert_relative_eq!(margin, 0.045 - threshold, max_relative = 1e-12);
        assert_abs_diff_eq!(margin, 7.146e-4, epsilon = 1e-7);

        // k2 = 0.0443 still clears the threshold 0.0442854.
        let at_edge = ModelParams { k2: 0.0443, ..table_params() };
        let (ok, margin) = carrying_capacity_check(&at_edge);
        assert!(ok);
        assert_relative_eq!(margin, 0.0443 - threshold, max_relative = 1e-9);

        let below = ModelParams { k2: 0.0442, ..table_params() };
        assert!(!carrying_capacity_check(&below).0);

        let no_consumption = ModelParams { alpha: 0.0, ..table_params() };
        assert!(carrying_capacity_check(&no_consumption).0);
    }

    #[test]
    fn validate_lists_every_violation() {
        let bad = ModelParams {
            k1: -1.0,
            mu: 0.0,
            p: 2.0,
            l: 0.5,
            ..table_params()
        };
        let msg = bad.validate().unwrap_err().to_string();
        for needle in ["k1", "mu", "p", "l"] {
            assert!(msg.contains(needle), "missing {needle} in {msg}");
        }
    }

    #[test]
    fn clamp_zeroes_round_off_and_rejects_real_negatives() {
        let mut y = [1.0, -5e-11, 0.0];
        clamp_nonneg(1.0, &mut y).unwrap();
        assert_eq!(y, [1.0, 0.0, 0.0]);

        let mut bad = [1.0, -1e-9, 0.0];
        assert!(matches!(
            clamp_nonneg(1.0, &mut bad),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn degenerate_a3_warns_and_evaluates() {
        let p = ModelParams { a3: 0.0, ..table_params() };
        assert!(!p.validity_warnings().is_empty());
        assert_eq!(hill_term(p.c, 0.0, p.l, 2.0), 0.0);
        assert_eq!(hill_term(p.c, 0.0, p.l, 0.0), p.c);
    }
}
