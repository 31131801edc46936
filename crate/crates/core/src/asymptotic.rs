//! Asymptotic approximations of the QSD cumulants above threshold.
//!
//! The low-order cumulants are expanded in powers of `N`,
//!
//! ```text
//! kappa_1 = x1 N + x2 + x3 / N,   kappa_2 = x4 N + x5,   kappa_3 = x6 N,
//! ```
//!
//! and the stationary cumulant equations `A = B = C = 0` are matched power by
//! power. The resulting coefficient equations are triangular: after the
//! quadratic for `x1` each one is linear in a single new unknown. The SIR
//! model is handled the same way with
//! `kappa_10 = x1 N + x2`, `kappa_01 = x3 N + x4`, `kappa_20 = x5 N`,
//! `kappa_11 = x6 N`, `kappa_02 = x7 N`.

use serde::{Deserialize, Serialize};

use crate::dd::{Dd, Real};
use crate::error::{Error, Result};
use crate::model::{transition_parameter_rho, SirParams, VerhulstParams};
use crate::qsd::{CumulantSet, RawMomentSet};
use crate::series::Laurent;
use crate::sir::BivariateCumulantSet;

/// Below this value of the transition parameter the expansion is unreliable.
pub const RHO_WARNING: f64 = 3.0;

fn require_above_threshold(r0: f64) -> Result<()> {
    if r0 > 1.0 {
        Ok(())
    } else {
        Err(Error::BelowThreshold { r0 })
    }
}

fn gate_verhulst(p: &VerhulstParams) -> Result<()> {
    p.validate()?;
    require_above_threshold(p.r0)?;
    let rho = transition_parameter_rho(p);
    if rho < RHO_WARNING {
        log::warn!("transition parameter rho = {rho:.3} < {RHO_WARNING}: asymptotic approximation is unreliable this close to threshold");
    }
    Ok(())
}

fn gate_sir(p: &SirParams) -> Result<()> {
    p.validate()?;
    require_above_threshold(p.r0)?;
    let rho = (p.r0 - 1.0) * p.n_f64().sqrt() / (1.0 + p.alpha).sqrt();
    if rho < RHO_WARNING {
        log::warn!("(R0 - 1) sqrt(N / (1 + alpha)) = {rho:.3} < {RHO_WARNING}: asymptotic approximation is unreliable this close to threshold");
    }
    Ok(())
}

/// Coefficients `x1 ..= x6` of the Verhulst expansion.
///
/// `x7`, the leading coefficient of `kappa_4`, enters the expansion but is not
/// determined by the equations solved here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerhulstCoefficients {
    pub x: [f64; 6],
    pub x7: Option<f64>,
}

impl VerhulstCoefficients {
    pub fn new(x: [f64; 6]) -> Self {
        Self { x, x7: None }
    }

    /// `x_i`, 1-based.
    pub fn get(&self, i: usize) -> f64 {
        self.x[i - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientResiduals {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
}

impl CoefficientResiduals {
    pub fn to_array(self) -> [f64; 6] {
        [self.a1, self.a2, self.a3, self.b1, self.b2, self.c1]
    }

    pub fn max_abs(self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn verhulst_coefficients(r0: f64, alpha: f64) -> Result<VerhulstCoefficients> {
    require_above_threshold(r0)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let s = r0 + alpha;
    let d = r0 - 1.0;
    let a1 = 1.0 + alpha;
    Ok(VerhulstCoefficients::new([
        d / s,
        -a1 * r0 / (s * d),
        -a1 * (r0 + 1.0) * r0 / d.powi(3),
        a1 * r0 / (s * s),
        a1 * (r0 * r0 + alpha) * r0 / (s * s * d * d),
        -a1 * (r0 - alpha) * r0 / s.powi(3),
    ]))
}

/// The six coefficient equations, as functions of arbitrary `x`.
pub fn coefficient_residuals(x: &VerhulstCoefficients, r0: f64, alpha: f64) -> CoefficientResiduals {
    let [a1, a2, a3, b1, b2, c1] = residuals(x.x, r0, alpha);
    CoefficientResiduals { a1, a2, a3, b1, b2, c1 }
}

/// `(A1, A2, A3, B1, B2, C1)` in any precision.
fn residuals<T: Real>(x: [T; 6], r0: f64, alpha: f64) -> [T; 6] {
    let [x1, x2, x3, x4, x5, x6] = x;
    let c = |v: f64| T::from(v);
    let (s, m) = (c(r0) + c(alpha), c(r0) - c(alpha));
    let (d, p) = (c(r0) - c(1.0), c(r0) + c(1.0));
    [
        d * x1 - s * x1 * x1,
        d * x2 - s * (c(2.0) * x1 * x2 + x4),
        d * x3 - s * (c(2.0) * x1 * x3 + x2 * x2 + x5),
        p * x1 + c(2.0) * d * x4 - m * x1 * x1 - c(4.0) * s * x1 * x4,
        p * x2 + c(2.0) * d * x5
            - m * (c(2.0) * x1 * x2 + x4)
            - s * (c(4.0) * x1 * x5 + c(4.0) * x2 * x4 + c(2.0) * x6),
        d * (x1 + c(3.0) * x6) + c(3.0) * p * x4
            - c(6.0) * m * x1 * x4
            - s * (x1 * x1 + c(6.0) * x1 * x6 + c(6.0) * x4 * x4),
    ]
}

/// Solves `r(v) = 0` for an equation known to be affine in `v`, with one
/// correction step to absorb rounding.
fn solve_affine(r: impl Fn(Dd) -> Dd) -> Dd {
    let f0 = r(Dd::ZERO);
    let slope = r(Dd::from(1.0)) - f0;
    let v = -f0 / slope;
    v - r(v) / slope
}

/// Solves the coefficient equations one unknown at a time, in the order
/// `A1 -> x1`, `B1 -> x4`, `A2 -> x2`, `C1 -> x6`, `B2 -> x5`, `A3 -> x3`,
/// using only the residual functions as the model of each equation.
///
/// Runs in double-double precision: near `R0 = alpha` the coefficient `x6`
/// is a small difference of O(1) terms, and f64 rounding of the earlier
/// unknowns alone would cost several digits of it.
pub fn solve_coefficients_sequential(r0: f64, alpha: f64) -> Result<VerhulstCoefficients> {
    require_above_threshold(r0)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let mut x = [Dd::ZERO; 6];
    let res = |x: [Dd; 6]| residuals(x, r0, alpha);
    let with = |x: [Dd; 6], i: usize, v: Dd| {
        let mut y = x;
        y[i - 1] = v;
        y
    };

    // A1 is quadratic in x1: recover its coefficients from three samples.
    let f = |v: f64| res(with(x, 1, Dd::from(v)))[0];
    let (f0, fp, fm) = (f(0.0), f(1.0), f(-1.0));
    let half = Dd::from(0.5);
    let qa = half * (fp + fm) - f0;
    let qb = half * (fp - fm);
    let qc = f0;
    let disc = qb * qb - Dd::from(4.0) * qa * qc;
    if disc.signum() < 0.0 || qa == Dd::ZERO {
        return Err(Error::NoAdmissibleRoot("A1 has no real non-zero root".into()));
    }
    let big = -half * (qb + Dd::from(qb.signum()) * disc.sqrt());
    let roots = [big / qa, if big != Dd::ZERO { qc / big } else { Dd::ZERO }];
    // x1 = 0 is the spurious branch.
    let x1 = roots
        .into_iter()
        .filter(|v| v.abs().to_f64() > 1e-14)
        .max_by(|a, b| a.abs().to_f64().total_cmp(&b.abs().to_f64()))
        .ok_or_else(|| Error::NoAdmissibleRoot("A1 has only the spurious root x1 = 0".into()))?;
    x = with(x, 1, x1);

    // (unknown, equation index in the residual array)
    for (idx, eq) in [(4, 3usize), (2, 1), (6, 5), (5, 4), (3, 2)] {
        let v = solve_affine(|v| res(with(x, idx, v))[eq]);
        x = with(x, idx, v);
    }
    Ok(VerhulstCoefficients::new(x.map(Dd::to_f64)))
}

/// Number of retained terms per cumulant, as in the ladder
/// `kappa_1: 1..=3`, `kappa_2: 1..=2`, `kappa_3: 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCounts {
    pub kappa1: u8,
    pub kappa2: u8,
    pub kappa3: u8,
}

impl Default for TermCounts {
    fn default() -> Self {
        Self {
            kappa1: 3,
            kappa2: 2,
            kappa3: 1,
        }
    }
}

impl TermCounts {
    pub fn new(kappa1: u8, kappa2: u8, kappa3: u8) -> Result<Self> {
        let t = Self { kappa1, kappa2, kappa3 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if (1..=3).contains(&self.kappa1) && (1..=2).contains(&self.kappa2) && self.kappa3 == 1 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "term counts ({}, {}, {}) outside the ladder (1..=3, 1..=2, 1)",
                self.kappa1, self.kappa2, self.kappa3
            )))
        }
    }
}

/// The truncated expansions of `kappa_1, kappa_2, kappa_3` as series in `N`.
pub fn cumulant_series(x: &VerhulstCoefficients, terms: TermCounts) -> Result<[Laurent; 3]> {
    terms.validate()?;
    let [x1, x2, x3, x4, x5, x6] = x.x;
    let k1 = [(1, x1), (0, x2), (-1, x3)];
    let k2 = [(1, x4), (0, x5)];
    Ok([
        Laurent::from_terms(k1.into_iter().take(terms.kappa1 as usize)),
        Laurent::from_terms(k2.into_iter().take(terms.kappa2 as usize)),
        Laurent::monomial(1, x6),
    ])
}

pub fn cumulant_approx(p: &VerhulstParams, terms: TermCounts) -> Result<CumulantSet> {
    gate_verhulst(p)?;
    let x = verhulst_coefficients(p.r0, p.alpha)?;
    let n = p.n_f64();
    Ok(CumulantSet {
        kappa: cumulant_series(&x, terms)?.iter().map(|s| s.eval(n)).collect(),
    })
}

/// The raw-moment expansions with 3, 3 and 2 retained terms, written out
/// directly in `R0` and `alpha`.
pub fn raw_moment_series(r0: f64, alpha: f64) -> Result<[Laurent; 3]> {
    let x = verhulst_coefficients(r0, alpha)?;
    let [x1, x2, x3, ..] = x.x;
    let s = r0 + alpha;
    let d = r0 - 1.0;
    let a1 = 1.0 + alpha;
    Ok([
        Laurent::from_terms([(1, x1), (0, x2), (-1, x3)]),
        Laurent::from_terms([
            (2, x1 * x1),
            (1, -a1 * r0 / (s * s)),
            (0, -a1 * (r0 + 1.0) * r0 / (s * d * d)),
        ]),
        Laurent::from_terms([
            (3, x1.powi(3)),
            (1, -a1 * (r0 * r0 + 2.0 * a1 * r0 + alpha) * r0 / (s.powi(3) * d)),
        ]),
    ])
}

pub fn raw_moment_approx(p: &VerhulstParams) -> Result<RawMomentSet> {
    gate_verhulst(p)?;
    let n = p.n_f64();
    let s = raw_moment_series(p.r0, p.alpha)?;
    Ok(RawMomentSet {
        mu_bar: [s[0].eval(n), s[1].eval(n), s[2].eval(n)],
    })
}

/// Coefficients `x1 ..= x7` of the SIR expansion. The third-order leading
/// coefficients `x8`, `x9` are not determined by the solved equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirCoefficients {
    pub x: [f64; 7],
    pub x8: Option<f64>,
    pub x9: Option<f64>,
}

impl SirCoefficients {
    pub fn new(x: [f64; 7]) -> Self {
        Self { x, x8: None, x9: None }
    }

    /// `x_i`, 1-based, for `i <= 7`.
    pub fn get(&self, i: usize) -> f64 {
        self.x[i - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirCoefficientResiduals {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub d1: f64,
    pub e1: f64,
}

impl SirCoefficientResiduals {
    pub fn to_array(self) -> [f64; 7] {
        [self.a1, self.a2, self.b1, self.b2, self.c1, self.d1, self.e1]
    }

    pub fn max_abs(self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sir_coefficients(r0: f64, alpha: f64) -> Result<SirCoefficients> {
    require_above_threshold(r0)?;
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be > 1, got {alpha}")));
    }
    let d = r0 - 1.0;
    Ok(SirCoefficients::new([
        1.0 / r0,
        alpha / d,
        d / (alpha * r0),
        -1.0 / d,
        (r0 + alpha) / (r0 * r0),
        -1.0 / r0,
        (r0 * r0 + alpha * d) / (alpha * r0 * r0),
    ]))
}

pub fn sir_coefficient_residuals(x: &SirCoefficients, r0: f64, alpha: f64) -> SirCoefficientResiduals {
    let [x1, x2, x3, x4, x5, x6, x7] = x.x;
    let ar = alpha * r0;
    SirCoefficientResiduals {
        a1: 1.0 - ar * x1 * x3 - x1,
        a2: -ar * (x1 * x4 + x2 * x3 + x6) - x2,
        b1: ar * x1 * x3 - alpha * x3,
        b2: ar * (x1 * x4 + x2 * x3 + x6) - alpha * x4,
        c1: ar * (x1 * x3 - 2.0 * x1 * x6 - 2.0 * x3 * x5) + 1.0 + x1 - 2.0 * x5,
        d1: ar * (x1 * x6 + x3 * x5 - x1 * x3 - x1 * x7 - x3 * x6) - (alpha + 1.0) * x6,
        e1: ar * (x1 * x3 + 2.0 * x1 * x7 + 2.0 * x3 * x6) + alpha * (x3 - 2.0 * x7),
    }
}

/// Retained terms for `(kappa_10, kappa_01, kappa_20, kappa_11, kappa_02)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SirTermCounts {
    pub k10: u8,
    pub k01: u8,
    pub k20: u8,
    pub k11: u8,
    pub k02: u8,
}

impl Default for SirTermCounts {
    fn default() -> Self {
        Self {
            k10: 2,
            k01: 2,
            k20: 1,
            k11: 1,
            k02: 1,
        }
    }
}

impl SirTermCounts {
    /// Leading order only.
    pub fn one_term() -> Self {
        Self {
            k10: 1,
            k01: 1,
            k20: 1,
            k11: 1,
            k02: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (1..=2).contains(&self.k10)
            && (1..=2).contains(&self.k01)
            && self.k20 == 1
            && self.k11 == 1
            && self.k02 == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("SIR term counts {self:?} outside (1..=2, 1..=2, 1, 1, 1)")))
        }
    }
}

pub fn sir_cumulant_approx(p: &SirParams, terms: SirTermCounts) -> Result<BivariateCumulantSet> {
    gate_sir(p)?;
    terms.validate()?;
    let x = sir_coefficients(p.r0, p.alpha)?;
    let n = p.n_f64();
    let [x1, x2, x3, x4, x5, x6, x7] = x.x;
    let tail = |count: u8, v: f64| if count >= 2 { v } else { 0.0 };
    Ok(BivariateCumulantSet {
        k10: x1 * n + tail(terms.k10, x2),
        k01: x3 * n + tail(terms.k01, x4),
        k20: x5 * n,
        k11: x6 * n,
        k02: x7 * n,
        ..BivariateCumulantSet::default()
    })
}

/// Leading-order (diffusion) values of the five cumulants.
pub fn sir_diffusion_approx(p: &SirParams) -> Result<BivariateCumulantSet> {
    sir_cumulant_approx(p, SirTermCounts::one_term())
}

/// Serializable record of a Verhulst approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerhulstApproxReport {
    pub params: VerhulstParams,
    pub coefficients: VerhulstCoefficients,
    pub terms: TermCounts,
    pub cumulants: CumulantSet,
    pub raw_moments: RawMomentSet,
}

pub fn verhulst_approx_report(p: &VerhulstParams, terms: TermCounts) -> Result<VerhulstApproxReport> {
    Ok(VerhulstApproxReport {
        params: *p,
        coefficients: verhulst_coefficients(p.r0, p.alpha)?,
        terms,
        cumulants: cumulant_approx(p, terms)?,
        raw_moments: raw_moment_approx(p)?,
    })
}

/// Serializable record of an SIR approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirApproxReport {
    pub params: SirParams,
    pub coefficients: SirCoefficients,
    pub terms: SirTermCounts,
    pub cumulants: BivariateCumulantSet,
}

pub fn sir_approx_report(p: &SirParams, terms: SirTermCounts) -> Result<SirApproxReport> {
    Ok(SirApproxReport {
        params: *p,
        coefficients: sir_coefficients(p.r0, p.alpha)?,
        terms,
        cumulants: sir_cumulant_approx(p, terms)?,
    })
}
