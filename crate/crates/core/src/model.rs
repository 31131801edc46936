//! Model parametrizations and transition rates.
//!
//! The logistic (Verhulst) birth-death chain lives on `{0, .., N}` with
//!
//! ```text
//! lambda_n = mu * R0 * (1 - n/N) * n
//! mu_n     = mu * (1 + alpha * n/N) * n
//! ```
//!
//! and absorption at the origin. The SIS model is the `alpha = 0` case.
//! The older four-rate parametrization `(a1, a2, b1, b2)` maps onto this one
//! when `a1/b1` is an integer.
//!
//! The bivariate SIR chain with demography has four events: immigration of a
//! susceptible, death of a susceptible, infection and removal of an infected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for accepting `a1/b1` as an integer.
pub const CEILING_INTEGRALITY_TOL: f64 = 1e-9;

/// Standard parametrization of the logistic Verhulst model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerhulstParams {
    /// Maximum population size.
    #[serde(rename = "N")]
    pub n: usize,
    /// Threshold parameter.
    #[serde(rename = "R0")]
    pub r0: f64,
    /// Density dependence of the death rate.
    pub alpha: f64,
    /// Per-capita death rate (inverse time).
    pub mu: f64,
}

impl VerhulstParams {
    pub fn new(n: usize, r0: f64, alpha: f64, mu: f64) -> Result<Self> {
        let p = Self { n, r0, alpha, mu };
        p.validate()?;
        Ok(p)
    }

    /// SIS model: `alpha = 0`, `mu = 1`.
    pub fn sis(n: usize, r0: f64) -> Result<Self> {
        Self::new(n, r0, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(Error::InvalidParameter(format!("R0 must be positive, got {}", self.r0)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }

    /// Same parameters with the time scale set to `mu`.
    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..*self }
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }
}

/// Four-rate parametrization: `lambda_n = (a1 - b1 n) n`, `mu_n = (a2 + b2 n) n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegacyParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl LegacyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("a1", self.a1), ("a2", self.a2), ("b1", self.b1)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.b2.is_finite() && self.b2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "b2 must be non-negative, got {}",
                self.b2
            )));
        }
        Ok(())
    }
}

/// Per-state birth and death rates on `{0, .., N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathRates {
    /// `lambda_n`, indexed by state.
    pub birth: Vec<f64>,
    /// `mu_n`, indexed by state.
    pub death: Vec<f64>,
}

impl BirthDeathRates {
    pub fn new(birth: Vec<f64>, death: Vec<f64>) -> Result<Self> {
        let r = Self { birth, death };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.birth.len();
        if len < 2 || self.death.len() != len {
            return Err(Error::InvalidParameter(
                "rate vectors must have equal length N + 1 >= 2".into(),
            ));
        }
        let top = len - 1;
        if self.birth[0] != 0.0 || self.birth[top] != 0.0 || self.death[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "need lambda_0 = lambda_N = 0 and mu_0 = 0".into(),
            ));
        }
        if self.birth.iter().any(|&b| !(b.is_finite() && b >= 0.0)) {
            return Err(Error::InvalidParameter("birth rates must be finite and >= 0".into()));
        }
        if self.death[1..].iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::InvalidParameter("mu_n must be positive for n >= 1".into()));
        }
        Ok(())
    }

    /// Largest state `N`.
    pub fn max_state(&self) -> usize {
        self.birth.len() - 1
    }

    /// `max_n (lambda_n + mu_n)`.
    pub fn max_total_rate(&self) -> f64 {
        self.birth
            .iter()
            .zip(&self.death)
            .map(|(b, d)| b + d)
            .fold(0.0, f64::max)
    }
}

pub fn verhulst_rates(p: &VerhulstParams) -> Result<BirthDeathRates> {
    p.validate()?;
    let n_cap = p.n_f64();
    let (birth, death) = (0..=p.n)
        .map(|n| {
            let x = n as f64;
            let birth = p.mu * p.r0 * (1.0 - x / n_cap) * x;
            let death = p.mu * (1.0 + p.alpha * x / n_cap) * x;
            (birth, death)
        })
        .unzip();
    BirthDeathRates::new(birth, death)
}

pub fn legacy_to_standard(l: &LegacyParams) -> Result<VerhulstParams> {
    l.validate()?;
    let ratio = l.a1 / l.b1;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > CEILING_INTEGRALITY_TOL * ratio.abs() {
        return Err(Error::NonIntegralCeiling { ratio });
    }
    let n = rounded as usize;
    VerhulstParams::new(n, l.a1 / l.a2, l.b2 * rounded / l.a2, l.a2)
}

pub fn standard_to_legacy(p: &VerhulstParams) -> Result<LegacyParams> {
    p.validate()?;
    let n = p.n_f64();
    Ok(LegacyParams {
        a1: p.mu * p.r0,
        a2: p.mu,
        b1: p.mu * p.r0 / n,
        b2: p.mu * p.alpha / n,
    })
}

/// `rho = (R0 - 1) sqrt(N) / sqrt(1 + alpha)`; indexes the near-threshold regime.
pub fn transition_parameter_rho(p: &VerhulstParams) -> f64 {
    (p.r0 - 1.0) / (1.0 + p.alpha).sqrt() * p.n_f64().sqrt()
}

/// Reparametrized SIR model with demography.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirParams {
    /// Expected population size.
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R0")]
    pub r0: f64,
    /// `(gamma + mu) / mu`.
    pub alpha: f64,
    pub mu: f64,
}

impl SirParams {
    pub fn new(n: usize, r0: f64, alpha: f64, mu: f64) -> Result<Self> {
        let p = Self { n, r0, alpha, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(Error::InvalidParameter(format!("R0 must be positive, got {}", self.r0)));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must exceed 1 (recovery rate > 0), got {}",
                self.alpha
            )));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }

    /// Contact rate `beta = alpha mu R0`.
    pub fn beta(&self) -> f64 {
        self.alpha * self.mu * self.r0
    }

    /// Recovery rate `gamma = (alpha - 1) mu`.
    pub fn gamma(&self) -> f64 {
        (self.alpha - 1.0) * self.mu
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }
}

pub fn sir_params_from_rates(beta: f64, gamma: f64, mu: f64, n: usize) -> Result<SirParams> {
    for (name, v) in [("beta", beta), ("gamma", gamma), ("mu", mu)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    SirParams::new(n, beta / (gamma + mu), (gamma + mu) / mu, mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SirEventKind {
    Immigration,
    SusceptibleDeath,
    Infection,
    Removal,
}

impl SirEventKind {
    pub const ALL: [SirEventKind; 4] = [
        SirEventKind::Immigration,
        SirEventKind::SusceptibleDeath,
        SirEventKind::Infection,
        SirEventKind::Removal,
    ];

    /// State change `(delta_s, delta_i)`.
    pub fn delta(self) -> (i8, i8) {
        match self {
            SirEventKind::Immigration => (1, 0),
            SirEventKind::SusceptibleDeath => (-1, 0),
            SirEventKind::Infection => (-1, 1),
            SirEventKind::Removal => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirEvent {
    pub kind: SirEventKind,
    pub delta_s: i8,
    pub delta_i: i8,
    pub rate: f64,
}

/// All four events at `(s, i)`, zero-rate events included, in the order of
/// [`SirEventKind::ALL`].
pub fn sir_event_rates(p: &SirParams, s: u64, i: u64) -> [SirEvent; 4] {
    let (s, i) = (s as f64, i as f64);
    let n = p.n_f64();
    SirEventKind::ALL.map(|kind| {
        let rate = match kind {
            SirEventKind::Immigration => p.mu * n,
            SirEventKind::SusceptibleDeath => p.mu * s,
            SirEventKind::Infection => p.mu * p.alpha * p.r0 * s * i / n,
            SirEventKind::Removal => p.mu * p.alpha * i,
        };
        let (delta_s, delta_i) = kind.delta();
        SirEvent {
            kind,
            delta_s,
            delta_i,
            rate,
        }
    })
}
