//! Finite Laurent polynomials in the population size `N`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul};

/// `sum_k c_k N^k` over finitely many integer powers `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Laurent {
    terms: BTreeMap<i32, f64>,
}

impl Laurent {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(0, c)
    }

    pub fn monomial(power: i32, coeff: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(power, coeff);
        Self { terms }
    }

    /// Builds from `(power, coeff)` pairs; repeated powers are summed.
    pub fn from_terms(pairs: impl IntoIterator<Item = (i32, f64)>) -> Self {
        pairs.into_iter().fold(Self::zero(), |acc, (k, c)| acc + Self::monomial(k, c))
    }

    pub fn coeff(&self, power: i32) -> f64 {
        self.terms.get(&power).copied().unwrap_or(0.0)
    }

    pub fn max_power(&self) -> Option<i32> {
        self.terms.keys().next_back().copied()
    }

    /// Drops every power below `min_power`.
    pub fn truncate_below(&self, min_power: i32) -> Self {
        Self {
            terms: self.terms.range(min_power..).map(|(k, c)| (*k, *c)).collect(),
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.terms.iter().map(|(k, c)| c * n.powi(*k)).sum()
    }

    pub fn powers(&self) -> impl Iterator<Item = i32> + '_ {
        self.terms.keys().copied()
    }
}

impl Add for Laurent {
    type Output = Laurent;

    fn add(mut self, rhs: Laurent) -> Laurent {
        for (k, c) in rhs.terms {
            *self.terms.entry(k).or_insert(0.0) += c;
        }
        self
    }
}

impl Mul for &Laurent {
    type Output = Laurent;

    fn mul(self, rhs: &Laurent) -> Laurent {
        let mut out = Laurent::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                *out.terms.entry(ka + kb).or_insert(0.0) += ca * cb;
            }
        }
        out
    }
}

impl Mul<f64> for &Laurent {
    type Output = Laurent;

    fn mul(self, s: f64) -> Laurent {
        Laurent {
            terms: self.terms.iter().map(|(k, c)| (*k, c * s)).collect(),
        }
    }
}
